#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "swarm_oracle/contract.hpp"

namespace swarm_oracle {

using Json = nlohmann::json;

/// Format version stamped into every canonical record.
inline constexpr int kSchemaVersion = 1;

Json to_json(const Observation& obs);
Observation observation_from_json(const Json& j);

Json to_json(const Report& report);
Report report_from_json(const Json& j);

Json to_json(const SettlementOutcome& outcome);

/// Canonical, byte-stable encoding of the full contract state: balances in
/// robot order, escrow and clusters in id order, consensus set in order.
Json to_json(const ContractState& state);

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(const std::string& data);

/// Digest of the canonical state encoding. Equal states give equal digests.
std::string state_digest(const ContractState& state);

}  // namespace swarm_oracle
