#include "swarm_oracle/serialize.hpp"

#include <array>
#include <cstdio>

#include <openssl/sha.h>

namespace swarm_oracle {

Json to_json(const Observation& obs) {
  Json arr = Json::array();
  for (double c : obs.components()) arr.push_back(c);
  return arr;
}

Observation observation_from_json(const Json& j) {
  if (!j.is_array()) throw Error("observation must be an array");
  std::vector<double> comps;
  comps.reserve(j.size());
  for (const auto& c : j) comps.push_back(c.get<double>());
  return Observation(std::move(comps));
}

Json to_json(const Report& report) {
  Json j;
  j["v"] = kSchemaVersion;
  j["robot"] = report.robot;
  j["nonce"] = report.nonce;
  j["deposit"] = report.deposit.units();
  j["vote"] = to_string(report.vote);
  j["obs"] = to_json(report.observation);
  j["target"] = report.target ? Json(*report.target) : Json(nullptr);
  return j;
}

Report report_from_json(const Json& j) {
  try {
    if (j.at("v").get<int>() != kSchemaVersion) {
      throw Error("unsupported report schema version " + j.at("v").dump());
    }
    Report r;
    r.robot = j.at("robot").get<RobotId>();
    r.nonce = j.at("nonce").get<std::uint64_t>();
    r.deposit = TokenAmount(j.at("deposit").get<std::uint64_t>());
    r.vote = vote_from_string(j.at("vote").get<std::string>());
    r.observation = observation_from_json(j.at("obs"));
    if (!j.at("target").is_null()) r.target = j.at("target").get<ClusterId>();
    return r;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed report record: ") + e.what());
  }
}

Json to_json(const SettlementOutcome& outcome) {
  Json j;
  j["cluster"] = outcome.cluster;
  j["verdict"] = to_string(outcome.verdict);
  j["centroid"] = to_json(outcome.centroid);
  j["pool"] = outcome.pool.units();
  j["issued"] = outcome.issued.units();
  j["founder"] = outcome.founder;
  j["founder_nonce"] = outcome.founder_nonce;
  j["block"] = outcome.block_index;
  Json transfers = Json::array();
  for (const auto& t : outcome.transfers) {
    transfers.push_back({{"robot", t.robot}, {"gain", t.gain}, {"credited", t.credited.units()}});
  }
  j["transfers"] = std::move(transfers);
  return j;
}

namespace {

Json cluster_json(const Cluster& c) {
  Json members = Json::array();
  for (const auto& m : c.members) {
    members.push_back({{"report", to_json(m.report)},
                       {"counted_vote", to_string(m.counted_vote)},
                       {"coerced", m.coerced},
                       {"supply", m.supply.units()}});
  }
  return {{"id", c.id},
          {"status", to_string(c.status)},
          {"pool", c.pool.units()},
          {"centroid", to_json(c.centroid)},
          {"members", std::move(members)}};
}

}  // namespace

Json to_json(const ContractState& state) {
  Json j;
  j["v"] = kSchemaVersion;
  const auto& p = state.params();
  j["params"] = {{"quota", p.quota.to_string()},
                 {"issuance", p.issuance.units()},
                 {"radius", p.radius},
                 {"dimension", p.dimension},
                 {"weighting", to_string(p.weighting)},
                 {"deposit_base", to_string(p.deposit_base)}};
  Json balances = Json::array();
  for (const auto& [robot, amount] : state.balances()) balances.push_back({robot, amount.units()});
  j["balances"] = std::move(balances);
  Json escrow = Json::array();
  for (const auto& [id, amount] : state.escrow()) escrow.push_back({id, amount.units()});
  j["escrow"] = std::move(escrow);
  Json clusters = Json::array();
  for (const auto& c : state.open_clusters()) clusters.push_back(cluster_json(c));
  j["clusters"] = std::move(clusters);
  Json consensus = Json::array();
  for (const auto& a : state.consensus()) {
    consensus.push_back({{"cluster", a.cluster}, {"value", to_json(a.value)}, {"block", a.block_index}});
  }
  j["consensus"] = std::move(consensus);
  Json log = Json::array();
  for (const auto& k : state.applied_log()) log.push_back({k.robot, k.nonce});
  j["applied_log"] = std::move(log);
  j["supply"] = state.supply().units();
  j["initial_supply"] = state.initial_supply().units();
  j["decisive_settlements"] = state.decisive_settlements();
  j["rejected_reports"] = state.rejected_reports();
  j["next_cluster_id"] = state.next_cluster_id();
  return j;
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> md{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md.data());
  std::string hex;
  hex.reserve(md.size() * 2);
  char buf[3];
  for (unsigned char b : md) {
    std::snprintf(buf, sizeof(buf), "%02x", b);
    hex += buf;
  }
  return hex;
}

std::string state_digest(const ContractState& state) {
  return sha256_hex(to_json(state).dump());
}

}  // namespace swarm_oracle
