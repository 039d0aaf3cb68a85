#include "swarm_oracle/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <tuple>

namespace swarm_oracle {

namespace {
constexpr double kUnknown = -1.0;
}

void GossipConfig::validate() const {
  if (!(comm_range > 0.0) || !(block_period > 0.0) || !(tick > 0.0)) {
    throw Error("gossip configuration values must be positive");
  }
}

NodeView::NodeView(RobotId robot, ContractState genesis)
    : robot_(robot), state_(std::move(genesis)) {}

void NodeView::apply(const Block& block) {
  for (const auto& tx : block.txs) state_.apply_report(tx, block.index);
  chain_head_ = block.index;
}

std::size_t NodeView::receive(const Block& block) {
  if (block.index <= chain_head_) return 0;
  if (block.index != chain_head_ + 1) {
    buffer_.emplace(block.index, block);
    return 0;
  }
  apply(block);
  std::size_t applied = 1;
  for (auto it = buffer_.find(chain_head_ + 1); it != buffer_.end();
       it = buffer_.find(chain_head_ + 1)) {
    apply(it->second);
    buffer_.erase(it);
    ++applied;
  }
  return applied;
}

void apply_block(NodeView& view, const Block& block) {
  if (block.index != view.chain_head() + 1) {
    throw Error("block " + std::to_string(block.index) + " does not extend head " +
                std::to_string(view.chain_head()));
  }
  view.receive(block);
}

ContractState replay(ContractState genesis, std::span<const Block> chain) {
  std::uint64_t expected = 1;
  for (const auto& block : chain) {
    if (block.index != expected) {
      throw Error("non-contiguous chain: expected block " + std::to_string(expected) + ", found " +
                  std::to_string(block.index));
    }
    for (const auto& tx : block.txs) genesis.apply_report(tx, block.index);
    ++expected;
  }
  return genesis;
}

DelaySummary block_delay_stats(std::span<const Delivery> deliveries, std::size_t missing) {
  DelaySummary s;
  s.missing = missing;
  s.samples = deliveries.size();
  if (deliveries.empty()) return s;
  std::vector<double> delays;
  delays.reserve(deliveries.size());
  for (const auto& d : deliveries) delays.push_back(d.delay);
  s.mean = std::accumulate(delays.begin(), delays.end(), 0.0) / static_cast<double>(delays.size());
  std::sort(delays.begin(), delays.end());
  // nearest-rank percentile
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(delays.size())));
  s.p90 = delays[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

std::vector<std::pair<double, double>> delay_cdf(std::span<const Delivery> deliveries) {
  std::vector<double> delays;
  delays.reserve(deliveries.size());
  for (const auto& d : deliveries) delays.push_back(d.delay);
  std::sort(delays.begin(), delays.end());
  std::vector<std::pair<double, double>> rows;
  const double n = static_cast<double>(delays.size());
  for (std::size_t i = 0; i < delays.size(); ++i) {
    if (i + 1 < delays.size() && delays[i + 1] == delays[i]) continue;
    rows.emplace_back(delays[i], static_cast<double>(i + 1) / n);
  }
  return rows;
}

Ledger::Ledger(std::uint32_t robot_count, ContractState genesis, GossipConfig config)
    : config_(config), genesis_(genesis), canonical_(genesis), offline_(robot_count, false) {
  config_.validate();
  views_.reserve(robot_count);
  for (RobotId r = 1; r <= robot_count; ++r) views_.emplace_back(r, genesis);
  nodes_.resize(robot_count);
}

void Ledger::submit(const Report& report, double now) {
  if (report.robot == 0 || report.robot > views_.size()) {
    throw Error("transaction from unknown robot " + std::to_string(report.robot));
  }
  const auto key = key_of(report);
  if (tx_index_.contains(key)) return;
  const std::size_t idx = txs_.size();
  txs_.push_back(report);
  tx_index_.emplace(key, idx);
  auto& node = nodes_[report.robot - 1];
  node.txs.set(idx);
  node.tx_time.resize(txs_.size(), kUnknown);
  node.tx_time[idx] = now;
}

void Ledger::learn_block(std::size_t node, std::size_t block_pos, double now) {
  auto& n = nodes_[node];
  n.blocks.set(block_pos);
  if (n.block_time.size() <= block_pos) n.block_time.resize(block_pos + 1, kUnknown);
  n.block_time[block_pos] = now;
}

void Ledger::gossip_step(const Proximity& proximity, double now) {
  if (proximity.empty()) return;
  // Snapshot so that information travels one hop per step.
  std::vector<DynamicBitset> old_txs;
  std::vector<DynamicBitset> old_blocks;
  old_txs.reserve(nodes_.size());
  old_blocks.reserve(nodes_.size());
  for (const auto& n : nodes_) {
    old_txs.push_back(n.txs);
    old_blocks.push_back(n.blocks);
  }
  for (const auto& [a, b] : proximity) {
    for (auto [to, from] : {std::pair{a, b}, std::pair{b, a}}) {
      auto& dst = nodes_[to];
      dst.txs.merge(old_txs[from], [&](std::size_t idx) {
        if (dst.tx_time.size() <= idx) dst.tx_time.resize(txs_.size(), kUnknown);
        dst.tx_time[idx] = now;
      });
      dst.blocks.merge(old_blocks[from], [&](std::size_t pos) {
        if (dst.block_time.size() <= pos) dst.block_time.resize(chain_.size(), kUnknown);
        dst.block_time[pos] = now;
      });
    }
  }
}

RobotId Ledger::scheduled_sealer(std::uint64_t slot) const {
  if (views_.empty()) return 0;
  return static_cast<RobotId>(slot % views_.size()) + 1;
}

void Ledger::set_offline(RobotId robot, bool offline) { offline_.at(robot - 1) = offline; }

std::optional<SealResult> Ledger::seal_block(std::uint64_t slot, double now) {
  const RobotId sealer = scheduled_sealer(slot);
  if (sealer == 0) return std::nullopt;
  if (offline_[sealer - 1]) return std::nullopt;
  auto& node = nodes_[sealer - 1];

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < txs_.size(); ++i) {
    if (node.txs.test(i) && !included_.test(i)) pending.push_back(i);
  }
  std::sort(pending.begin(), pending.end(), [&](std::size_t a, std::size_t b) {
    return std::tuple(node.tx_time[a], txs_[a].robot, txs_[a].nonce) <
           std::tuple(node.tx_time[b], txs_[b].robot, txs_[b].nonce);
  });

  Block block;
  block.index = chain_.size() + 1;
  block.sealer = sealer;
  block.timestamp = now;
  block.txs.reserve(pending.size());
  for (std::size_t i : pending) {
    included_.set(i);
    block.txs.push_back(txs_[i]);
  }
  chain_.push_back(std::move(block));
  learn_block(sealer - 1, chain_.size() - 1, now);

  SealResult result;
  result.block = &chain_.back();
  for (const auto& tx : chain_.back().txs) {
    result.applied.emplace_back(tx, canonical_.apply_report(tx, chain_.back().index));
  }
  return result;
}

void Ledger::deliver() {
  for (std::size_t n = 0; n < views_.size(); ++n) {
    auto& view = views_[n];
    const auto& known = nodes_[n].blocks;
    while (view.chain_head() < chain_.size() && known.test(view.chain_head())) {
      view.receive(chain_[view.chain_head()]);
    }
  }
}

std::size_t Ledger::force_sync(double now) {
  std::size_t behind = 0;
  for (std::size_t n = 0; n < views_.size(); ++n) {
    bool was_behind = false;
    for (std::size_t pos = 0; pos < chain_.size(); ++pos) {
      if (!nodes_[n].blocks.test(pos)) {
        learn_block(n, pos, now);
        was_behind = true;
      }
    }
    if (was_behind) ++behind;
  }
  deliver();
  return behind;
}

bool Ledger::knows_tx(RobotId robot, const ReportKey& key) const {
  auto it = tx_index_.find(key);
  return it != tx_index_.end() && nodes_.at(robot - 1).txs.test(it->second);
}

bool Ledger::knows_block(RobotId robot, std::uint64_t index) const {
  return index >= 1 && nodes_.at(robot - 1).blocks.test(index - 1);
}

bool Ledger::is_included(const ReportKey& key) const {
  auto it = tx_index_.find(key);
  return it != tx_index_.end() && included_.test(it->second);
}

std::size_t Ledger::mempool_size(RobotId robot) const {
  const auto& node = nodes_.at(robot - 1);
  std::size_t count = 0;
  for (std::size_t i = 0; i < txs_.size(); ++i) {
    if (node.txs.test(i) && !included_.test(i)) ++count;
  }
  return count;
}

std::vector<Delivery> Ledger::deliveries() const {
  std::vector<Delivery> out;
  for (std::size_t pos = 0; pos < chain_.size(); ++pos) {
    const auto& block = chain_[pos];
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      if (n + 1 == block.sealer) continue;
      if (!nodes_[n].blocks.test(pos)) continue;
      out.push_back({block.index, static_cast<RobotId>(n + 1),
                     nodes_[n].block_time[pos] - block.timestamp});
    }
  }
  return out;
}

std::size_t Ledger::undelivered() const {
  std::size_t missing = 0;
  for (std::size_t pos = 0; pos < chain_.size(); ++pos) {
    for (std::size_t n = 0; n < nodes_.size(); ++n) {
      if (!nodes_[n].blocks.test(pos)) ++missing;
    }
  }
  return missing;
}

Json genesis_to_json(const ContractState& genesis) {
  const auto& p = genesis.params();
  Json balances = Json::array();
  for (const auto& [robot, amount] : genesis.balances()) balances.push_back({robot, amount.units()});
  return {{"v", kSchemaVersion},
          {"index", 0},
          {"genesis",
           {{"quota", p.quota.to_string()},
            {"issuance", p.issuance.units()},
            {"radius", p.radius},
            {"dimension", p.dimension},
            {"weighting", to_string(p.weighting)},
            {"deposit_base", to_string(p.deposit_base)},
            {"balances", std::move(balances)}}}};
}

ContractState genesis_from_json(const Json& j) {
  try {
    const auto& g = j.at("genesis");
    ContractParams params;
    params.quota = Quota::parse(g.at("quota").get<std::string>());
    params.issuance = TokenAmount(g.at("issuance").get<std::uint64_t>());
    params.radius = g.at("radius").get<double>();
    params.dimension = g.at("dimension").get<std::size_t>();
    params.weighting = deposit_weighting_from_string(g.at("weighting").get<std::string>());
    params.deposit_base = deposit_base_from_string(g.at("deposit_base").get<std::string>());
    std::map<RobotId, TokenAmount> balances;
    for (const auto& row : g.at("balances")) {
      balances.emplace(row.at(0).get<RobotId>(), TokenAmount(row.at(1).get<std::uint64_t>()));
    }
    return ContractState(params, std::move(balances));
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed genesis record: ") + e.what());
  }
}

Json to_json(const Block& block) {
  Json txs = Json::array();
  for (const auto& tx : block.txs) txs.push_back(to_json(tx));
  return {{"v", kSchemaVersion},
          {"index", block.index},
          {"sealer", block.sealer},
          {"timestamp", block.timestamp},
          {"txs", std::move(txs)}};
}

Block block_from_json(const Json& j) {
  try {
    Block b;
    b.index = j.at("index").get<std::uint64_t>();
    b.sealer = j.at("sealer").get<RobotId>();
    b.timestamp = j.at("timestamp").get<double>();
    for (const auto& tx : j.at("txs")) b.txs.push_back(report_from_json(tx));
    return b;
  } catch (const Json::exception& e) {
    throw Error(std::string("malformed block record: ") + e.what());
  }
}

std::string export_chain(const ContractState& genesis, std::span<const Block> chain) {
  std::string out = genesis_to_json(genesis).dump();
  out += '\n';
  for (const auto& block : chain) {
    out += to_json(block).dump();
    out += '\n';
  }
  return out;
}

ParsedChain parse_chain(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::optional<ContractState> genesis;
  std::vector<Block> blocks;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw Error("chain line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("genesis")) {
      if (genesis) throw Error("chain has more than one genesis record");
      genesis = genesis_from_json(j);
    } else {
      blocks.push_back(block_from_json(j));
    }
  }
  if (!genesis) throw Error("chain has no genesis record");
  return {std::move(*genesis), std::move(blocks)};
}

}  // namespace swarm_oracle
