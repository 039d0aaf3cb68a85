#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "swarm_oracle/contract.hpp"
#include "swarm_oracle/serialize.hpp"

namespace swarm_oracle {

struct GossipConfig {
  /// Radio range between robot centres, meters.
  double comm_range = 0.15;
  double block_period = 10.0;
  double tick = 0.1;

  void validate() const;
};

struct Block {
  std::uint64_t index = 0;
  RobotId sealer = 0;
  double timestamp = 0.0;
  std::vector<Report> txs;
};

/// Growable bitset over transaction / block indices.
class DynamicBitset {
 public:
  void resize(std::size_t bits) { words_.resize((bits + 63) / 64, 0); }
  std::size_t word_count() const { return words_.size(); }
  bool test(std::size_t i) const {
    return i / 64 < words_.size() && ((words_[i / 64] >> (i % 64)) & 1U) != 0;
  }
  void set(std::size_t i) {
    if (i / 64 >= words_.size()) words_.resize(i / 64 + 1, 0);
    words_[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  /// ORs `other` into this set and reports every newly set bit.
  template <typename F>
  void merge(const DynamicBitset& other, F&& on_new) {
    if (other.words_.size() > words_.size()) words_.resize(other.words_.size(), 0);
    for (std::size_t w = 0; w < other.words_.size(); ++w) {
      std::uint64_t fresh = other.words_[w] & ~words_[w];
      if (fresh == 0) continue;
      words_[w] |= fresh;
      while (fresh != 0) {
        const int bit = __builtin_ctzll(fresh);
        on_new(w * 64 + static_cast<std::size_t>(bit));
        fresh &= fresh - 1;
      }
    }
  }

 private:
  std::vector<std::uint64_t> words_;
};

/// One robot's replica: the blocks it holds and the contract state folded
/// from blocks 1..chain_head. Blocks ahead of a gap wait in a buffer.
class NodeView {
 public:
  NodeView(RobotId robot, ContractState genesis);

  RobotId robot() const { return robot_; }
  std::uint64_t chain_head() const { return chain_head_; }
  const ContractState& local_state() const { return state_; }
  std::size_t buffered() const { return buffer_.size(); }

  /// Applies `block` if it extends the head (then drains the buffer),
  /// otherwise buffers it. Returns the number of blocks applied.
  std::size_t receive(const Block& block);

 private:
  void apply(const Block& block);

  RobotId robot_;
  std::uint64_t chain_head_ = 0;
  ContractState state_;
  std::map<std::uint64_t, Block> buffer_;
};

/// Applies one block that directly extends the view's head.
void apply_block(NodeView& view, const Block& block);

/// Folds every transaction of a contiguous chain (indices 1..n) into `genesis`.
ContractState replay(ContractState genesis, std::span<const Block> chain);

struct DelaySummary {
  double mean = 0.0;
  double p90 = 0.0;
  std::size_t samples = 0;
  std::size_t missing = 0;
};

/// A delivery of a block to a robot; `delay` is reception time minus sealing time.
struct Delivery {
  std::uint64_t block = 0;
  RobotId robot = 0;
  double delay = 0.0;
};

DelaySummary block_delay_stats(std::span<const Delivery> deliveries, std::size_t missing = 0);

/// (delay seconds, cumulative probability) rows.
std::vector<std::pair<double, double>> delay_cdf(std::span<const Delivery> deliveries);

/// Undirected proximity graph as an edge list over robot indices (0-based).
using Proximity = std::vector<std::pair<std::size_t, std::size_t>>;

/// Settlements produced while the canonical chain folded a sealed block.
struct SealResult {
  const Block* block = nullptr;
  std::vector<std::pair<Report, ApplyResult>> applied;
};

/// Fork-free proof-of-authority ledger shared by N robots: epidemic gossip of
/// transactions and blocks over a proximity graph, a rotating sealer per slot
/// and per-robot replicas.
class Ledger {
 public:
  Ledger(std::uint32_t robot_count, ContractState genesis, GossipConfig config);

  const GossipConfig& config() const { return config_; }
  std::uint32_t robot_count() const { return static_cast<std::uint32_t>(views_.size()); }

  /// Injects a transaction into its author's mempool.
  void submit(const Report& report, double now);

  /// Synchronous exchange: every adjacent pair ends the step holding the
  /// union of what either held at the start of the step.
  void gossip_step(const Proximity& proximity, double now);

  /// Round-robin schedule: slot k is sealed by robot (k mod N) + 1.
  RobotId scheduled_sealer(std::uint64_t slot) const;

  /// Seals slot `slot` at time `now` unless its sealer is offline. The block
  /// holds the sealer's not-yet-included transactions ordered by
  /// (reception time, robot, nonce) and is applied to the canonical state.
  std::optional<SealResult> seal_block(std::uint64_t slot, double now);

  /// Every view applies whatever contiguous blocks it has received.
  void deliver();

  /// Hands every missing block to every view (end-of-run synchronisation).
  /// Returns how many views were behind.
  std::size_t force_sync(double now);

  void set_offline(RobotId robot, bool offline);

  const NodeView& view(RobotId robot) const { return views_.at(robot - 1); }
  const std::vector<NodeView>& views() const { return views_; }
  const std::vector<Block>& chain() const { return chain_; }
  const ContractState& canonical_state() const { return canonical_; }
  const ContractState& genesis() const { return genesis_; }
  bool knows_tx(RobotId robot, const ReportKey& key) const;
  bool knows_block(RobotId robot, std::uint64_t index) const;
  bool is_included(const ReportKey& key) const;
  std::size_t mempool_size(RobotId robot) const;

  /// Reception delays for every (block, robot other than the sealer) pair.
  std::vector<Delivery> deliveries() const;
  /// Pairs of (block, robot) that never received the block.
  std::size_t undelivered() const;

 private:
  struct NodeLedger {
    DynamicBitset txs;
    DynamicBitset blocks;
    std::vector<double> tx_time;
    std::vector<double> block_time;
  };

  void learn_block(std::size_t node, std::size_t block_pos, double now);

  GossipConfig config_;
  ContractState genesis_;
  ContractState canonical_;
  std::vector<NodeView> views_;
  std::vector<NodeLedger> nodes_;
  std::vector<Report> txs_;
  std::map<ReportKey, std::size_t> tx_index_;
  DynamicBitset included_;
  std::vector<Block> chain_;
  std::vector<bool> offline_;
};

/// Line-delimited chain export: a genesis record (index 0) followed by one
/// record per block.
Json genesis_to_json(const ContractState& genesis);
ContractState genesis_from_json(const Json& j);
Json to_json(const Block& block);
Block block_from_json(const Json& j);

std::string export_chain(const ContractState& genesis, std::span<const Block> chain);

struct ParsedChain {
  ContractState genesis;
  std::vector<Block> blocks;
};
ParsedChain parse_chain(const std::string& text);

}  // namespace swarm_oracle
