#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "swarm_oracle/clustering.hpp"
#include "swarm_oracle/domain.hpp"

namespace swarm_oracle {

/// How escrowed deposits count toward quorum and majority once the supply has
/// grown. Nominal compares raw deposits with the current supply. SupplyAdjusted
/// scales each deposit by current supply / supply at escrow time, i.e. it
/// counts the share of the supply the deposit represented when it was made.
enum class DepositWeighting : std::uint8_t { Nominal, SupplyAdjusted };

const char* to_string(DepositWeighting w);
DepositWeighting deposit_weighting_from_string(const std::string& text);

/// What the deposit quota multiplies. FreeBalance takes K of the unescrowed
/// balance. Holdings takes K of everything the robot owns, escrow included,
/// so a robot can back each of the floor(1/K) open proposals with the same
/// deposit.
enum class DepositBase : std::uint8_t { FreeBalance, Holdings };

const char* to_string(DepositBase b);
DepositBase deposit_base_from_string(const std::string& text);

struct ContractParams {
  Quota quota{1, 3};
  /// Tokens minted at every decisive settlement.
  TokenAmount issuance;
  /// Clustering threshold in observation units.
  double radius = 60.0;
  std::size_t dimension = 3;
  DepositWeighting weighting = DepositWeighting::SupplyAdjusted;
  DepositBase deposit_base = DepositBase::Holdings;

  /// T0 / floor(1/K), the issuance used throughout the experiments.
  static TokenAmount default_issuance(TokenAmount initial_supply, const Quota& quota);
};

enum class Verdict : std::uint8_t { Accepted, Rejected, Annulled };

const char* to_string(Verdict verdict);

/// Per-robot effect of a settlement. `gain` is the reputation gain of the
/// member's report (negative deposit for losers); `credited` is what returns
/// from escrow plus minted tokens.
struct Transfer {
  RobotId robot = 0;
  std::int64_t gain = 0;
  TokenAmount credited;
  friend bool operator==(const Transfer&, const Transfer&) = default;
};

struct SettlementOutcome {
  ClusterId cluster = 0;
  Verdict verdict = Verdict::Annulled;
  std::vector<RobotId> winners;
  std::vector<Transfer> transfers;
  TokenAmount issued;
  TokenAmount pool;
  Observation centroid;
  std::uint64_t block_index = 0;
  /// Author and nonce of the report that founded the cluster.
  RobotId founder = 0;
  std::uint64_t founder_nonce = 0;
};

/// The unique vote whose deposits strictly exceed half the pool, if any.
std::optional<Vote> weighted_majority(const Cluster& cluster,
                                      DepositWeighting weighting = DepositWeighting::Nominal);

/// Evaluates the reward rule for a quorate cluster: winners get their deposit
/// back, an equal share of the losers' deposits and an equal share of
/// `issuance`; losers forfeit. Without a strict majority every deposit is
/// refunded and nothing is minted. Remainders go to the earliest winners.
SettlementOutcome compute_settlement(const Cluster& cluster, TokenAmount issuance,
                                     DepositWeighting weighting = DepositWeighting::Nominal);

struct AcceptedAgreement {
  ClusterId cluster = 0;
  Observation value;
  std::uint64_t block_index = 0;
  friend bool operator==(const AcceptedAgreement&, const AcceptedAgreement&) = default;
};

enum class Disposition : std::uint8_t { Joined, Created, Dropped, Rejected };
enum class RejectReason : std::uint8_t {
  None,
  UnknownRobot,
  Malformed,
  DuplicateNonce,
  WrongDeposit,
  InsufficientBalance,
  DuplicateMember,
};

const char* to_string(Disposition d);
const char* to_string(RejectReason r);

struct ApplyResult {
  Disposition disposition = Disposition::Rejected;
  RejectReason reason = RejectReason::None;
  std::optional<ClusterId> cluster;
  bool coerced = false;
  std::vector<SettlementOutcome> settlements;
};

struct ProposalView {
  ClusterId id = 0;
  Observation centroid;
  TokenAmount pool;
  std::size_t members = 0;
};

struct QueryResult {
  std::vector<ProposalView> proposals;
  std::vector<AcceptedAgreement> consensus;
};

/// Replicated oracle contract. Advanced only by `apply_report` over the
/// globally ordered report stream; every replica fed the same stream ends in
/// the same state.
class ContractState {
 public:
  ContractState(ContractParams params, std::map<RobotId, TokenAmount> initial_balances);

  /// Equal initial shares for robots 1..robot_count.
  static ContractState with_equal_shares(ContractParams params, std::uint32_t robot_count,
                                         TokenAmount share);

  /// floor(K * free balance) or floor(K * holdings), per the deposit base.
  /// Throws for an unknown robot.
  TokenAmount required_deposit(RobotId robot) const;

  ApplyResult apply_report(const Report& report, std::uint64_t block_index = 0);

  /// 3 * pool >= 2 * K * supply, evaluated exactly. Under SupplyAdjusted
  /// weighting the pool is the sum of deposit / supply-at-escrow shares and
  /// the right-hand side is 2 * K.
  bool quorum_reached(const Cluster& cluster) const;

  QueryResult query() const;

  const ContractParams& params() const { return params_; }
  const std::map<RobotId, TokenAmount>& balances() const { return balances_; }
  const std::map<ClusterId, TokenAmount>& escrow() const { return escrow_; }
  const std::vector<Cluster>& open_clusters() const { return clusters_; }
  const std::vector<AcceptedAgreement>& consensus() const { return consensus_; }
  const std::vector<ReportKey>& applied_log() const { return applied_log_; }
  TokenAmount supply() const { return supply_; }
  TokenAmount initial_supply() const { return initial_supply_; }
  std::uint64_t decisive_settlements() const { return decisive_settlements_; }
  std::uint64_t rejected_reports() const { return rejected_reports_; }
  ClusterId next_cluster_id() const { return next_cluster_id_; }
  bool has_processed(const ReportKey& key) const { return processed_.contains(key); }

  const Cluster* find_open(ClusterId id) const;

  /// Free balance plus deposits escrowed in open clusters.
  TokenAmount holdings(RobotId robot) const;

  /// Sum of balances and escrow; equals supply in every reachable state.
  TokenAmount accounted_total() const;

 private:
  ApplyResult reject(const Report& report, RejectReason reason);
  SettlementOutcome settle(std::size_t cluster_index, std::uint64_t block_index);

  ContractParams params_;
  std::map<RobotId, TokenAmount> balances_;
  std::map<ClusterId, TokenAmount> escrow_;
  std::vector<Cluster> clusters_;
  std::vector<AcceptedAgreement> consensus_;
  std::vector<ReportKey> applied_log_;
  std::set<ReportKey> processed_;
  TokenAmount supply_;
  TokenAmount initial_supply_;
  std::uint64_t decisive_settlements_ = 0;
  std::uint64_t rejected_reports_ = 0;
  ClusterId next_cluster_id_ = 1;
};

}  // namespace swarm_oracle
