#include "swarm_oracle/contract.hpp"

#include <algorithm>

#include <boost/multiprecision/cpp_int.hpp>

namespace swarm_oracle {

using u128 = unsigned __int128;
using Rational = boost::multiprecision::cpp_rational;

namespace {

Rational share_of_supply(const ClusterMember& m) {
  if (m.supply.is_zero()) throw Error("member escrowed without a supply snapshot");
  return Rational(m.report.deposit.units()) / Rational(m.supply.units());
}

}  // namespace

const char* to_string(DepositWeighting w) {
  return w == DepositWeighting::Nominal ? "nominal" : "supply_adjusted";
}

DepositWeighting deposit_weighting_from_string(const std::string& text) {
  if (text == "nominal") return DepositWeighting::Nominal;
  if (text == "supply_adjusted") return DepositWeighting::SupplyAdjusted;
  throw Error("unknown deposit weighting '" + text + "'");
}

const char* to_string(DepositBase b) {
  return b == DepositBase::FreeBalance ? "free_balance" : "holdings";
}

DepositBase deposit_base_from_string(const std::string& text) {
  if (text == "free_balance") return DepositBase::FreeBalance;
  if (text == "holdings") return DepositBase::Holdings;
  throw Error("unknown deposit base '" + text + "'");
}

TokenAmount ContractParams::default_issuance(TokenAmount initial_supply, const Quota& quota) {
  return TokenAmount(initial_supply.units() / quota.capacity());
}

const char* to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Accepted: return "accepted";
    case Verdict::Rejected: return "rejected";
    case Verdict::Annulled: return "annulled";
  }
  return "unknown";
}

const char* to_string(Disposition d) {
  switch (d) {
    case Disposition::Joined: return "joined";
    case Disposition::Created: return "created";
    case Disposition::Dropped: return "dropped";
    case Disposition::Rejected: return "rejected";
  }
  return "unknown";
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "none";
    case RejectReason::UnknownRobot: return "unknown_robot";
    case RejectReason::Malformed: return "malformed";
    case RejectReason::DuplicateNonce: return "duplicate_nonce";
    case RejectReason::WrongDeposit: return "wrong_deposit";
    case RejectReason::InsufficientBalance: return "insufficient_balance";
    case RejectReason::DuplicateMember: return "duplicate_member";
  }
  return "unknown";
}

std::optional<Vote> weighted_majority(const Cluster& cluster, DepositWeighting weighting) {
  if (weighting == DepositWeighting::SupplyAdjusted) {
    Rational accept = 0;
    Rational reject = 0;
    for (const auto& m : cluster.members) {
      (m.counted_vote == Vote::Accept ? accept : reject) += share_of_supply(m);
    }
    if (accept > reject) return Vote::Accept;
    if (reject > accept) return Vote::Reject;
    return std::nullopt;
  }
  u128 accept = 0;
  u128 total = 0;
  for (const auto& m : cluster.members) {
    total += m.report.deposit.units();
    if (m.counted_vote == Vote::Accept) accept += m.report.deposit.units();
  }
  const u128 reject = total - accept;
  // strict majority: 2 * side > total
  if (2 * accept > total) return Vote::Accept;
  if (2 * reject > total) return Vote::Reject;
  return std::nullopt;
}

SettlementOutcome compute_settlement(const Cluster& cluster, TokenAmount issuance,
                                     DepositWeighting weighting) {
  SettlementOutcome out;
  out.cluster = cluster.id;
  out.pool = cluster.pool;
  out.centroid = cluster.centroid;
  if (!cluster.members.empty()) {
    out.founder = cluster.members.front().report.robot;
    out.founder_nonce = cluster.members.front().report.nonce;
  }

  const auto majority = weighted_majority(cluster, weighting);
  if (!majority) {
    out.verdict = Verdict::Annulled;
    for (const auto& m : cluster.members) {
      out.transfers.push_back({m.report.robot, 0, m.report.deposit});
    }
    return out;
  }

  out.verdict = *majority == Vote::Accept ? Verdict::Accepted : Verdict::Rejected;
  out.issued = issuance;

  TokenAmount forfeited;
  for (const auto& m : cluster.members) {
    if (m.counted_vote == *majority) {
      out.winners.push_back(m.report.robot);
    } else {
      forfeited += m.report.deposit;
    }
  }
  // A strict majority always has at least one member.
  const auto loser_shares = proportional_split(forfeited, out.winners.size());
  const auto minted_shares = proportional_split(issuance, out.winners.size());

  std::size_t w = 0;
  for (const auto& m : cluster.members) {
    if (m.counted_vote == *majority) {
      const TokenAmount reward = loser_shares[w] + minted_shares[w];
      out.transfers.push_back({m.report.robot, static_cast<std::int64_t>(reward.units()),
                               m.report.deposit + reward});
      ++w;
    } else {
      out.transfers.push_back(
          {m.report.robot, -static_cast<std::int64_t>(m.report.deposit.units()), TokenAmount{}});
    }
  }
  return out;
}

ContractState::ContractState(ContractParams params,
                             std::map<RobotId, TokenAmount> initial_balances)
    : params_(std::move(params)), balances_(std::move(initial_balances)) {
  if (!(params_.radius > 0.0)) throw Error("clustering threshold must be positive");
  if (params_.dimension == 0) throw Error("observation dimension must be positive");
  for (const auto& [robot, amount] : balances_) {
    if (robot == 0) throw Error("robot ids start at 1");
    supply_ += amount;
  }
  initial_supply_ = supply_;
}

ContractState ContractState::with_equal_shares(ContractParams params, std::uint32_t robot_count,
                                               TokenAmount share) {
  std::map<RobotId, TokenAmount> balances;
  for (RobotId r = 1; r <= robot_count; ++r) balances.emplace(r, share);
  return ContractState(std::move(params), std::move(balances));
}

TokenAmount ContractState::required_deposit(RobotId robot) const {
  auto it = balances_.find(robot);
  if (it == balances_.end()) throw Error("unknown robot " + std::to_string(robot));
  if (params_.deposit_base == DepositBase::Holdings) return params_.quota.floor_times(holdings(robot));
  return params_.quota.floor_times(it->second);
}

bool ContractState::quorum_reached(const Cluster& cluster) const {
  if (params_.weighting == DepositWeighting::SupplyAdjusted) {
    Rational shares = 0;
    for (const auto& m : cluster.members) shares += share_of_supply(m);
    return shares * 3 * params_.quota.denominator() >= Rational(2 * params_.quota.numerator());
  }
  const u128 lhs = static_cast<u128>(cluster.pool.units()) * 3 * params_.quota.denominator();
  const u128 rhs = static_cast<u128>(supply_.units()) * 2 * params_.quota.numerator();
  return lhs >= rhs;
}

const Cluster* ContractState::find_open(ClusterId id) const {
  for (const auto& c : clusters_) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

TokenAmount ContractState::holdings(RobotId robot) const {
  TokenAmount total;
  if (auto it = balances_.find(robot); it != balances_.end()) total = it->second;
  for (const auto& c : clusters_) {
    for (const auto& m : c.members) {
      if (m.report.robot == robot) total += m.report.deposit;
    }
  }
  return total;
}

TokenAmount ContractState::accounted_total() const {
  TokenAmount total;
  for (const auto& [_, amount] : balances_) total += amount;
  for (const auto& [_, amount] : escrow_) total += amount;
  return total;
}

ApplyResult ContractState::reject(const Report& report, RejectReason reason) {
  if (reason != RejectReason::DuplicateNonce) {
    processed_.insert(key_of(report));
    applied_log_.push_back(key_of(report));
  }
  ++rejected_reports_;
  ApplyResult result;
  result.disposition = Disposition::Rejected;
  result.reason = reason;
  return result;
}

ApplyResult ContractState::apply_report(const Report& report, std::uint64_t block_index) {
  if (processed_.contains(key_of(report))) return reject(report, RejectReason::DuplicateNonce);
  auto balance_it = balances_.find(report.robot);
  if (balance_it == balances_.end()) return reject(report, RejectReason::UnknownRobot);
  try {
    report.validate();
  } catch (const Error&) {
    return reject(report, RejectReason::Malformed);
  }
  if (report.observation.dimension() != params_.dimension) {
    return reject(report, RejectReason::Malformed);
  }
  if (report.deposit > balance_it->second) {
    return reject(report, RejectReason::InsufficientBalance);
  }
  if (report.deposit != required_deposit(report.robot)) {
    return reject(report, RejectReason::WrongDeposit);
  }

  ApplyResult result;
  std::size_t index = clusters_.size();
  ClusterMember member{report, report.vote, false, supply_};

  if (report.target) {
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
      if (clusters_[i].id == *report.target) index = i;
    }
  }

  if (index < clusters_.size()) {
    // Targeted validation: stays with the intended proposal; an observation
    // outside the threshold counts against it.
    if (distance(clusters_[index].centroid, report.observation) > params_.radius) {
      member.counted_vote = Vote::Reject;
      member.coerced = true;
    }
    result.disposition = Disposition::Joined;
  } else {
    const auto decision = assign(report.observation, clusters_, params_.radius,
                                 params_.quota.capacity(), next_cluster_id_);
    if (std::holds_alternative<Dropped>(decision)) {
      processed_.insert(key_of(report));
      applied_log_.push_back(key_of(report));
      result.disposition = Disposition::Dropped;
      return result;
    }
    if (const auto* joined = std::get_if<Joined>(&decision)) {
      for (std::size_t i = 0; i < clusters_.size(); ++i) {
        if (clusters_[i].id == joined->id) index = i;
      }
      result.disposition = Disposition::Joined;
    } else {
      Cluster fresh;
      fresh.id = next_cluster_id_++;
      clusters_.push_back(std::move(fresh));
      index = clusters_.size() - 1;
      result.disposition = Disposition::Created;
    }
  }

  if (result.disposition == Disposition::Joined && clusters_[index].has_member(report.robot)) {
    return reject(report, RejectReason::DuplicateMember);
  }

  processed_.insert(key_of(report));
  applied_log_.push_back(key_of(report));
  balance_it->second -= report.deposit;
  escrow_[clusters_[index].id] += report.deposit;
  result.cluster = clusters_[index].id;
  result.coerced = member.coerced;
  admit(clusters_[index], std::move(member));

  // Supply grows after each decisive settlement, so the threshold is
  // re-evaluated per cluster against the current supply.
  for (std::size_t i = 0; i < clusters_.size();) {
    if (quorum_reached(clusters_[i])) {
      result.settlements.push_back(settle(i, block_index));
    } else {
      ++i;
    }
  }
  return result;
}

SettlementOutcome ContractState::settle(std::size_t cluster_index, std::uint64_t block_index) {
  Cluster& cluster = clusters_[cluster_index];
  SettlementOutcome outcome = compute_settlement(cluster, params_.issuance, params_.weighting);
  outcome.block_index = block_index;

  escrow_.erase(cluster.id);
  for (const auto& t : outcome.transfers) balances_.at(t.robot) += t.credited;
  supply_ += outcome.issued;
  if (outcome.verdict != Verdict::Annulled) ++decisive_settlements_;
  if (outcome.verdict == Verdict::Accepted) {
    consensus_.push_back({cluster.id, cluster.centroid, block_index});
  }
  clusters_.erase(clusters_.begin() + static_cast<std::ptrdiff_t>(cluster_index));
  return outcome;
}

QueryResult ContractState::query() const {
  QueryResult q;
  for (const auto& c : clusters_) {
    q.proposals.push_back({c.id, c.centroid, c.pool, c.members.size()});
  }
  q.consensus = consensus_;
  return q;
}

}  // namespace swarm_oracle
