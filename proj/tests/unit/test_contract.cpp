#include <doctest.h>

#include "swarm_oracle/contract.hpp"

using namespace swarm_oracle;

namespace {

ContractParams params(Quota k, std::uint64_t issuance = 0,
                      DepositWeighting w = DepositWeighting::SupplyAdjusted) {
  ContractParams p;
  p.quota = k;
  p.issuance = TokenAmount(issuance);
  p.radius = 60.0;
  p.dimension = 3;
  p.weighting = w;
  return p;
}

Report report(const ContractState& s, RobotId robot, Observation obs, Vote vote,
              std::uint64_t nonce = 1, std::optional<ClusterId> target = std::nullopt) {
  return {std::move(obs), robot, s.required_deposit(robot), vote, target, nonce};
}

ClusterMember member(RobotId robot, std::uint64_t deposit, Vote vote, std::uint64_t supply = 1000) {
  Report r{{0, 0, 0}, robot, TokenAmount(deposit), vote, std::nullopt, 1};
  return {r, vote, false, TokenAmount(supply)};
}

Cluster cluster_of(std::vector<ClusterMember> members) {
  Cluster c;
  c.id = 1;
  for (auto& m : members) admit(c, std::move(m));
  return c;
}

void check_conservation(const ContractState& s) {
  REQUIRE(s.accounted_total() == s.supply());
  REQUIRE(s.supply().units() ==
          s.initial_supply().units() + s.params().issuance.units() * s.decisive_settlements());
  REQUIRE(s.open_clusters().size() <= s.params().quota.capacity());
}

}  // namespace

TEST_CASE("balances not divisible by the quota denominator need one more report") {
  // floor(10^6 / 3) * 8 falls two units short of 2T/9 for T = 12 * 10^6.
  auto s = ContractState::with_equal_shares(params({1, 3}), 12, TokenAmount(1'000'000));
  for (RobotId r = 1; r <= 8; ++r) {
    REQUIRE(s.apply_report(report(s, r, {1, 1, 1}, Vote::Accept)).settlements.empty());
  }
  CHECK(s.apply_report(report(s, 9, {1, 1, 1}, Vote::Accept)).settlements.size() == 1);
}

TEST_CASE("required deposit") {
  auto k1 = ContractState::with_equal_shares(params({1, 1}), 2, TokenAmount(1'000'000));
  CHECK(k1.required_deposit(1).units() == 1'000'000);
  auto k3 = ContractState::with_equal_shares(params({1, 3}), 2, TokenAmount(1'000'000));
  CHECK(k3.required_deposit(2).units() == 333'333);
  CHECK_THROWS_AS(k3.required_deposit(9), Error);

  auto broke = ContractState(params({1, 3}), {{1, TokenAmount(0)}, {2, TokenAmount(9)}});
  CHECK(broke.required_deposit(1).is_zero());
  Report r{{1, 1, 1}, 1, TokenAmount(0), Vote::Accept, std::nullopt, 1};
  CHECK(broke.apply_report(r).disposition == Disposition::Rejected);
}

TEST_CASE("default issuance is T0 over capacity") {
  CHECK(ContractParams::default_issuance(TokenAmount(12'000'000), Quota(1, 3)).units() == 4'000'000);
  CHECK(ContractParams::default_issuance(TokenAmount(12'000'000), Quota(1, 1)).units() ==
        12'000'000);
}

TEST_CASE("eighth aligned report settles, the seventh does not") {
  for (auto w : {DepositWeighting::Nominal, DepositWeighting::SupplyAdjusted}) {
    auto s = ContractState::with_equal_shares(params({1, 3}, 12'000'000, w), 12,
                                              TokenAmount(3'000'000));
    for (RobotId r = 1; r <= 7; ++r) {
      auto res = s.apply_report(report(s, r, {200, 40, 40}, Vote::Accept));
      REQUIRE(res.disposition == (r == 1 ? Disposition::Created : Disposition::Joined));
      REQUIRE(res.settlements.empty());
    }
    auto res = s.apply_report(report(s, 8, {200, 40, 40}, Vote::Accept));
    REQUIRE(res.settlements.size() == 1);
    CHECK(res.settlements[0].verdict == Verdict::Accepted);
    CHECK(res.settlements[0].pool.units() == 8'000'000);
    CHECK(s.consensus().size() == 1);
    CHECK(s.open_clusters().empty());
    check_conservation(s);
  }
}

TEST_CASE("quorum boundary is inclusive") {
  // T = 9000, K = 1/3: threshold pool = 2000.
  auto s = ContractState::with_equal_shares(params({1, 3}, 0, DepositWeighting::Nominal), 9,
                                            TokenAmount(1000));
  CHECK(s.quorum_reached(cluster_of({member(1, 1000, Vote::Accept), member(2, 1000, Vote::Accept)})));
  CHECK_FALSE(
      s.quorum_reached(cluster_of({member(1, 1000, Vote::Accept), member(2, 999, Vote::Accept)})));

  auto adj = ContractState::with_equal_shares(params({1, 3}), 9, TokenAmount(1000));
  CHECK(adj.quorum_reached(
      cluster_of({member(1, 1000, Vote::Accept, 9000), member(2, 1000, Vote::Accept, 9000)})));
  CHECK_FALSE(adj.quorum_reached(
      cluster_of({member(1, 1000, Vote::Accept, 9000), member(2, 999, Vote::Accept, 9000)})));

  auto full = ContractState::with_equal_shares(params({1, 1}, 0, DepositWeighting::Nominal), 3,
                                               TokenAmount(10));
  CHECK(full.quorum_reached(cluster_of(
      {member(1, 10, Vote::Accept), member(2, 10, Vote::Accept), member(3, 10, Vote::Reject)})));
}

TEST_CASE("weighted majority") {
  CHECK(weighted_majority(cluster_of({member(1, 10, Vote::Accept), member(2, 10, Vote::Accept),
                                      member(3, 10, Vote::Reject)})) == Vote::Accept);
  CHECK_FALSE(
      weighted_majority(cluster_of({member(1, 10, Vote::Accept), member(2, 10, Vote::Reject)})));
  CHECK(weighted_majority(cluster_of({member(1, 3, Vote::Accept), member(2, 4, Vote::Accept)})) ==
        Vote::Accept);
}

TEST_CASE("supply-adjusted majority counts shares of the supply at escrow") {
  // 10 of 1000 is a larger share than 15 of 2000.
  auto c = cluster_of({member(1, 10, Vote::Accept, 1000), member(2, 15, Vote::Reject, 2000)});
  CHECK(weighted_majority(c, DepositWeighting::Nominal) == Vote::Reject);
  CHECK(weighted_majority(c, DepositWeighting::SupplyAdjusted) == Vote::Accept);
  auto tie = cluster_of({member(1, 10, Vote::Accept, 1000), member(2, 20, Vote::Reject, 2000)});
  CHECK_FALSE(weighted_majority(tie, DepositWeighting::SupplyAdjusted));
  auto bad = cluster_of({member(1, 10, Vote::Accept, 0)});
  CHECK_THROWS_AS(weighted_majority(bad, DepositWeighting::SupplyAdjusted), Error);
}

TEST_CASE("settlement follows the gain rule") {
  auto c = cluster_of({member(1, 10, Vote::Accept), member(2, 10, Vote::Accept),
                       member(3, 10, Vote::Reject)});
  const auto out = compute_settlement(c, TokenAmount(30));
  CHECK(out.verdict == Verdict::Accepted);
  CHECK(out.issued.units() == 30);
  CHECK(out.winners == std::vector<RobotId>{1, 2});
  REQUIRE(out.transfers.size() == 3);
  CHECK(out.transfers[0] == Transfer{1, 20, TokenAmount(30)});
  CHECK(out.transfers[1] == Transfer{2, 20, TokenAmount(30)});
  CHECK(out.transfers[2] == Transfer{3, -10, TokenAmount(0)});

  auto unanimous = cluster_of({member(1, 7, Vote::Accept), member(2, 9, Vote::Accept)});
  const auto u = compute_settlement(unanimous, TokenAmount(0));
  for (const auto& t : u.transfers) CHECK(t.gain == 0);

  auto tie = cluster_of({member(1, 10, Vote::Accept), member(2, 10, Vote::Reject)});
  const auto a = compute_settlement(tie, TokenAmount(30));
  CHECK(a.verdict == Verdict::Annulled);
  CHECK(a.issued.is_zero());
  CHECK(a.transfers[0] == Transfer{1, 0, TokenAmount(10)});
  CHECK(a.transfers[1] == Transfer{2, 0, TokenAmount(10)});
}

TEST_CASE("settlement remainders go to the earliest winners") {
  auto c = cluster_of({member(1, 5, Vote::Reject), member(2, 5, Vote::Reject),
                       member(3, 5, Vote::Reject), member(4, 4, Vote::Accept)});
  const auto out = compute_settlement(c, TokenAmount(2));
  CHECK(out.verdict == Verdict::Rejected);
  // Forfeit 4 splits as 2,1,1 and the minted 2 as 1,1,0.
  CHECK(out.transfers[0].gain == 3);
  CHECK(out.transfers[1].gain == 2);
  CHECK(out.transfers[2].gain == 1);
  auto odd = compute_settlement(c, TokenAmount(1));
  CHECK(odd.transfers[0].gain == 3);
  CHECK(odd.transfers[1].gain == 1);
  CHECK(odd.transfers[2].gain == 1);
  CHECK(odd.transfers[3].gain == -4);
}

TEST_CASE("rejections leave the state untouched") {
  auto s = ContractState::with_equal_shares(params({1, 3}), 4, TokenAmount(900));
  const auto r = report(s, 1, {10, 10, 10}, Vote::Accept);
  CHECK(s.apply_report(r).disposition == Disposition::Created);
  const auto balances = s.balances();

  auto dup = s.apply_report(r);
  CHECK(dup.reason == RejectReason::DuplicateNonce);

  auto wrong = report(s, 2, {10, 10, 10}, Vote::Accept);
  wrong.deposit = TokenAmount(wrong.deposit.units() - 1);
  CHECK(s.apply_report(wrong).reason == RejectReason::WrongDeposit);

  auto rich = report(s, 3, {10, 10, 10}, Vote::Accept);
  rich.deposit = TokenAmount(901);
  CHECK(s.apply_report(rich).reason == RejectReason::InsufficientBalance);

  Report stranger{{1, 1, 1}, 42, TokenAmount(1), Vote::Accept, std::nullopt, 1};
  CHECK(s.apply_report(stranger).reason == RejectReason::UnknownRobot);

  auto flat = report(s, 2, {10, 10}, Vote::Accept, 2);
  CHECK(s.apply_report(flat).reason == RejectReason::Malformed);

  auto again = report(s, 1, {12, 12, 12}, Vote::Accept, 2);
  CHECK(s.apply_report(again).reason == RejectReason::DuplicateMember);

  CHECK(s.balances() == balances);
  CHECK(s.open_clusters().size() == 1);
  CHECK(s.rejected_reports() == 6);
  check_conservation(s);
}

TEST_CASE("a report far from every proposal at capacity is dropped and refunded") {
  auto s = ContractState::with_equal_shares(params({1, 3}), 12, TokenAmount(1'000'000));
  s.apply_report(report(s, 1, {0, 0, 0}, Vote::Accept));
  s.apply_report(report(s, 2, {200, 0, 0}, Vote::Accept));
  s.apply_report(report(s, 3, {0, 200, 0}, Vote::Accept));
  const auto before = s.balances().at(4);
  const auto res = s.apply_report(report(s, 4, {0, 0, 200}, Vote::Accept));
  CHECK(res.disposition == Disposition::Dropped);
  CHECK(s.balances().at(4) == before);
  CHECK(s.open_clusters().size() == 3);
  CHECK(s.has_processed({4, 1}));
  check_conservation(s);
}

TEST_CASE("targeted reports stay with their proposal") {
  auto s = ContractState::with_equal_shares(params({1, 3}), 12, TokenAmount(1'000'000));
  s.apply_report(report(s, 1, {0, 0, 0}, Vote::Accept));
  s.apply_report(report(s, 2, {200, 0, 0}, Vote::Accept));

  auto near = s.apply_report(report(s, 3, {10, 0, 0}, Vote::Accept, 1, ClusterId{1}));
  CHECK(near.cluster == ClusterId{1});
  CHECK_FALSE(near.coerced);

  auto far = s.apply_report(report(s, 4, {190, 0, 0}, Vote::Accept, 1, ClusterId{1}));
  CHECK(far.disposition == Disposition::Joined);
  CHECK(far.cluster == ClusterId{1});
  CHECK(far.coerced);
  CHECK(s.find_open(1)->members.back().counted_vote == Vote::Reject);

  // A settled or unknown target falls back to clustering.
  auto stale = s.apply_report(report(s, 5, {201, 0, 0}, Vote::Accept, 1, ClusterId{77}));
  CHECK(stale.cluster == ClusterId{2});
  check_conservation(s);
}

TEST_CASE("supply grows by the issuance at each decisive settlement") {
  auto s = ContractState::with_equal_shares(params({1, 1}, 3'000'000), 3, TokenAmount(1'000'000));
  s.apply_report(report(s, 1, {0, 0, 0}, Vote::Accept));
  auto res = s.apply_report(report(s, 2, {0, 0, 0}, Vote::Accept));
  REQUIRE(res.settlements.size() == 1);
  CHECK(s.supply().units() == 6'000'000);
  CHECK(s.balances().at(1).units() == 2'500'000);
  CHECK(s.balances().at(3).units() == 1'000'000);
  check_conservation(s);

  s.apply_report(report(s, 3, {0, 0, 0}, Vote::Accept, 2));
  s.apply_report(report(s, 1, {0, 0, 0}, Vote::Reject, 2));
  CHECK(s.open_clusters().size() == 1);
}

TEST_CASE("query snapshots proposals and consensus") {
  auto s = ContractState::with_equal_shares(params({1, 3}), 12, TokenAmount(3'000'000));
  auto q = s.query();
  CHECK(q.proposals.empty());
  CHECK(q.consensus.empty());

  s.apply_report(report(s, 1, {190, 50, 60}, Vote::Accept));
  q = s.query();
  REQUIRE(q.proposals.size() == 1);
  CHECK(q.proposals[0].centroid == Observation{190, 50, 60});
  CHECK(q.proposals[0].members == 1);

  for (RobotId r = 2; r <= 8; ++r) s.apply_report(report(s, r, {190, 50, 60}, Vote::Accept));
  CHECK(s.query().consensus.size() == 1);
}

TEST_CASE("weighting strings") {
  CHECK(deposit_weighting_from_string("nominal") == DepositWeighting::Nominal);
  CHECK(std::string(to_string(DepositWeighting::SupplyAdjusted)) == "supply_adjusted");
  CHECK_THROWS_AS(deposit_weighting_from_string("fancy"), Error);
}

TEST_CASE("deposit base decides what the quota multiplies") {
  SUBCASE("holdings keep the deposit fixed while escrow is open") {
    auto p = params({1, 3});
    p.deposit_base = DepositBase::Holdings;
    auto s = ContractState::with_equal_shares(p, 12, TokenAmount(3'000'000));
    REQUIRE(s.apply_report(report(s, 1, {0, 0, 0}, Vote::Accept, 1), 1).disposition ==
            Disposition::Created);
    CHECK(s.balances().at(1).units() == 2'000'000);
    CHECK(s.required_deposit(1).units() == 1'000'000);
    const auto far = s.apply_report(report(s, 1, {500, 0, 0}, Vote::Accept, 2), 1);
    CHECK(far.disposition == Disposition::Created);
    CHECK(s.required_deposit(1).units() == 1'000'000);
    REQUIRE(s.apply_report(report(s, 1, {0, 500, 0}, Vote::Accept, 3), 1).disposition ==
            Disposition::Created);
    CHECK(s.balances().at(1).is_zero());
    // Nothing free left to escrow.
    const auto broke = s.apply_report(report(s, 1, {500, 500, 0}, Vote::Accept, 4), 1);
    CHECK(broke.reason == RejectReason::InsufficientBalance);
    check_conservation(s);
  }
  SUBCASE("free balance shrinks the next deposit") {
    auto p = params({1, 3});
    p.deposit_base = DepositBase::FreeBalance;
    auto s = ContractState::with_equal_shares(p, 12, TokenAmount(3'000'000));
    s.apply_report(report(s, 1, {0, 0, 0}, Vote::Accept, 1), 1);
    CHECK(s.required_deposit(1).units() == 666'666);
    Report stale{{500, 0, 0}, 1, TokenAmount(1'000'000), Vote::Accept, std::nullopt, 2};
    CHECK(s.apply_report(stale, 1).reason == RejectReason::WrongDeposit);
  }
  CHECK(deposit_base_from_string("holdings") == DepositBase::Holdings);
  CHECK(std::string(to_string(DepositBase::FreeBalance)) == "free_balance");
  CHECK_THROWS_AS(deposit_base_from_string("all"), Error);
}
