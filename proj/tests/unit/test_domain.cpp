#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "swarm_oracle/domain.hpp"

using namespace swarm_oracle;

namespace {

std::uint64_t sum_units(const std::vector<TokenAmount>& v) {
  std::uint64_t s = 0;
  for (auto t : v) s += t.units();
  return s;
}

}  // namespace

TEST_CASE("token amounts are exact and never negative") {
  CHECK(TokenAmount::tokens(3).units() == 3'000'000);
  TokenAmount a(5);
  a += TokenAmount(7);
  CHECK(a.units() == 12);
  CHECK((a - TokenAmount(12)).is_zero());
  CHECK_THROWS_AS(a - TokenAmount(13), Error);
  CHECK_THROWS_AS(TokenAmount(~0ULL) + TokenAmount(1), Error);
  CHECK(TokenAmount(1) < TokenAmount(2));
}

TEST_CASE("quota floor multiplication") {
  CHECK(Quota(1, 1).floor_times(TokenAmount(1'000'000)).units() == 1'000'000);
  CHECK(Quota(1, 3).floor_times(TokenAmount(1'000'000)).units() == 333'333);
  CHECK(Quota(1, 3).floor_times(TokenAmount(0)).is_zero());
  CHECK(Quota(2, 3).floor_times(TokenAmount(~0ULL)).units() == (~0ULL / 3) * 2);
  CHECK(Quota(1, 3).capacity() == 3);
  CHECK(Quota(2, 5).capacity() == 2);
  CHECK(Quota(1, 1).capacity() == 1);
}

TEST_CASE("quota parsing and bounds") {
  CHECK(Quota::parse("1/3") == Quota(1, 3));
  CHECK(Quota::parse("1") == Quota(1, 1));
  CHECK(Quota::parse("1/3").to_string() == "1/3");
  CHECK(Quota::parse("1").to_string() == "1");
  CHECK_THROWS_AS(Quota::parse("abc"), Error);
  CHECK_THROWS_AS(Quota::parse("1/"), Error);
  CHECK_THROWS_AS(Quota(0, 3), Error);
  CHECK_THROWS_AS(Quota(4, 3), Error);
  CHECK_THROWS_AS(Quota(1, 0), Error);
}

TEST_CASE("vote strings") {
  CHECK(std::string(to_string(Vote::Accept)) == "accept");
  CHECK(vote_from_string("reject") == Vote::Reject);
  CHECK_THROWS_AS(vote_from_string("abstain"), Error);
}

TEST_CASE("report structural validation") {
  Report r{{1.0, 2.0, 3.0}, 1, TokenAmount(5), Vote::Accept, std::nullopt, 1};
  CHECK_NOTHROW(r.validate());
  auto zero_deposit = r;
  zero_deposit.deposit = TokenAmount(0);
  CHECK_THROWS_AS(zero_deposit.validate(), Error);
  auto no_robot = r;
  no_robot.robot = 0;
  CHECK_THROWS_AS(no_robot.validate(), Error);
  auto nan = r;
  nan.observation = Observation{1.0, std::nan(""), 0.0};
  CHECK_THROWS_AS(nan.validate(), Error);
  auto empty = r;
  empty.observation = Observation{};
  CHECK_THROWS_AS(empty.validate(), Error);
}

TEST_CASE("proportional split examples") {
  const std::vector<RobotId> three{1, 2, 3};
  auto s = proportional_split(TokenAmount(9), three);
  CHECK(s == std::vector<TokenAmount>{TokenAmount(3), TokenAmount(3), TokenAmount(3)});
  s = proportional_split(TokenAmount(10), three);
  CHECK(s == std::vector<TokenAmount>{TokenAmount(4), TokenAmount(3), TokenAmount(3)});
  const std::vector<RobotId> one{7};
  CHECK(proportional_split(TokenAmount(0), one) == std::vector<TokenAmount>{TokenAmount(0)});
  CHECK_THROWS_WITH_AS(proportional_split(TokenAmount(5), std::vector<RobotId>{}), "no recipients",
                       Error);
}

TEST_CASE("proportional split conserves every pool up to 10^4 over up to 12 recipients") {
  for (std::uint64_t pool = 0; pool <= 10'000; ++pool) {
    for (std::size_t n = 1; n <= 12; ++n) {
      const auto s = proportional_split(TokenAmount(pool), n);
      REQUIRE(s.size() == n);
      REQUIRE(sum_units(s) == pool);
      const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
      REQUIRE(hi->units() - lo->units() <= 1);
      // Extra units sit at the front.
      REQUIRE(std::is_sorted(s.rbegin(), s.rend()));
    }
  }
}
