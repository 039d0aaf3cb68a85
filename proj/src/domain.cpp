#include "swarm_oracle/domain.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace swarm_oracle {

TokenAmount& TokenAmount::operator+=(TokenAmount other) {
  if (units_ > std::numeric_limits<std::uint64_t>::max() - other.units_) {
    throw Error("token amount overflow");
  }
  units_ += other.units_;
  return *this;
}

TokenAmount& TokenAmount::operator-=(TokenAmount other) {
  if (other.units_ > units_) {
    throw Error("token amount underflow");
  }
  units_ -= other.units_;
  return *this;
}

Quota::Quota(std::uint32_t numerator, std::uint32_t denominator)
    : num_(numerator), den_(denominator) {
  if (num_ == 0 || den_ == 0 || num_ > den_) {
    throw Error("deposit quota must lie in (0, 1]: " + std::to_string(num_) + "/" +
                std::to_string(den_));
  }
}

TokenAmount Quota::floor_times(TokenAmount amount) const {
  const unsigned __int128 product = static_cast<unsigned __int128>(amount.units()) * num_;
  return TokenAmount(static_cast<std::uint64_t>(product / den_));
}

namespace {

std::uint32_t parse_u32(std::string_view text, const std::string& whole) {
  std::uint32_t value = 0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw Error("malformed deposit quota '" + whole + "'");
  }
  return value;
}

}  // namespace

Quota Quota::parse(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) {
    return Quota(parse_u32(text, text), 1);
  }
  const std::string_view view(text);
  return Quota(parse_u32(view.substr(0, slash), text), parse_u32(view.substr(slash + 1), text));
}

std::string Quota::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

Observation::Observation(std::vector<double> components) : components_(std::move(components)) {}

Observation::Observation(std::initializer_list<double> components) : components_(components) {}

const char* to_string(Vote vote) {
  return vote == Vote::Accept ? "accept" : "reject";
}

Vote vote_from_string(const std::string& text) {
  if (text == "accept") return Vote::Accept;
  if (text == "reject") return Vote::Reject;
  throw Error("unknown vote '" + text + "'");
}

void Report::validate() const {
  if (robot == 0) throw Error("report robot id must be >= 1");
  if (deposit.is_zero()) throw Error("report deposit must be positive");
  if (observation.dimension() == 0) throw Error("report observation is empty");
  for (double c : observation.components()) {
    if (!std::isfinite(c)) throw Error("report observation has a non-finite component");
  }
}

std::vector<TokenAmount> proportional_split(TokenAmount pool, std::size_t recipient_count) {
  if (recipient_count == 0) throw Error("no recipients");
  const std::uint64_t n = recipient_count;
  const std::uint64_t base = pool.units() / n;
  const std::uint64_t extra = pool.units() % n;
  std::vector<TokenAmount> shares;
  shares.reserve(recipient_count);
  for (std::uint64_t i = 0; i < n; ++i) {
    shares.emplace_back(base + (i < extra ? 1 : 0));
  }
  return shares;
}

std::vector<TokenAmount> proportional_split(TokenAmount pool, std::span<const RobotId> recipients) {
  return proportional_split(pool, recipients.size());
}

}  // namespace swarm_oracle
