#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace swarm_oracle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using RobotId = std::uint32_t;
using ClusterId = std::uint64_t;

/// Indivisible base units per whole reputation token.
inline constexpr std::uint64_t kUnitsPerToken = 1'000'000;

/// Non-negative reputation token quantity in base units. Arithmetic is exact;
/// subtraction below zero throws instead of wrapping.
class TokenAmount {
 public:
  constexpr TokenAmount() = default;
  constexpr explicit TokenAmount(std::uint64_t units) : units_(units) {}

  static constexpr TokenAmount tokens(std::uint64_t whole) {
    return TokenAmount(whole * kUnitsPerToken);
  }

  constexpr std::uint64_t units() const { return units_; }
  constexpr bool is_zero() const { return units_ == 0; }

  TokenAmount& operator+=(TokenAmount other);
  TokenAmount& operator-=(TokenAmount other);

  friend TokenAmount operator+(TokenAmount a, TokenAmount b) { return a += b; }
  friend TokenAmount operator-(TokenAmount a, TokenAmount b) { return a -= b; }
  friend constexpr auto operator<=>(TokenAmount, TokenAmount) = default;

 private:
  std::uint64_t units_ = 0;
};

/// Exact positive rational in (0, 1], used for the deposit quota.
class Quota {
 public:
  Quota(std::uint32_t numerator, std::uint32_t denominator);

  std::uint32_t numerator() const { return num_; }
  std::uint32_t denominator() const { return den_; }
  double value() const { return static_cast<double>(num_) / den_; }

  /// floor(1 / quota): the maximum number of simultaneously open proposals.
  std::uint32_t capacity() const { return den_ / num_; }

  /// floor(quota * amount), computed without intermediate rounding.
  TokenAmount floor_times(TokenAmount amount) const;

  /// Accepts "a/b" or a bare integer numerator over 1.
  static Quota parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const Quota&, const Quota&) = default;

 private:
  std::uint32_t num_;
  std::uint32_t den_;
};

/// A point in observation space (RGB for the landmark scenario).
class Observation {
 public:
  Observation() = default;
  explicit Observation(std::vector<double> components);
  Observation(std::initializer_list<double> components);

  std::size_t dimension() const { return components_.size(); }
  std::span<const double> components() const { return components_; }
  double operator[](std::size_t i) const { return components_[i]; }

  friend bool operator==(const Observation&, const Observation&) = default;

 private:
  std::vector<double> components_;
};

enum class Vote : std::uint8_t { Accept, Reject };

const char* to_string(Vote vote);
Vote vote_from_string(const std::string& text);

/// One robot's contribution to the oracle, carried as a ledger transaction.
struct Report {
  Observation observation;
  RobotId robot = 0;
  TokenAmount deposit;
  Vote vote = Vote::Reject;
  std::optional<ClusterId> target;
  std::uint64_t nonce = 0;

  /// Throws when the report violates structural invariants (deposit > 0,
  /// finite components, robot id >= 1).
  void validate() const;
};

/// Identity of a report on the ledger.
struct ReportKey {
  RobotId robot = 0;
  std::uint64_t nonce = 0;
  friend auto operator<=>(const ReportKey&, const ReportKey&) = default;
};

inline ReportKey key_of(const Report& r) { return {r.robot, r.nonce}; }

/// Splits `pool` into `recipient_count` shares that sum exactly to `pool` and
/// differ by at most one base unit. The first (pool mod n) recipients, in the
/// order given, receive the extra unit.
std::vector<TokenAmount> proportional_split(TokenAmount pool, std::size_t recipient_count);

/// Convenience overload keyed by recipients (order is significant).
std::vector<TokenAmount> proportional_split(TokenAmount pool, std::span<const RobotId> recipients);

}  // namespace swarm_oracle
