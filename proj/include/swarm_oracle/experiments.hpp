#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "swarm_oracle/serialize.hpp"
#include "swarm_oracle/swarm.hpp"

namespace swarm_oracle {

enum class IssuanceMode : std::uint8_t { Zero, Default };
enum class StopKind : std::uint8_t { FirstAcceptedAgreement, MaxSimTime, AgreementCount };

const char* to_string(IssuanceMode mode);
const char* to_string(StopKind kind);

struct StopRule {
  StopKind kind = StopKind::FirstAcceptedAgreement;
  /// MaxSimTime: run length in simulated seconds.
  double seconds = 0.0;
  /// AgreementCount: accepted agreements to wait for.
  std::uint32_t count = 1;
  /// Hard cap for every rule, simulated seconds.
  double max_time = 7200.0;
};

struct ExperimentConfig {
  std::string name = "run";
  std::uint32_t robots = 12;
  std::uint32_t attackers = 0;
  BehaviorKind attack = BehaviorKind::SafetyAttacker;
  double radius = 60.0;
  Quota quota{1, 3};
  IssuanceMode issuance = IssuanceMode::Default;
  DepositWeighting weighting = DepositWeighting::SupplyAdjusted;
  DepositBase deposit_base = DepositBase::Holdings;
  /// Initial balance of every robot, whole tokens. T0 = robots * this. A
  /// multiple of the quota denominator keeps the first deposits exact, so
  /// 2/3 of the robots reach quorum without rounding loss.
  std::uint64_t tokens_per_robot = 3;
  std::vector<std::uint64_t> seeds{1};
  StopRule stop;
  /// Replay-mode dataset path; empty means synthetic sensing.
  std::string dataset;
  /// Keep the full event log in memory for the caller.
  bool keep_events = true;
  SwarmConfig swarm;

  /// Throws a descriptive Error for inconsistent settings.
  void validate() const;

  /// Loads a JSON key/value tree; unknown keys are an error.
  static ExperimentConfig from_json(const Json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Flat echo of the experiment parameters, stamped into every output row.
  Json to_json() const;

  TokenAmount initial_supply() const;
  TokenAmount issuance_amount() const;
  /// Robot ids playing the attacker role: 1..attackers.
  std::vector<RobotId> attacker_ids() const;
};

struct AgreementRecord {
  /// 1-based ordinal among decisive (accepted or rejected) settlements.
  std::uint32_t index = 0;
  /// 1-based ordinal among accepted agreements; 0 for rejections.
  std::uint32_t accepted_index = 0;
  Verdict verdict = Verdict::Rejected;
  ClusterId cluster = 0;
  RobotId founder = 0;
  bool attacker_founded = false;
  /// Landmark named in the founding report; empty when the log lacks it.
  std::string founder_landmark;
  Observation centroid;
  double time = 0.0;
  /// Accepted only: time since the previous accepted agreement (or t = 0).
  double duration = 0.0;
  /// Accepted only: honest reports sent inside that window.
  std::uint64_t honest_reports = 0;
  std::optional<double> error;
};

struct SharePoint {
  /// 0 for the initial state, otherwise the decisive settlement ordinal.
  std::uint32_t settlement = 0;
  double time = 0.0;
  double share = 0.0;
  std::uint64_t attacker_units = 0;
  std::uint64_t supply_units = 0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::vector<AgreementRecord> agreements;
  std::vector<SharePoint> attacker_share;
  DelaySummary block_delay;
  std::vector<Delivery> deliveries;
  Observation reference;
  std::optional<Observation> baseline;
  std::optional<double> baseline_error;
  bool violated_safety = false;
  std::uint64_t reports = 0;
  std::uint64_t honest_reports = 0;
  std::size_t max_open_clusters = 0;
  double end_time = 0.0;
  bool stop_reached = false;
};

struct RunResult {
  ExperimentConfig config;
  std::uint64_t seed = 0;
  RunMetrics metrics;
  /// Line-delimited event log (empty unless keep_events).
  std::string events;
  std::string chain;
  std::vector<std::string> node_digests;
  std::string replay_digest;
};

/// Euclidean distance; throws on dimension mismatch.
double consensus_error(const Observation& agreement, const Observation& reference);

/// Unweighted mean; throws on an empty input.
Observation baseline_average(const std::vector<Observation>& observations);

/// Per accepted agreement, the time since the previous accepted agreement.
std::vector<double> time_to_consensus(const std::vector<Json>& log);

/// Per accepted agreement, the honest reports sent since the previous one.
std::vector<std::uint64_t> reports_to_consensus(const std::vector<Json>& log);

/// Recomputes every metric from an event log. The log must start with the
/// run header record.
RunMetrics metrics_from_log(const std::vector<Json>& log);

/// Parses a line-delimited event log.
std::vector<Json> parse_event_log(const std::string& text);

/// Simulates one (config, seed) pair. Throws when the replicas disagree with
/// each other or with the replayed chain.
RunResult run(const ExperimentConfig& config, std::uint64_t seed);

/// Runs every (config, seed) job on up to `threads` workers; results keep the
/// job order.
std::vector<RunResult> run_all(const std::vector<ExperimentConfig>& configs, unsigned threads = 0);

/// Cartesian product of `base` over the lists in `grid` (keys are config
/// keys). Each point gets a descriptive name.
std::vector<ExperimentConfig> expand_matrix(const Json& matrix);

/// Writes the plot tables, event logs, chains and the manifest into `dir`.
/// Fails hard on any replica digest mismatch.
void emit(const std::vector<RunResult>& results, const std::filesystem::path& dir);

}  // namespace swarm_oracle
