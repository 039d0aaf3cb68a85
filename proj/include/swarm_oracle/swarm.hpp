#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "swarm_oracle/contract.hpp"
#include "swarm_oracle/ledger.hpp"
#include "swarm_oracle/serialize.hpp"

namespace swarm_oracle {

using Rng = std::mt19937_64;

enum class BehaviorKind : std::uint8_t { Honest, SafetyAttacker, LivenessAttacker, CombinedAttacker, PhysicalAttacker };
enum class FsmState : std::uint8_t { Query, Validate, Explore, Report };

const char* to_string(BehaviorKind kind);
BehaviorKind behavior_from_string(const std::string& text);
const char* to_string(FsmState state);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

double norm(Vec2 v);
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }

struct Landmark {
  std::string name;
  Vec2 position;
  Observation true_color;
  bool valuable = false;
  double tag_range = 0.10;
  std::uint32_t occupancy_slots = 6;
};

/// Recorded per-robot colour readings: rows of (robot, colour name, R, G, B).
class ObservationDataset {
 public:
  static ObservationDataset parse(const std::string& text);
  static ObservationDataset load(const std::string& path);

  void add(RobotId robot, const std::string& color, Observation obs);
  std::size_t size() const { return total_; }
  bool empty() const { return total_ == 0; }

  /// Uniform draw from the robot's own rows for `color`, falling back to all
  /// robots' rows for that colour. Returns nothing when the colour is unknown.
  std::optional<Observation> sample(RobotId robot, const std::string& color, Rng& rng) const;

  /// Mean of rows for `color` whose robot is in `robots` (all robots if empty).
  std::optional<Observation> mean(const std::string& color, const std::set<RobotId>& robots) const;

 private:
  std::map<std::pair<RobotId, std::string>, std::vector<Observation>> by_robot_;
  std::map<std::string, std::vector<Observation>> by_color_;
  std::size_t total_ = 0;
};

struct SensingConfig {
  /// Per-robot systematic offset, per component standard deviation.
  double bias_sigma = 6.0;
  /// Per-reading Gaussian noise, per component standard deviation.
  double noise_sigma = 8.0;
  /// Chance that a reading is a gross fault with `outlier_sigma` noise.
  double outlier_probability = 0.02;
  double outlier_sigma = 45.0;
  /// Noise multiplier for robots near a parked physical attacker.
  double corruption_radius = 0.25;
  double corruption_factor = 3.0;
  /// Replay mode: readings come from this dataset instead of the noise model.
  std::optional<ObservationDataset> dataset;
};

struct SwarmConfig {
  double arena_width = 2.0;
  double arena_height = 2.0;
  std::vector<Landmark> landmarks = default_landmarks();
  std::uint32_t robots = 12;
  double speed = 0.1;
  double robot_radius = 0.035;
  double landmark_radius = 0.03;
  /// Distance from a landmark centre at which robots park to read the tag.
  double slot_radius = 0.09;
  /// Robots closer than this to their goal try to reserve a slot or wait.
  double queue_radius = 0.3;
  double state_timeout = 100.0;
  /// Standard deviation of per-tick heading noise, radians.
  double heading_jitter = 0.15;
  /// Camera field of view in radians, centred on the heading. About 60 degrees
  /// for a small front-facing camera; 2*pi makes the robot see all around.
  double field_of_view = 1.05;
  /// Farthest distance at which a landmark's colour can be made out.
  double sensing_range = 3.0;
  SensingConfig sensing;
  GossipConfig gossip;

  static std::vector<Landmark> default_landmarks();
  void validate() const;
};

struct PendingTx {
  std::uint64_t nonce = 0;
  TokenAmount deposit;
  std::size_t landmark = 0;
};

struct RobotState {
  RobotId id = 0;
  Vec2 pos;
  double heading = 0.0;
  FsmState fsm = FsmState::Query;
  std::optional<ClusterId> target;
  double state_timer = 0.0;
  BehaviorKind behavior = BehaviorKind::Honest;
  Observation bias;
  /// Clusters this robot already validated (local memory).
  std::set<ClusterId> validated;
  /// Landmark currently steered to, if any.
  std::optional<std::size_t> goal;
  /// Reserved occupancy slot at `goal`.
  std::optional<std::size_t> slot;
  std::optional<std::size_t> last_landmark;
  bool parked = false;
  std::uint64_t next_nonce = 1;
  std::vector<PendingTx> pending;
  std::optional<Vec2> move_to;
};

struct World {
  SwarmConfig config;
  std::vector<Landmark> landmarks;
  std::vector<RobotState> robots;
  /// occupancy[l][s]: index of the robot holding slot s of landmark l.
  std::vector<std::vector<std::optional<std::size_t>>> occupancy;
  Rng rng;
  std::uint64_t ticks = 0;

  double clock() const { return static_cast<double>(ticks) * config.gossip.tick; }
  Vec2 slot_position(std::size_t landmark, std::size_t slot) const;

  /// Builds the arena with robots at seeded non-overlapping positions; robot
  /// i + 1 gets `behaviors[i]` (Honest when the list is shorter).
  static World create(const SwarmConfig& config, std::uint64_t seed,
                      const std::vector<BehaviorKind>& behaviors);
};

struct Sensing {
  std::size_t landmark = 0;
  Observation observation;
  bool tag_readable = false;
};

/// True when the landmark is within sensing range and field of view and the
/// segment to it is clear of other robots.
bool landmark_visible(const World& world, std::size_t robot, std::size_t landmark);

/// One colour reading of `landmark` by `robot`: true colour + bias + noise
/// (synthetic) or a dataset draw (replay).
Observation read_color(World& world, std::size_t robot, std::size_t landmark);

/// Reading of the nearest visible landmark.
std::optional<Sensing> sense(World& world, std::size_t robot);

/// Vote an attacker actually casts in place of the honest one; nothing means
/// the report is withheld.
std::optional<Vote> apply_behavior(BehaviorKind kind, bool landmark_valuable, Vote honest_vote);

/// Moves one step toward `target` at constant speed. Blocked moves try a few
/// turned headings and otherwise stay put.
void navigate(World& world, std::size_t robot, Vec2 target);

/// Callback receiving structured event records.
using EventSink = std::function<void(Json)>;

/// Advances one robot's state machine by one tick against its local contract
/// view; returns a report to submit, if any.
std::optional<Report> fsm_step(World& world, std::size_t robot, const ContractState& view,
                               const EventSink& emit);

/// Full swarm + ledger simulation advanced tick by tick.
class Simulation {
 public:
  Simulation(World world, ContractState genesis, EventSink sink);

  /// sense/FSM per robot, motion, proximity, gossip, sealing when due,
  /// block deliveries.
  void tick();

  World& world() { return world_; }
  const World& world() const { return world_; }
  Ledger& ledger() { return ledger_; }
  const Ledger& ledger() const { return ledger_; }
  double now() const { return world_.clock(); }

  Proximity proximity() const;

  /// Synchronises every replica and returns the per-robot digests.
  std::vector<std::string> finish();

 private:
  World world_;
  Ledger ledger_;
  EventSink sink_;
  std::uint64_t ticks_per_block_;
};

}  // namespace swarm_oracle
