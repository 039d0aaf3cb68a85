#include "swarm_oracle/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace swarm_oracle {

namespace {

constexpr double kArrivalTolerance = 0.01;

double normal(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
  while (a < -std::numbers::pi) a += 2 * std::numbers::pi;
  return a;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  const auto last = s.find_last_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, last - first + 1);
}

}  // namespace

const char* to_string(BehaviorKind kind) {
  switch (kind) {
    case BehaviorKind::Honest: return "honest";
    case BehaviorKind::SafetyAttacker: return "safety";
    case BehaviorKind::LivenessAttacker: return "liveness";
    case BehaviorKind::CombinedAttacker: return "combined";
    case BehaviorKind::PhysicalAttacker: return "physical";
  }
  return "unknown";
}

BehaviorKind behavior_from_string(const std::string& text) {
  if (text == "honest" || text == "none") return BehaviorKind::Honest;
  if (text == "safety") return BehaviorKind::SafetyAttacker;
  if (text == "liveness") return BehaviorKind::LivenessAttacker;
  if (text == "combined") return BehaviorKind::CombinedAttacker;
  if (text == "physical") return BehaviorKind::PhysicalAttacker;
  throw Error("unknown behavior '" + text + "'");
}

const char* to_string(FsmState state) {
  switch (state) {
    case FsmState::Query: return "query";
    case FsmState::Validate: return "validate";
    case FsmState::Explore: return "explore";
    case FsmState::Report: return "report";
  }
  return "unknown";
}

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// ---------------------------------------------------------------------------
// Dataset

ObservationDataset ObservationDataset::parse(const std::string& text) {
  ObservationDataset ds;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(trim(cell));
    if (cols.size() != 5) {
      throw Error("dataset line " + std::to_string(line_no) + ": expected 5 columns, found " +
                  std::to_string(cols.size()));
    }
    // header row
    if (line_no == 1 && cols[0] == "robot") continue;
    try {
      const auto robot = static_cast<RobotId>(std::stoul(cols[0]));
      ds.add(robot, cols[1], Observation{std::stod(cols[2]), std::stod(cols[3]), std::stod(cols[4])});
    } catch (const std::logic_error&) {
      throw Error("dataset line " + std::to_string(line_no) + ": malformed number");
    }
  }
  return ds;
}

ObservationDataset ObservationDataset::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ObservationDataset::add(RobotId robot, const std::string& color, Observation obs) {
  by_robot_[{robot, color}].push_back(obs);
  by_color_[color].push_back(std::move(obs));
  ++total_;
}

std::optional<Observation> ObservationDataset::sample(RobotId robot, const std::string& color,
                                                      Rng& rng) const {
  const std::vector<Observation>* rows = nullptr;
  if (auto it = by_robot_.find({robot, color}); it != by_robot_.end()) {
    rows = &it->second;
  } else if (auto jt = by_color_.find(color); jt != by_color_.end()) {
    rows = &jt->second;
  }
  if (rows == nullptr || rows->empty()) return std::nullopt;
  return (*rows)[pick_index(rng, rows->size())];
}

std::optional<Observation> ObservationDataset::mean(const std::string& color,
                                                    const std::set<RobotId>& robots) const {
  std::vector<double> sum;
  std::size_t count = 0;
  for (const auto& [key, rows] : by_robot_) {
    if (key.second != color) continue;
    if (!robots.empty() && !robots.contains(key.first)) continue;
    for (const auto& obs : rows) {
      if (sum.empty()) sum.assign(obs.dimension(), 0.0);
      for (std::size_t i = 0; i < obs.dimension(); ++i) sum[i] += obs[i];
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  for (auto& s : sum) s /= static_cast<double>(count);
  return Observation(std::move(sum));
}

// ---------------------------------------------------------------------------
// Configuration and world

std::vector<Landmark> SwarmConfig::default_landmarks() {
  return {
      {"red", {0.5, 1.5}, Observation{190.0, 55.0, 60.0}, true, 0.10, 6},
      {"green", {1.5, 1.5}, Observation{60.0, 165.0, 85.0}, false, 0.10, 6},
      {"blue", {1.0, 0.5}, Observation{55.0, 90.0, 185.0}, false, 0.10, 6},
  };
}

void SwarmConfig::validate() const {
  if (!(arena_width > 0.0) || !(arena_height > 0.0)) throw Error("arena dimensions must be positive");
  if (!(speed > 0.0)) throw Error("robot speed must be positive");
  if (!(robot_radius > 0.0)) throw Error("robot radius must be positive");
  if (!(state_timeout > 0.0)) throw Error("state timeout must be positive");
  if (!(sensing_range > 0.0)) throw Error("sensing range must be positive");
  if (!(field_of_view > 0.0)) throw Error("field of view must be positive");
  if (slot_radius > queue_radius) throw Error("slot radius must not exceed queue radius");
  for (const auto& l : landmarks) {
    if (l.occupancy_slots == 0) throw Error("landmark " + l.name + " needs at least one slot");
    if (l.position.x < 0 || l.position.x > arena_width || l.position.y < 0 ||
        l.position.y > arena_height) {
      throw Error("landmark " + l.name + " lies outside the arena");
    }
    if (slot_radius > l.tag_range) {
      throw Error("slot radius exceeds the tag range of landmark " + l.name);
    }
  }
  gossip.validate();
}

Vec2 World::slot_position(std::size_t landmark, std::size_t slot) const {
  const auto& l = landmarks[landmark];
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(slot) /
                           static_cast<double>(l.occupancy_slots) +
                       std::numbers::pi / 2.0;
  return {l.position.x + config.slot_radius * std::cos(angle),
          l.position.y + config.slot_radius * std::sin(angle)};
}

World World::create(const SwarmConfig& config, std::uint64_t seed,
                    const std::vector<BehaviorKind>& behaviors) {
  config.validate();
  World w;
  w.config = config;
  w.landmarks = config.landmarks;
  w.rng.seed(seed);
  w.occupancy.resize(w.landmarks.size());
  for (std::size_t l = 0; l < w.landmarks.size(); ++l) {
    w.occupancy[l].assign(w.landmarks[l].occupancy_slots, std::nullopt);
  }
  const std::size_t dim = w.landmarks.empty() ? 3 : w.landmarks.front().true_color.dimension();
  const double margin = config.robot_radius + 0.01;
  for (RobotId id = 1; id <= config.robots; ++id) {
    RobotState r;
    r.id = id;
    r.behavior = id <= behaviors.size() ? behaviors[id - 1] : BehaviorKind::Honest;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw Error("cannot place robots: arena too crowded");
      const Vec2 p{uniform(w.rng, margin, config.arena_width - margin),
                   uniform(w.rng, margin, config.arena_height - margin)};
      bool ok = true;
      for (const auto& other : w.robots) {
        if (norm(p - other.pos) < 2.5 * config.robot_radius) ok = false;
      }
      for (const auto& l : w.landmarks) {
        if (norm(p - l.position) < config.queue_radius) ok = false;
      }
      if (ok) {
        r.pos = p;
        break;
      }
    }
    r.heading = uniform(w.rng, -std::numbers::pi, std::numbers::pi);
    std::vector<double> bias(dim);
    for (auto& b : bias) b = normal(w.rng, config.sensing.bias_sigma);
    r.bias = Observation(std::move(bias));
    w.robots.push_back(std::move(r));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Sensing

bool landmark_visible(const World& world, std::size_t robot, std::size_t landmark) {
  const auto& r = world.robots[robot];
  const Vec2 to = world.landmarks[landmark].position - r.pos;
  const double len2 = to.x * to.x + to.y * to.y;
  if (len2 <= 0.0) return true;
  if (len2 > world.config.sensing_range * world.config.sensing_range) return false;
  if (world.config.field_of_view < 2.0 * std::numbers::pi) {
    const double off = wrap_angle(std::atan2(to.y, to.x) - r.heading);
    if (std::abs(off) > world.config.field_of_view / 2.0) return false;
  }
  for (std::size_t j = 0; j < world.robots.size(); ++j) {
    if (j == robot) continue;
    const Vec2 rel = world.robots[j].pos - r.pos;
    const double t = (rel.x * to.x + rel.y * to.y) / len2;
    if (t <= 0.0 || t >= 1.0) continue;
    const Vec2 closest = r.pos + t * to;
    if (norm(world.robots[j].pos - closest) < world.config.robot_radius) return false;
  }
  return true;
}

Observation read_color(World& world, std::size_t robot, std::size_t landmark) {
  const auto& r = world.robots[robot];
  const auto& l = world.landmarks[landmark];
  const auto& sensing = world.config.sensing;
  if (sensing.dataset) {
    if (auto row = sensing.dataset->sample(r.id, l.name, world.rng)) return *row;
  }
  double sigma = sensing.noise_sigma;
  for (const auto& other : world.robots) {
    if (other.id == r.id || !other.parked) continue;
    if (other.behavior != BehaviorKind::PhysicalAttacker) continue;
    if (norm(other.pos - r.pos) <= sensing.corruption_radius) {
      sigma *= sensing.corruption_factor;
      break;
    }
  }
  const bool outlier = sensing.outlier_probability > 0.0 &&
                       uniform(world.rng, 0.0, 1.0) < sensing.outlier_probability;
  std::vector<double> out(l.true_color.dimension());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double bias = i < r.bias.dimension() ? r.bias[i] : 0.0;
    double v = l.true_color[i] + bias + normal(world.rng, sigma);
    if (outlier) v += normal(world.rng, sensing.outlier_sigma);
    out[i] = std::clamp(v, 0.0, 255.0);
  }
  return Observation(std::move(out));
}

std::optional<Sensing> sense(World& world, std::size_t robot) {
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  for (std::size_t l = 0; l < world.landmarks.size(); ++l) {
    if (!landmark_visible(world, robot, l)) continue;
    const double d = norm(world.landmarks[l].position - world.robots[robot].pos);
    if (!best || d < best_distance) {
      best = l;
      best_distance = d;
    }
  }
  if (!best) return std::nullopt;
  Sensing s;
  s.landmark = *best;
  s.observation = read_color(world, robot, *best);
  s.tag_readable = best_distance <= world.landmarks[*best].tag_range;
  return s;
}

std::optional<Vote> apply_behavior(BehaviorKind kind, bool landmark_valuable, Vote honest_vote) {
  const Vote inverted = honest_vote == Vote::Accept ? Vote::Reject : Vote::Accept;
  switch (kind) {
    case BehaviorKind::Honest: return honest_vote;
    case BehaviorKind::SafetyAttacker: return inverted;
    case BehaviorKind::LivenessAttacker: return std::nullopt;
    case BehaviorKind::CombinedAttacker:
      if (landmark_valuable) return std::nullopt;
      return inverted;
    case BehaviorKind::PhysicalAttacker: return std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Motion

namespace {

bool position_free(const World& world, std::size_t robot, Vec2 from, Vec2 to) {
  const auto& cfg = world.config;
  const double r = cfg.robot_radius;
  if (to.x < r || to.x > cfg.arena_width - r || to.y < r || to.y > cfg.arena_height - r) {
    return false;
  }
  for (const auto& l : world.landmarks) {
    if (norm(to - l.position) < cfg.landmark_radius + r) return false;
  }
  for (std::size_t j = 0; j < world.robots.size(); ++j) {
    if (j == robot) continue;
    const double after = norm(to - world.robots[j].pos);
    if (after < 2.0 * r && after < norm(from - world.robots[j].pos)) return false;
  }
  return true;
}

}  // namespace

void navigate(World& world, std::size_t robot, Vec2 target) {
  auto& r = world.robots[robot];
  const Vec2 delta = target - r.pos;
  const double dist = norm(delta);
  if (dist < 1e-9) return;
  const double step = std::min(world.config.speed * world.config.gossip.tick, dist);
  double desired = std::atan2(delta.y, delta.x);
  if (dist > step) desired += normal(world.rng, world.config.heading_jitter);

  const double sign = uniform(world.rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
  const double q = std::numbers::pi / 4.0;
  for (double turn : {0.0, sign * q, -sign * q, sign * 2 * q, -sign * 2 * q}) {
    const double heading = desired + turn;
    const Vec2 next{r.pos.x + step * std::cos(heading), r.pos.y + step * std::sin(heading)};
    if (position_free(world, robot, r.pos, next)) {
      r.pos = next;
      r.heading = wrap_angle(heading);
      return;
    }
  }
  // blocked on all sides: turn in place
  r.heading = wrap_angle(r.heading + uniform(world.rng, -std::numbers::pi, std::numbers::pi));
}

// ---------------------------------------------------------------------------
// State machine

namespace {

void release_slot(World& world, std::size_t robot) {
  auto& r = world.robots[robot];
  if (r.goal && r.slot) {
    auto& occ = world.occupancy[*r.goal][*r.slot];
    if (occ == robot) occ.reset();
  }
  r.slot.reset();
}

void transition(World& world, std::size_t robot, FsmState next, const EventSink& emit) {
  auto& r = world.robots[robot];
  Json e{{"t", world.clock()},
         {"type", "fsm"},
         {"robot", r.id},
         {"from", to_string(r.fsm)},
         {"to", to_string(next)}};
  if (next == FsmState::Validate && r.target) e["target"] = *r.target;
  if (emit) emit(std::move(e));
  r.fsm = next;
  r.state_timer = 0.0;
}

std::vector<std::size_t> visible_landmarks(const World& world, std::size_t robot) {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < world.landmarks.size(); ++l) {
    if (landmark_visible(world, robot, l)) out.push_back(l);
  }
  return out;
}

/// Visible landmark whose reading is nearest the proposal. A match farther
/// than `radius` is accepted only when no landmark is hidden from view.
std::optional<std::size_t> validation_goal(World& world, std::size_t robot, const Observation& centroid,
                                           double radius) {
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  const auto visible = visible_landmarks(world, robot);
  for (std::size_t l : visible) {
    const Observation seen = read_color(world, robot, l);
    if (seen.dimension() != centroid.dimension()) continue;
    const double d = distance(seen, centroid);
    if (!best || d < best_distance) {
      best = l;
      best_distance = d;
    }
  }
  // A poor match only counts once every landmark has been seen.
  if (best && best_distance > radius && visible.size() < world.landmarks.size()) return std::nullopt;
  return best;
}

/// The robot has a report from this landmark that its view has not yet
/// confirmed; reporting there again would likely duplicate it.
bool awaiting(const RobotState& r, std::size_t landmark) {
  return std::any_of(r.pending.begin(), r.pending.end(),
                     [&](const PendingTx& p) { return p.landmark == landmark; });
}

std::optional<std::size_t> exploration_goal(World& world, std::size_t robot) {
  const auto& r = world.robots[robot];
  if (r.behavior == BehaviorKind::PhysicalAttacker) {
    for (std::size_t l : visible_landmarks(world, robot)) {
      if (world.landmarks[l].valuable) return l;
    }
    return std::nullopt;
  }
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  for (std::size_t l : visible_landmarks(world, robot)) {
    if (r.last_landmark && *r.last_landmark == l) continue;
    if (awaiting(r, l)) continue;
    const double d = norm(world.landmarks[l].position - r.pos);
    if (!best || d < best_distance) {
      best = l;
      best_distance = d;
    }
  }
  return best;
}

std::optional<std::size_t> reserve_slot(World& world, std::size_t robot, std::size_t landmark) {
  std::optional<std::size_t> best;
  double best_distance = 0.0;
  for (std::size_t s = 0; s < world.occupancy[landmark].size(); ++s) {
    if (world.occupancy[landmark][s]) continue;
    const double d = norm(world.slot_position(landmark, s) - world.robots[robot].pos);
    if (!best || d < best_distance) {
      best = s;
      best_distance = d;
    }
  }
  if (best) world.occupancy[landmark][*best] = robot;
  return best;
}

void plan_random_walk(World& world, std::size_t robot) {
  auto& r = world.robots[robot];
  r.heading = wrap_angle(r.heading + normal(world.rng, 4.0 * world.config.heading_jitter));
  r.move_to = Vec2{r.pos.x + 0.2 * std::cos(r.heading), r.pos.y + 0.2 * std::sin(r.heading)};
}

/// True when the contract, as this robot currently sees it, would reject the
/// report because the robot already sits in the destination cluster.
bool already_member(const ContractState& view, RobotId robot, const Observation& obs,
                    std::optional<ClusterId> target) {
  if (target) {
    if (const Cluster* c = view.find_open(*target)) return c->has_member(robot);
  }
  const auto& p = view.params();
  if (obs.dimension() != p.dimension) return false;
  const auto decision = assign(obs, view.open_clusters(), p.radius, p.quota.capacity(),
                               view.next_cluster_id());
  if (const auto* joined = std::get_if<Joined>(&decision)) {
    const Cluster* c = view.find_open(joined->id);
    return c != nullptr && c->has_member(robot);
  }
  return false;
}

/// The proposal has already been decided according to the local view.
bool target_settled(const ContractState& view, std::optional<ClusterId> target) {
  return target && *target < view.next_cluster_id() && view.find_open(*target) == nullptr;
}

void leave_report(World& world, std::size_t robot, std::size_t landmark, const EventSink& emit) {
  auto& r = world.robots[robot];
  if (r.target) r.validated.insert(*r.target);
  release_slot(world, robot);
  r.last_landmark = landmark;
  r.goal.reset();
  r.target.reset();
  transition(world, robot, FsmState::Query, emit);
}

std::optional<Report> do_report(World& world, std::size_t robot, const ContractState& view,
                                const EventSink& emit) {
  auto& r = world.robots[robot];
  if (r.parked) return std::nullopt;
  const std::size_t landmark = *r.goal;
  const auto& l = world.landmarks[landmark];
  auto skip = [&](const char* why) {
    if (emit) {
      emit({{"t", world.clock()}, {"type", "skip"}, {"robot", r.id}, {"landmark", l.name}, {"why", why}});
    }
    leave_report(world, robot, landmark, emit);
    return std::nullopt;
  };

  if (r.behavior == BehaviorKind::PhysicalAttacker) {
    r.parked = true;
    if (emit) {
      emit({{"t", world.clock()}, {"type", "park"}, {"robot", r.id}, {"landmark", l.name}});
    }
    return std::nullopt;
  }

  const Vote honest_vote = l.valuable ? Vote::Accept : Vote::Reject;
  const auto cast = apply_behavior(r.behavior, l.valuable, honest_vote);
  if (!cast) return skip("abstain");
  if (target_settled(view, r.target)) return skip("settled");
  if (awaiting(r, landmark)) return skip("awaiting");

  // A free-balance deposit depends on the robot's own in-flight reports, so
  // it waits at the tag until they show up in a block.
  if (view.params().deposit_base == DepositBase::FreeBalance && !r.pending.empty()) {
    r.state_timer += world.config.gossip.tick;
    if (r.state_timer >= world.config.state_timeout - 1e-9) return skip("timeout");
    return std::nullopt;
  }

  const Observation obs = read_color(world, robot, landmark);
  if (already_member(view, r.id, obs, r.target)) return skip("member");
  const TokenAmount deposit = view.required_deposit(r.id);
  if (deposit.is_zero()) return skip("bankrupt");

  Report rep;
  rep.observation = obs;
  rep.robot = r.id;
  rep.deposit = deposit;
  rep.vote = *cast;
  rep.target = r.target;
  rep.nonce = r.next_nonce++;
  r.pending.push_back({rep.nonce, deposit, landmark});
  if (emit) {
    emit({{"t", world.clock()},
          {"type", "report"},
          {"robot", r.id},
          {"honest", r.behavior == BehaviorKind::Honest},
          {"behavior", to_string(r.behavior)},
          {"landmark", l.name},
          {"valuable", l.valuable},
          {"nonce", rep.nonce},
          {"vote", to_string(rep.vote)},
          {"deposit", deposit.units()},
          {"obs", to_json(obs)},
          {"target", rep.target ? Json(*rep.target) : Json(nullptr)}});
  }
  leave_report(world, robot, landmark, emit);
  return rep;
}

}  // namespace

std::optional<Report> fsm_step(World& world, std::size_t robot, const ContractState& view,
                               const EventSink& emit) {
  auto& r = world.robots[robot];
  r.move_to.reset();
  std::erase_if(r.pending, [&](const PendingTx& p) { return view.has_processed({r.id, p.nonce}); });

  switch (r.fsm) {
    case FsmState::Query: {
      std::vector<const ProposalView*> candidates;
      const auto q = view.query();
      if (r.behavior != BehaviorKind::PhysicalAttacker) {
        for (const auto& p : q.proposals) {
          if (r.validated.contains(p.id)) continue;
          const Cluster* c = view.find_open(p.id);
          if (c != nullptr && c->has_member(r.id)) continue;
          candidates.push_back(&p);
        }
      }
      if (!candidates.empty()) {
        const ProposalView* chosen = candidates[pick_index(world.rng, candidates.size())];
        r.target = chosen->id;
        r.goal = validation_goal(world, robot, chosen->centroid, view.params().radius);
        if (r.goal && awaiting(r, *r.goal)) {
          // Probably validated already; the block just has not arrived.
          r.validated.insert(chosen->id);
          r.goal.reset();
          r.target.reset();
          return std::nullopt;
        }
        transition(world, robot, FsmState::Validate, emit);
      } else {
        r.target.reset();
        r.goal = exploration_goal(world, robot);
        transition(world, robot, FsmState::Explore, emit);
      }
      return std::nullopt;
    }
    case FsmState::Validate:
    case FsmState::Explore: {
      r.state_timer += world.config.gossip.tick;
      const bool moot = r.fsm == FsmState::Validate && target_settled(view, r.target);
      if (moot || r.state_timer >= world.config.state_timeout - 1e-9) {
        release_slot(world, robot);
        r.goal.reset();
        r.target.reset();
        transition(world, robot, FsmState::Query, emit);
        return std::nullopt;
      }
      if (!r.goal) {
        if (r.fsm == FsmState::Validate) {
          const Cluster* c = view.find_open(*r.target);
          if (c != nullptr) r.goal = validation_goal(world, robot, c->centroid, view.params().radius);
        } else {
          r.goal = exploration_goal(world, robot);
        }
      }
      if (!r.goal) {
        plan_random_walk(world, robot);
        return std::nullopt;
      }
      const auto& l = world.landmarks[*r.goal];
      if (r.slot) {
        const Vec2 sp = world.slot_position(*r.goal, *r.slot);
        if (norm(r.pos - sp) <= kArrivalTolerance &&
            norm(r.pos - l.position) <= l.tag_range) {
          transition(world, robot, FsmState::Report, emit);
        } else {
          r.move_to = sp;
        }
      } else if (norm(r.pos - l.position) <= world.config.queue_radius) {
        r.slot = reserve_slot(world, robot, *r.goal);
        if (r.slot) r.move_to = world.slot_position(*r.goal, *r.slot);
      } else {
        r.move_to = l.position;
      }
      return std::nullopt;
    }
    case FsmState::Report:
      return do_report(world, robot, view, emit);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Simulation

Simulation::Simulation(World world, ContractState genesis, EventSink sink)
    : world_(std::move(world)),
      ledger_(world_.config.robots, std::move(genesis), world_.config.gossip),
      sink_(std::move(sink)) {
  const double ratio = world_.config.gossip.block_period / world_.config.gossip.tick;
  ticks_per_block_ = static_cast<std::uint64_t>(std::llround(ratio));
  if (ticks_per_block_ == 0) throw Error("block period shorter than one tick");
}

Proximity Simulation::proximity() const {
  Proximity edges;
  const double range = world_.config.gossip.comm_range;
  for (std::size_t a = 0; a < world_.robots.size(); ++a) {
    for (std::size_t b = a + 1; b < world_.robots.size(); ++b) {
      if (norm(world_.robots[a].pos - world_.robots[b].pos) <= range) edges.emplace_back(a, b);
    }
  }
  return edges;
}

void Simulation::tick() {
  ++world_.ticks;
  const double now = world_.clock();

  for (std::size_t i = 0; i < world_.robots.size(); ++i) {
    const RobotId id = world_.robots[i].id;
    if (auto report = fsm_step(world_, i, ledger_.view(id).local_state(), sink_)) {
      ledger_.submit(*report, now);
    }
  }
  for (std::size_t i = 0; i < world_.robots.size(); ++i) {
    if (auto target = world_.robots[i].move_to) navigate(world_, i, *target);
  }
  ledger_.gossip_step(proximity(), now);

  if (world_.ticks % ticks_per_block_ == 0) {
    const std::uint64_t slot = world_.ticks / ticks_per_block_;
    if (auto sealed = ledger_.seal_block(slot, now); sealed && sink_) {
      const Block& block = *sealed->block;
      for (const auto& [tx, result] : sealed->applied) {
        Json e{{"t", now},
               {"type", "tx"},
               {"block", block.index},
               {"robot", tx.robot},
               {"nonce", tx.nonce},
               {"disposition", to_string(result.disposition)},
               {"reason", to_string(result.reason)},
               {"coerced", result.coerced}};
        e["cluster"] = result.cluster ? Json(*result.cluster) : Json(nullptr);
        sink_(std::move(e));
        for (const auto& s : result.settlements) {
          Json se = to_json(s);
          se["t"] = now;
          se["type"] = "settlement";
          sink_(std::move(se));
        }
      }
      const auto& state = ledger_.canonical_state();
      Json holdings = Json::array();
      for (const auto& [robot, _] : state.balances()) holdings.push_back(state.holdings(robot).units());
      sink_({{"t", now},
             {"type", "block"},
             {"index", block.index},
             {"sealer", block.sealer},
             {"txs", block.txs.size()},
             {"open", state.open_clusters().size()},
             {"supply", state.supply().units()},
             {"holdings", std::move(holdings)}});
    }
  }
  ledger_.deliver();
}

std::vector<std::string> Simulation::finish() {
  const std::size_t behind = ledger_.force_sync(now());
  if (sink_) sink_({{"t", now()}, {"type", "sync"}, {"forced", behind}});
  std::vector<std::string> digests;
  for (const auto& v : ledger_.views()) digests.push_back(state_digest(v.local_state()));
  return digests;
}

}  // namespace swarm_oracle
