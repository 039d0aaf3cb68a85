#include <doctest.h>

#include <cmath>
#include <numbers>

#include "swarm_oracle/swarm.hpp"

using namespace swarm_oracle;

namespace {

SwarmConfig quiet_config(std::uint32_t robots) {
  SwarmConfig c;
  c.robots = robots;
  c.sensing.bias_sigma = 0.0;
  c.sensing.noise_sigma = 0.0;
  c.sensing.outlier_probability = 0.0;
  c.heading_jitter = 0.0;
  return c;
}

ContractState genesis(std::uint32_t robots) {
  ContractParams p;
  p.quota = Quota(1, 3);
  p.issuance = ContractParams::default_issuance(TokenAmount::tokens(3 * robots), p.quota);
  return ContractState::with_equal_shares(p, robots, TokenAmount::tokens(3));
}

/// Places robot 0 on slot 0 of `landmark`, in Report state, aimed at it.
void park_at(World& w, std::size_t landmark) {
  auto& r = w.robots[0];
  r.pos = w.slot_position(landmark, 0);
  r.goal = landmark;
  r.slot = 0;
  w.occupancy[landmark][0] = 0;
  r.fsm = FsmState::Report;
}

void face(World& w, std::size_t robot, std::size_t landmark) {
  const Vec2 d = w.landmarks[landmark].position - w.robots[robot].pos;
  w.robots[robot].heading = std::atan2(d.y, d.x);
}

std::size_t landmark_named(const World& w, const std::string& name) {
  for (std::size_t i = 0; i < w.landmarks.size(); ++i) {
    if (w.landmarks[i].name == name) return i;
  }
  FAIL("no landmark " << name);
  return 0;
}

}  // namespace

TEST_CASE("noiseless reading equals the true colour, bias is additive") {
  auto w = World::create(quiet_config(1), 1, {});
  const auto red = landmark_named(w, "red");
  w.robots[0].pos = w.slot_position(red, 0);
  face(w, 0, red);
  CHECK(read_color(w, 0, red) == w.landmarks[red].true_color);

  w.robots[0].bias = Observation{10, 0, 0};
  const auto seen = read_color(w, 0, red);
  CHECK(seen[0] == doctest::Approx(w.landmarks[red].true_color[0] + 10));
  CHECK(seen[1] == doctest::Approx(w.landmarks[red].true_color[1]));

  const auto s = sense(w, 0);
  REQUIRE(s);
  CHECK(s->landmark == red);
  CHECK(s->tag_readable);
}

TEST_CASE("replay mode with one dataset row always returns it") {
  auto cfg = quiet_config(1);
  cfg.sensing.noise_sigma = 30.0;
  cfg.sensing.dataset = ObservationDataset::parse("robot,color,R,G,B\n1,red,201,44,50\n");
  auto w = World::create(cfg, 3, {});
  const auto red = landmark_named(w, "red");
  for (int i = 0; i < 20; ++i) CHECK(read_color(w, 0, red) == Observation{201, 44, 50});
}

TEST_CASE("dataset parsing") {
  const auto ds = ObservationDataset::parse("1,red,1,2,3\n2,red,3,4,5\n# note\n\n1,green,0,0,0\n");
  CHECK(ds.size() == 3);
  CHECK(ds.mean("red", {}) == Observation{2, 3, 4});
  CHECK(ds.mean("red", {2}) == Observation{3, 4, 5});
  CHECK_FALSE(ds.mean("blue", {}));
  Rng rng(1);
  CHECK(ds.sample(2, "green", rng) == Observation{0, 0, 0});
  CHECK_THROWS_AS(ObservationDataset::parse("1,red,1,2\n"), Error);
  CHECK_THROWS_AS(ObservationDataset::parse("1,red,x,2,3\n"), Error);
}

TEST_CASE("nothing visible means nothing sensed") {
  auto cfg = quiet_config(1);
  cfg.sensing_range = 0.05;
  auto w = World::create(cfg, 1, {});
  CHECK_FALSE(sense(w, 0));
}

TEST_CASE("robots occlude landmarks") {
  auto w = World::create(quiet_config(2), 1, {});
  const auto red = landmark_named(w, "red");
  const Vec2 lm = w.landmarks[red].position;
  w.robots[0].pos = {lm.x, lm.y - 0.6};
  w.robots[1].pos = {lm.x, lm.y - 0.3};
  face(w, 0, red);
  CHECK_FALSE(landmark_visible(w, 0, red));
  w.robots[1].pos = {lm.x + 0.3, lm.y - 0.3};
  CHECK(landmark_visible(w, 0, red));
  w.robots[0].heading += 3.14159;
  CHECK_FALSE(landmark_visible(w, 0, red));
}

TEST_CASE("behaviour profiles") {
  CHECK(apply_behavior(BehaviorKind::Honest, true, Vote::Accept) == Vote::Accept);
  CHECK(apply_behavior(BehaviorKind::SafetyAttacker, false, Vote::Reject) == Vote::Accept);
  CHECK(apply_behavior(BehaviorKind::SafetyAttacker, true, Vote::Accept) == Vote::Reject);
  CHECK_FALSE(apply_behavior(BehaviorKind::LivenessAttacker, true, Vote::Accept));
  CHECK_FALSE(apply_behavior(BehaviorKind::LivenessAttacker, false, Vote::Reject));
  CHECK(apply_behavior(BehaviorKind::CombinedAttacker, false, Vote::Reject) == Vote::Accept);
  CHECK_FALSE(apply_behavior(BehaviorKind::CombinedAttacker, true, Vote::Accept));
  CHECK_FALSE(apply_behavior(BehaviorKind::PhysicalAttacker, true, Vote::Accept));
  CHECK(behavior_from_string("combined") == BehaviorKind::CombinedAttacker);
  CHECK_THROWS_AS(behavior_from_string("sneaky"), Error);
}

TEST_CASE("navigation covers a free metre in about ten seconds") {
  auto w = World::create(quiet_config(1), 1, {});
  w.robots[0].pos = {0.3, 1.0};
  const Vec2 target{1.3, 1.0};
  int ticks = 0;
  while (norm(w.robots[0].pos - target) > 1e-9 && ticks < 1000) {
    navigate(w, 0, target);
    ++ticks;
  }
  CHECK(ticks == doctest::Approx(100).epsilon(0.02));
}

TEST_CASE("a surrounded robot does not move") {
  auto w = World::create(quiet_config(9), 1, {});
  const Vec2 c{1.0, 1.0};
  w.robots[0].pos = c;
  const double d = 2.0 * w.config.robot_radius;
  for (std::size_t i = 1; i < 9; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i - 1) / 8.0;
    w.robots[i].pos = {c.x + d * std::cos(a), c.y + d * std::sin(a)};
  }
  navigate(w, 0, {1.5, 1.0});
  CHECK(w.robots[0].pos.x == c.x);
  CHECK(w.robots[0].pos.y == c.y);
}

TEST_CASE("query goes to explore without proposals and to validate with one") {
  auto w = World::create(quiet_config(2), 1, {});
  auto view = genesis(2);
  fsm_step(w, 0, view, {});
  CHECK(w.robots[0].fsm == FsmState::Explore);

  view.apply_report({{190, 55, 60}, 2, view.required_deposit(2), Vote::Accept, std::nullopt, 1});
  w.robots[0].fsm = FsmState::Query;
  fsm_step(w, 0, view, {});
  CHECK(w.robots[0].fsm == FsmState::Validate);
  CHECK(w.robots[0].target == ClusterId{1});
}

TEST_CASE("honest robot at the red tag reports accept, attacker inverts") {
  for (auto [kind, landmark, want] :
       {std::tuple{BehaviorKind::Honest, "red", Vote::Accept},
        std::tuple{BehaviorKind::Honest, "green", Vote::Reject},
        std::tuple{BehaviorKind::SafetyAttacker, "green", Vote::Accept}}) {
    auto w = World::create(quiet_config(1), 1, {kind});
    park_at(w, landmark_named(w, landmark));
    const auto view = genesis(1);
    const auto rep = fsm_step(w, 0, view, {});
    REQUIRE(rep);
    CHECK(rep->vote == want);
    CHECK(rep->deposit == view.required_deposit(1));
    CHECK(rep->observation == w.landmarks[landmark_named(w, landmark)].true_color);
    CHECK(w.robots[0].fsm == FsmState::Query);
  }
}

TEST_CASE("liveness attackers stay silent, physical attackers park") {
  auto w = World::create(quiet_config(1), 1, {BehaviorKind::LivenessAttacker});
  park_at(w, landmark_named(w, "red"));
  CHECK_FALSE(fsm_step(w, 0, genesis(1), {}));
  CHECK(w.robots[0].fsm == FsmState::Query);

  auto p = World::create(quiet_config(1), 1, {BehaviorKind::PhysicalAttacker});
  park_at(p, landmark_named(p, "red"));
  for (int i = 0; i < 5000; ++i) CHECK_FALSE(fsm_step(p, 0, genesis(1), {}));
  CHECK(p.robots[0].parked);
  CHECK(p.robots[0].fsm == FsmState::Report);
}

TEST_CASE("parked physical attackers corrupt nearby readings") {
  auto cfg = quiet_config(2);
  cfg.sensing.noise_sigma = 1.0;
  cfg.sensing.corruption_factor = 50.0;
  auto w = World::create(cfg, 2, {BehaviorKind::PhysicalAttacker});
  const auto red = landmark_named(w, "red");
  w.robots[0].pos = w.slot_position(red, 0);
  w.robots[0].parked = true;
  w.robots[1].pos = w.slot_position(red, 3);
  double spread = 0.0;
  for (int i = 0; i < 50; ++i) spread += distance(read_color(w, 1, red), w.landmarks[red].true_color);
  CHECK(spread / 50.0 > 20.0);
}

TEST_CASE("full slots keep robots in the queue") {
  auto cfg = quiet_config(2);
  for (auto& l : cfg.landmarks) l.occupancy_slots = 1;
  auto w = World::create(cfg, 1, {});
  const auto red = landmark_named(w, "red");
  w.occupancy[red][0] = 1;
  auto& r = w.robots[0];
  r.fsm = FsmState::Explore;
  r.goal = red;
  r.pos = {w.landmarks[red].position.x + 0.25, w.landmarks[red].position.y};
  for (int i = 0; i < 50; ++i) {
    fsm_step(w, 0, genesis(2), {});
    if (r.move_to) navigate(w, 0, *r.move_to);
  }
  CHECK(r.fsm == FsmState::Explore);
  CHECK_FALSE(r.slot);
  CHECK(norm(r.pos - w.landmarks[red].position) > w.landmarks[red].tag_range);
}

TEST_CASE("validate and explore time out after the state timeout") {
  auto cfg = quiet_config(1);
  cfg.sensing_range = 0.01;
  auto w = World::create(cfg, 1, {});
  const auto view = genesis(1);
  fsm_step(w, 0, view, {});
  REQUIRE(w.robots[0].fsm == FsmState::Explore);
  int ticks = 0;
  while (w.robots[0].fsm == FsmState::Explore) {
    fsm_step(w, 0, view, {});
    ++ticks;
  }
  CHECK(ticks * cfg.gossip.tick <= cfg.state_timeout + 1e-9);
}

TEST_CASE("simulation is deterministic and an empty swarm only advances the clock") {
  auto run = [](std::uint64_t seed) {
    std::string log;
    auto w = World::create(SwarmConfig{}, seed, {BehaviorKind::SafetyAttacker});
    Simulation sim(std::move(w), genesis(12), [&](Json e) { log += e.dump() + "\n"; });
    for (int i = 0; i < 3000; ++i) sim.tick();
    sim.finish();
    return log;
  };
  const auto a = run(5);
  CHECK(a == run(5));
  CHECK(a != run(6));

  auto cfg = SwarmConfig{};
  cfg.robots = 0;
  std::size_t events = 0;
  Simulation empty(World::create(cfg, 1, {}), genesis(1), [&](Json) { ++events; });
  for (int i = 0; i < 250; ++i) empty.tick();
  CHECK(empty.now() == doctest::Approx(25.0));
  CHECK(events == 0);
}

TEST_CASE("configuration validation") {
  SwarmConfig c;
  c.speed = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  SwarmConfig d;
  d.landmarks[0].position = {5.0, 5.0};
  CHECK_THROWS_AS(d.validate(), Error);
}
