#include "swarm_oracle/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace swarm_oracle {

namespace fs = std::filesystem;

const char* to_string(IssuanceMode mode) {
  return mode == IssuanceMode::Zero ? "zero" : "default";
}

const char* to_string(StopKind kind) {
  switch (kind) {
    case StopKind::FirstAcceptedAgreement: return "first_agreement";
    case StopKind::MaxSimTime: return "max_time";
    case StopKind::AgreementCount: return "agreement_count";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw Error(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw Error("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

Vec2 vec2_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 2) throw Error("position must be [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

Json landmark_json(const Landmark& l) {
  return {{"name", l.name},
          {"position", {l.position.x, l.position.y}},
          {"color", to_json(l.true_color)},
          {"valuable", l.valuable},
          {"tag_range", l.tag_range},
          {"occupancy_slots", l.occupancy_slots}};
}

Landmark landmark_from_json(const Json& j) {
  check_keys(j, {"name", "position", "color", "valuable", "tag_range", "occupancy_slots"}, "landmark");
  Landmark l;
  l.name = j.at("name").get<std::string>();
  l.position = vec2_from_json(j.at("position"));
  l.true_color = observation_from_json(j.at("color"));
  read(j, "valuable", l.valuable);
  read(j, "tag_range", l.tag_range);
  read(j, "occupancy_slots", l.occupancy_slots);
  return l;
}

void swarm_from_json(const Json& j, SwarmConfig& s) {
  check_keys(j,
             {"arena_width", "arena_height", "speed", "robot_radius", "landmark_radius",
              "slot_radius", "queue_radius", "state_timeout", "heading_jitter", "field_of_view",
              "sensing_range", "occupancy_slots", "tag_range", "comm_range", "block_period", "tick", "sensing",
              "landmarks"},
             "swarm");
  read(j, "arena_width", s.arena_width);
  read(j, "arena_height", s.arena_height);
  read(j, "speed", s.speed);
  read(j, "robot_radius", s.robot_radius);
  read(j, "landmark_radius", s.landmark_radius);
  read(j, "slot_radius", s.slot_radius);
  read(j, "queue_radius", s.queue_radius);
  read(j, "state_timeout", s.state_timeout);
  read(j, "heading_jitter", s.heading_jitter);
  read(j, "field_of_view", s.field_of_view);
  read(j, "sensing_range", s.sensing_range);
  read(j, "comm_range", s.gossip.comm_range);
  read(j, "block_period", s.gossip.block_period);
  read(j, "tick", s.gossip.tick);
  if (auto it = j.find("landmarks"); it != j.end()) {
    s.landmarks.clear();
    for (const auto& l : *it) s.landmarks.push_back(landmark_from_json(l));
  }
  // Shorthands applied to every landmark.
  if (auto it = j.find("occupancy_slots"); it != j.end()) {
    for (auto& l : s.landmarks) l.occupancy_slots = it->get<std::uint32_t>();
  }
  if (auto it = j.find("tag_range"); it != j.end()) {
    for (auto& l : s.landmarks) l.tag_range = it->get<double>();
  }
  if (auto it = j.find("sensing"); it != j.end()) {
    const Json& n = *it;
    check_keys(n,
               {"bias_sigma", "noise_sigma", "outlier_probability", "outlier_sigma",
                "corruption_radius", "corruption_factor"},
               "swarm.sensing");
    read(n, "bias_sigma", s.sensing.bias_sigma);
    read(n, "noise_sigma", s.sensing.noise_sigma);
    read(n, "outlier_probability", s.sensing.outlier_probability);
    read(n, "outlier_sigma", s.sensing.outlier_sigma);
    read(n, "corruption_radius", s.sensing.corruption_radius);
    read(n, "corruption_factor", s.sensing.corruption_factor);
  }
}

Json swarm_to_json(const SwarmConfig& s) {
  Json landmarks = Json::array();
  for (const auto& l : s.landmarks) landmarks.push_back(landmark_json(l));
  return {{"arena_width", s.arena_width},
          {"arena_height", s.arena_height},
          {"speed", s.speed},
          {"robot_radius", s.robot_radius},
          {"landmark_radius", s.landmark_radius},
          {"slot_radius", s.slot_radius},
          {"queue_radius", s.queue_radius},
          {"state_timeout", s.state_timeout},
          {"heading_jitter", s.heading_jitter},
          {"field_of_view", s.field_of_view},
          {"sensing_range", s.sensing_range},
          {"comm_range", s.gossip.comm_range},
          {"block_period", s.gossip.block_period},
          {"tick", s.gossip.tick},
          {"sensing",
           {{"bias_sigma", s.sensing.bias_sigma},
            {"noise_sigma", s.sensing.noise_sigma},
            {"outlier_probability", s.sensing.outlier_probability},
            {"outlier_sigma", s.sensing.outlier_sigma},
            {"corruption_radius", s.sensing.corruption_radius},
            {"corruption_factor", s.sensing.corruption_factor}}},
          {"landmarks", std::move(landmarks)}};
}

}  // namespace

void ExperimentConfig::validate() const {
  if (robots == 0) throw Error("robots must be at least 1");
  if (attackers > robots) {
    throw Error("attackers (" + std::to_string(attackers) + ") exceed robots (" +
                std::to_string(robots) + ")");
  }
  if (!(radius > 0.0)) throw Error("radius must be positive");
  if (tokens_per_robot == 0) throw Error("tokens_per_robot must be positive");
  if (seeds.empty()) throw Error("at least one seed is required");
  if (attackers > 0 && attack == BehaviorKind::Honest) {
    throw Error("attackers > 0 requires an attack behavior");
  }
  switch (stop.kind) {
    case StopKind::MaxSimTime:
      if (!(stop.seconds > 0.0)) throw Error("stop.seconds must be positive");
      break;
    case StopKind::AgreementCount:
      if (stop.count == 0) throw Error("stop.count must be positive");
      break;
    case StopKind::FirstAcceptedAgreement: break;
  }
  if (!(stop.max_time > 0.0)) throw Error("stop.max_time must be positive");
  if (swarm.landmarks.empty()) throw Error("at least one landmark is required");
  const std::size_t dim = swarm.landmarks.front().true_color.dimension();
  if (dim == 0) throw Error("landmark colors must be non-empty");
  std::size_t valuable = 0;
  for (const auto& l : swarm.landmarks) {
    if (l.true_color.dimension() != dim) throw Error("landmark colors differ in dimension");
    if (l.valuable) ++valuable;
  }
  if (valuable != 1) throw Error("exactly one landmark must be valuable");
  SwarmConfig s = swarm;
  s.robots = robots;
  s.validate();
  if (!dataset.empty() && !fs::exists(dataset)) throw Error("dataset not found: " + dataset);
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  check_keys(j,
             {"name", "robots", "attackers", "attack", "radius", "quota", "issuance",
              "tokens_per_robot", "weighting", "deposit_base", "seeds", "stop", "dataset", "keep_events", "swarm", "comment"},
             "config");
  ExperimentConfig c;
  try {
    read(j, "name", c.name);
    read(j, "robots", c.robots);
    read(j, "attackers", c.attackers);
    if (auto it = j.find("attack"); it != j.end()) c.attack = behavior_from_string(it->get<std::string>());
    read(j, "radius", c.radius);
    if (auto it = j.find("quota"); it != j.end()) {
      c.quota = it->is_string() ? Quota::parse(it->get<std::string>())
                                : Quota(it->get<std::uint32_t>(), 1);
    }
    if (auto it = j.find("issuance"); it != j.end()) {
      const auto text = it->get<std::string>();
      if (text == "zero") {
        c.issuance = IssuanceMode::Zero;
      } else if (text == "default") {
        c.issuance = IssuanceMode::Default;
      } else {
        throw Error("issuance must be 'zero' or 'default'");
      }
    }
    read(j, "tokens_per_robot", c.tokens_per_robot);
    if (auto it = j.find("weighting"); it != j.end()) {
      c.weighting = deposit_weighting_from_string(it->get<std::string>());
    }
    if (auto it = j.find("deposit_base"); it != j.end()) {
      c.deposit_base = deposit_base_from_string(it->get<std::string>());
    }
    if (auto it = j.find("seeds"); it != j.end()) {
      c.seeds.clear();
      if (it->is_array()) {
        for (const auto& s : *it) c.seeds.push_back(s.get<std::uint64_t>());
      } else if (it->is_object()) {
        check_keys(*it, {"first", "count"}, "seeds");
        const auto first = it->value("first", std::uint64_t{1});
        const auto count = it->at("count").get<std::uint64_t>();
        for (std::uint64_t s = 0; s < count; ++s) c.seeds.push_back(first + s);
      } else {
        c.seeds.push_back(it->get<std::uint64_t>());
      }
    }
    if (auto it = j.find("stop"); it != j.end()) {
      check_keys(*it, {"rule", "seconds", "count", "max_time"}, "stop");
      const auto rule = it->value("rule", std::string("first_agreement"));
      if (rule == "first_agreement") {
        c.stop.kind = StopKind::FirstAcceptedAgreement;
      } else if (rule == "max_time") {
        c.stop.kind = StopKind::MaxSimTime;
      } else if (rule == "agreement_count") {
        c.stop.kind = StopKind::AgreementCount;
      } else {
        throw Error("unknown stop rule '" + rule + "'");
      }
      read(*it, "seconds", c.stop.seconds);
      read(*it, "count", c.stop.count);
      read(*it, "max_time", c.stop.max_time);
    }
    read(j, "dataset", c.dataset);
    read(j, "keep_events", c.keep_events);
    if (auto it = j.find("swarm"); it != j.end()) swarm_from_json(*it, c.swarm);
  } catch (const Json::exception& e) {
    throw Error(std::string("invalid config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw Error("cannot parse config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

Json ExperimentConfig::to_json() const {
  return {{"name", name},
          {"robots", robots},
          {"attackers", attackers},
          {"attack", swarm_oracle::to_string(attack)},
          {"radius", radius},
          {"quota", quota.to_string()},
          {"issuance", swarm_oracle::to_string(issuance)},
          {"tokens_per_robot", tokens_per_robot},
          {"weighting", swarm_oracle::to_string(weighting)},
          {"deposit_base", swarm_oracle::to_string(deposit_base)},
          {"seeds", seeds},
          {"stop",
           {{"rule", swarm_oracle::to_string(stop.kind)},
            {"seconds", stop.seconds},
            {"count", stop.count},
            {"max_time", stop.max_time}}},
          {"dataset", dataset},
          {"keep_events", keep_events},
          {"swarm", swarm_to_json(swarm)}};
}

TokenAmount ExperimentConfig::initial_supply() const {
  return TokenAmount::tokens(tokens_per_robot * robots);
}

TokenAmount ExperimentConfig::issuance_amount() const {
  if (issuance == IssuanceMode::Zero) return TokenAmount{};
  return ContractParams::default_issuance(initial_supply(), quota);
}

std::vector<RobotId> ExperimentConfig::attacker_ids() const {
  std::vector<RobotId> ids;
  for (RobotId r = 1; r <= attackers; ++r) ids.push_back(r);
  return ids;
}

// ---------------------------------------------------------------------------
// Metrics

double consensus_error(const Observation& agreement, const Observation& reference) {
  return distance(agreement, reference);
}

Observation baseline_average(const std::vector<Observation>& observations) {
  if (observations.empty()) throw Error("baseline needs at least one observation");
  const std::size_t dim = observations.front().dimension();
  std::vector<long double> sum(dim, 0.0L);
  for (const auto& o : observations) {
    if (o.dimension() != dim) throw Error("observation dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) sum[i] += o[i];
  }
  std::vector<double> mean(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    mean[i] = static_cast<double>(sum[i] / static_cast<long double>(observations.size()));
  }
  return Observation(std::move(mean));
}

std::vector<Json> parse_event_log(const std::string& text) {
  std::vector<Json> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::exception& e) {
      throw Error("event log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

RunMetrics metrics_from_log(const std::vector<Json>& log) {
  if (log.empty() || log.front().value("type", "") != "header") {
    throw Error("event log must start with a header record");
  }
  const Json& header = log.front();
  RunMetrics m;
  m.seed = header.at("seed").get<std::uint64_t>();
  m.reference = observation_from_json(header.at("reference"));

  std::set<RobotId> attackers;
  for (const auto& a : header.at("attackers")) attackers.insert(a.get<RobotId>());
  std::map<RobotId, std::int64_t> holdings;
  for (const auto& row : header.at("holdings")) {
    holdings[row.at(0).get<RobotId>()] = row.at(1).get<std::int64_t>();
  }
  std::uint64_t supply = header.at("supply").get<std::uint64_t>();
  Observation valuable_color;
  std::vector<Observation> other_colors;
  for (const auto& l : header.at("landmarks")) {
    if (l.at("valuable").get<bool>()) {
      valuable_color = observation_from_json(l.at("color"));
    } else {
      other_colors.push_back(observation_from_json(l.at("color")));
    }
  }

  auto attacker_units = [&] {
    std::int64_t total = 0;
    for (RobotId a : attackers) total += holdings[a];
    return static_cast<std::uint64_t>(total);
  };
  auto push_share = [&](std::uint32_t settlement, double t) {
    SharePoint p;
    p.settlement = settlement;
    p.time = t;
    p.attacker_units = attacker_units();
    p.supply_units = supply;
    p.share = supply == 0 ? 0.0 : static_cast<double>(p.attacker_units) / static_cast<double>(supply);
    m.attacker_share.push_back(p);
  };
  push_share(0, 0.0);

  std::vector<Observation> accept_reports;
  std::map<std::pair<RobotId, std::uint64_t>, std::string> report_landmark;
  std::uint32_t decisive = 0;
  std::uint32_t accepted = 0;
  std::uint64_t window_reports = 0;
  double last_accept = 0.0;
  std::size_t missing = 0;

  for (std::size_t i = 1; i < log.size(); ++i) {
    const Json& e = log[i];
    const std::string type = e.value("type", "");
    if (type == "report") {
      ++m.reports;
      if (e.at("honest").get<bool>()) {
        ++m.honest_reports;
        ++window_reports;
      }
      if (e.at("vote").get<std::string>() == "accept") {
        accept_reports.push_back(observation_from_json(e.at("obs")));
      }
      if (e.contains("nonce") && e.contains("landmark")) {
        report_landmark[{e.at("robot").get<RobotId>(), e.at("nonce").get<std::uint64_t>()}] =
            e.at("landmark").get<std::string>();
      }
    } else if (type == "settlement") {
      const std::string verdict = e.at("verdict").get<std::string>();
      if (verdict == "annulled") continue;
      const double t = e.at("t").get<double>();
      for (const auto& tr : e.at("transfers")) {
        holdings[tr.at("robot").get<RobotId>()] += tr.at("gain").get<std::int64_t>();
      }
      supply += e.at("issued").get<std::uint64_t>();
      ++decisive;
      push_share(decisive, t);

      AgreementRecord rec;
      rec.index = decisive;
      rec.verdict = verdict == "accepted" ? Verdict::Accepted : Verdict::Rejected;
      rec.cluster = e.at("cluster").get<ClusterId>();
      rec.founder = e.at("founder").get<RobotId>();
      rec.attacker_founded = attackers.contains(rec.founder);
      if (e.contains("founder_nonce")) {
        auto it = report_landmark.find({rec.founder, e.at("founder_nonce").get<std::uint64_t>()});
        if (it != report_landmark.end()) rec.founder_landmark = it->second;
      }
      rec.centroid = observation_from_json(e.at("centroid"));
      rec.time = t;
      if (rec.verdict == Verdict::Accepted) {
        rec.accepted_index = ++accepted;
        rec.duration = t - last_accept;
        rec.honest_reports = window_reports;
        rec.error = consensus_error(rec.centroid, m.reference);
        const double to_valuable = distance(rec.centroid, valuable_color);
        for (const auto& other : other_colors) {
          if (distance(rec.centroid, other) < to_valuable) m.violated_safety = true;
        }
        last_accept = t;
        window_reports = 0;
      }
      m.agreements.push_back(std::move(rec));
    } else if (type == "block") {
      m.max_open_clusters = std::max(m.max_open_clusters, e.at("open").get<std::size_t>());
    } else if (type == "deliveries") {
      for (const auto& row : e.at("rows")) {
        m.deliveries.push_back({row.at(0).get<std::uint64_t>(), row.at(1).get<RobotId>(),
                                row.at(2).get<double>()});
      }
      missing = e.at("missing").get<std::size_t>();
    } else if (type == "end") {
      m.end_time = e.at("t").get<double>();
      m.stop_reached = e.at("stop_reached").get<bool>();
    }
  }
  m.block_delay = block_delay_stats(m.deliveries, missing);
  if (!accept_reports.empty()) {
    m.baseline = baseline_average(accept_reports);
    m.baseline_error = consensus_error(*m.baseline, m.reference);
  }
  return m;
}

std::vector<double> time_to_consensus(const std::vector<Json>& log) {
  std::vector<double> out;
  for (const auto& a : metrics_from_log(log).agreements) {
    if (a.verdict == Verdict::Accepted) out.push_back(a.duration);
  }
  return out;
}

std::vector<std::uint64_t> reports_to_consensus(const std::vector<Json>& log) {
  std::vector<std::uint64_t> out;
  for (const auto& a : metrics_from_log(log).agreements) {
    if (a.verdict == Verdict::Accepted) out.push_back(a.honest_reports);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner

namespace {

const Landmark& valuable_landmark(const std::vector<Landmark>& landmarks) {
  for (const auto& l : landmarks) {
    if (l.valuable) return l;
  }
  throw Error("no valuable landmark");
}

Observation reference_value(const World& world, const std::set<RobotId>& honest) {
  const Landmark& target = valuable_landmark(world.landmarks);
  if (const auto& ds = world.config.sensing.dataset) {
    if (auto mean = ds->mean(target.name, honest)) return *mean;
    if (auto mean = ds->mean(target.name, {})) return *mean;
  }
  std::vector<double> ref(target.true_color.components().begin(), target.true_color.components().end());
  if (!honest.empty()) {
    for (const auto& r : world.robots) {
      if (!honest.contains(r.id)) continue;
      for (std::size_t i = 0; i < ref.size() && i < r.bias.dimension(); ++i) {
        ref[i] += r.bias[i] / static_cast<double>(honest.size());
      }
    }
  }
  return Observation(std::move(ref));
}

bool stop_reached(const StopRule& rule, double now, std::size_t accepted) {
  switch (rule.kind) {
    case StopKind::FirstAcceptedAgreement: return accepted >= 1;
    case StopKind::AgreementCount: return accepted >= rule.count;
    case StopKind::MaxSimTime: return now >= rule.seconds - 1e-9;
  }
  return false;
}

}  // namespace

RunResult run(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  SwarmConfig swarm = config.swarm;
  swarm.robots = config.robots;
  if (!config.dataset.empty()) swarm.sensing.dataset = ObservationDataset::load(config.dataset);

  ContractParams params;
  params.quota = config.quota;
  params.issuance = config.issuance_amount();
  params.radius = config.radius;
  params.weighting = config.weighting;
  params.deposit_base = config.deposit_base;
  params.dimension = swarm.landmarks.front().true_color.dimension();
  ContractState genesis = ContractState::with_equal_shares(
      params, config.robots, TokenAmount::tokens(config.tokens_per_robot));

  std::vector<BehaviorKind> behaviors(config.robots, BehaviorKind::Honest);
  const auto attacker_ids = config.attacker_ids();
  for (RobotId a : attacker_ids) behaviors[a - 1] = config.attack;
  World world = World::create(swarm, seed, behaviors);

  std::set<RobotId> honest;
  for (RobotId r = 1; r <= config.robots; ++r) {
    if (behaviors[r - 1] == BehaviorKind::Honest) honest.insert(r);
  }

  std::vector<Json> events;
  {
    Json holdings = Json::array();
    for (const auto& [robot, amount] : genesis.balances()) holdings.push_back({robot, amount.units()});
    Json landmarks = Json::array();
    for (const auto& l : world.landmarks) landmarks.push_back(landmark_json(l));
    events.push_back({{"t", 0.0},
                      {"type", "header"},
                      {"v", kSchemaVersion},
                      {"seed", seed},
                      {"config", config.to_json()},
                      {"attackers", attacker_ids},
                      {"reference", to_json(reference_value(world, honest))},
                      {"holdings", std::move(holdings)},
                      {"supply", genesis.supply().units()},
                      {"issuance", params.issuance.units()},
                      {"landmarks", std::move(landmarks)}});
  }

  Simulation sim(std::move(world), genesis, [&events](Json e) { events.push_back(std::move(e)); });
  bool reached = false;
  while (true) {
    sim.tick();
    const double now = sim.now();
    if (stop_reached(config.stop, now, sim.ledger().canonical_state().consensus().size())) {
      reached = true;
      break;
    }
    if (now >= config.stop.max_time - 1e-9) break;
  }

  {
    Json rows = Json::array();
    for (const auto& d : sim.ledger().deliveries()) rows.push_back({d.block, d.robot, d.delay});
    events.push_back({{"t", sim.now()},
                      {"type", "deliveries"},
                      {"rows", std::move(rows)},
                      {"missing", sim.ledger().undelivered()}});
  }

  RunResult result;
  result.config = config;
  result.seed = seed;
  result.node_digests = sim.finish();
  result.chain = export_chain(sim.ledger().genesis(), sim.ledger().chain());
  {
    ParsedChain parsed = parse_chain(result.chain);
    result.replay_digest = state_digest(replay(std::move(parsed.genesis), parsed.blocks));
  }
  const std::string canonical = state_digest(sim.ledger().canonical_state());
  events.push_back({{"t", sim.now()},
                    {"type", "end"},
                    {"stop_reached", reached},
                    {"blocks", sim.ledger().chain().size()},
                    {"canonical_digest", canonical},
                    {"replay_digest", result.replay_digest},
                    {"node_digests", result.node_digests}});

  if (canonical != result.replay_digest) {
    throw Error("global consensus violation: canonical state differs from chain replay (seed " +
                std::to_string(seed) + ")");
  }
  for (std::size_t i = 0; i < result.node_digests.size(); ++i) {
    if (result.node_digests[i] != result.replay_digest) {
      throw Error("global consensus violation: robot " + std::to_string(i + 1) +
                  " diverges from chain replay (seed " + std::to_string(seed) + ")");
    }
  }

  result.metrics = metrics_from_log(events);
  if (config.keep_events) {
    std::string text;
    for (const auto& e : events) {
      text += e.dump();
      text += '\n';
    }
    result.events = std::move(text);
  }
  return result;
}

std::vector<RunResult> run_all(const std::vector<ExperimentConfig>& configs, unsigned threads) {
  std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    configs[c].validate();
    for (auto seed : configs[c].seeds) jobs.emplace_back(c, seed);
  }
  std::vector<std::optional<RunResult>> slots(jobs.size());
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        slots[i] = run(configs[jobs[i].first], jobs[i].second);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<RunResult> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

std::string value_label(const Json& v) {
  if (v.is_string()) return v.get<std::string>();
  std::string s = v.dump();
  std::replace(s.begin(), s.end(), '/', '-');
  return s;
}

}  // namespace

std::vector<ExperimentConfig> expand_matrix(const Json& matrix) {
  check_keys(matrix, {"base", "grid", "comment"}, "matrix");
  const Json base = matrix.value("base", Json::object());
  const Json grid = matrix.value("grid", Json::object());
  if (!grid.is_object()) throw Error("matrix grid must be an object");

  std::vector<std::pair<std::string, std::vector<Json>>> axes;
  for (const auto& [key, values] : grid.items()) {
    if (!values.is_array() || values.empty()) {
      throw Error("grid axis '" + key + "' must be a non-empty list");
    }
    axes.emplace_back(key, std::vector<Json>(values.begin(), values.end()));
  }

  std::vector<ExperimentConfig> out;
  std::vector<std::size_t> idx(axes.size(), 0);
  const std::string base_name = base.value("name", std::string("sweep"));
  while (true) {
    Json point = base;
    std::string name = base_name;
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const auto& [key, values] = axes[a];
      const Json& v = values[idx[a]];
      // dotted keys address nested objects, e.g. "swarm.speed"
      std::string pointer = "/" + key;
      std::replace(pointer.begin(), pointer.end(), '.', '/');
      point[Json::json_pointer(pointer)] = v;
      name += "_" + key.substr(key.rfind('.') + 1) + "=" + value_label(v);
    }
    point["name"] = name;
    out.push_back(ExperimentConfig::from_json(point));

    std::size_t a = 0;
    for (; a < axes.size(); ++a) {
      if (++idx[a] < axes[a].second.size()) break;
      idx[a] = 0;
    }
    if (a == axes.size()) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Emission

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

struct Table {
  std::ofstream out;
  fs::path path;

  Table(const fs::path& p, const std::vector<std::string>& header) : out(p), path(p) {
    if (!out) throw Error("cannot write " + p.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
    if (!out) throw Error("write failed: " + path.string());
  }
};

struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
};

Stats stats_of(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  if (xs.empty()) return s;
  s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return s;
}

std::vector<std::string> config_cells(const ExperimentConfig& c) {
  return {c.name,  std::to_string(c.robots),   std::to_string(c.attackers), to_string(c.attack),
          num(c.radius), c.quota.to_string(), to_string(c.issuance)};
}

const std::vector<std::string> kConfigColumns{"name", "robots", "attackers", "attack",
                                              "radius", "quota", "issuance"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// File-name-safe tag; config names may carry values such as "1/3".
std::string run_tag(const RunResult& r) {
  std::string tag = r.config.name + "_s" + std::to_string(r.seed);
  for (char& ch : tag) {
    const bool safe = std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '_' ||
                      ch == '=' || ch == '-';
    if (!safe) ch = '-';
  }
  return tag;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

const AgreementRecord* first_accepted(const RunMetrics& m) {
  for (const auto& a : m.agreements) {
    if (a.verdict == Verdict::Accepted) return &a;
  }
  return nullptr;
}

std::optional<double> mean_error(const RunMetrics& m) {
  std::vector<double> errs;
  for (const auto& a : m.agreements) {
    if (a.error) errs.push_back(*a.error);
  }
  if (errs.empty()) return std::nullopt;
  return stats_of(errs).mean;
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : ""; }

}  // namespace

void emit(const std::vector<RunResult>& results, const fs::path& dir) {
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.node_digests.size(); ++i) {
      if (r.node_digests[i] != r.replay_digest) {
        throw Error("global consensus violation in " + run_tag(r) + ": robot " +
                    std::to_string(i + 1) + " digest differs from chain replay");
      }
    }
  }
  std::error_code ec;
  fs::create_directories(dir / "events", ec);
  if (ec) throw Error("cannot create " + (dir / "events").string() + ": " + ec.message());
  fs::create_directories(dir / "chains", ec);
  if (ec) throw Error("cannot create " + (dir / "chains").string() + ": " + ec.message());

  Table runs(dir / "runs.csv",
             concat(kConfigColumns,
                    {"seed", "accepted", "decisive", "first_time_min", "first_honest_reports",
                     "mean_error", "baseline_error", "violated_safety", "stop_reached",
                     "end_time_min", "block_delay_mean_s", "block_delay_p90_s", "max_open",
                     "digest"}));
  Table agreements(dir / "agreements.csv",
                   concat(kConfigColumns,
                          {"seed", "index", "accepted_index", "verdict", "cluster", "founder",
                           "attacker_founded", "founder_landmark", "time_min", "duration_min", "honest_reports",
                           "error", "centroid"}));
  Table share(dir / "attacker_share.csv",
              concat(kConfigColumns, {"seed", "violated_safety", "settlement", "time_min", "share"}));

  for (const auto& r : results) {
    const auto& m = r.metrics;
    const auto cfg = config_cells(r.config);
    const auto* first = first_accepted(m);
    std::uint32_t accepted = 0;
    for (const auto& a : m.agreements) accepted += a.verdict == Verdict::Accepted ? 1 : 0;
    runs.row(concat(cfg, {std::to_string(r.seed), std::to_string(accepted),
                          std::to_string(m.agreements.size()),
                          first ? num(first->duration / 60.0) : "",
                          first ? std::to_string(first->honest_reports) : "", opt(mean_error(m)),
                          opt(m.baseline_error), m.violated_safety ? "1" : "0",
                          m.stop_reached ? "1" : "0", num(m.end_time / 60.0),
                          num(m.block_delay.mean), num(m.block_delay.p90),
                          std::to_string(m.max_open_clusters), r.replay_digest}));
    for (const auto& a : m.agreements) {
      std::string centroid;
      for (std::size_t i = 0; i < a.centroid.dimension(); ++i) {
        if (i) centroid += ' ';
        centroid += num(a.centroid[i]);
      }
      const bool acc = a.verdict == Verdict::Accepted;
      agreements.row(concat(
          cfg, {std::to_string(r.seed), std::to_string(a.index), std::to_string(a.accepted_index),
                to_string(a.verdict), std::to_string(a.cluster), std::to_string(a.founder),
                a.attacker_founded ? "1" : "0", a.founder_landmark, num(a.time / 60.0),
                acc ? num(a.duration / 60.0) : "", acc ? std::to_string(a.honest_reports) : "",
                opt(a.error), centroid}));
    }
    for (const auto& p : m.attacker_share) {
      share.row(concat(cfg, {std::to_string(r.seed), m.violated_safety ? "1" : "0",
                             std::to_string(p.settlement), num(p.time / 60.0), num(p.share)}));
    }
    write_file(dir / "events" / (run_tag(r) + ".jsonl"), r.events);
    write_file(dir / "chains" / (run_tag(r) + ".jsonl"), r.chain);
  }

  // Aggregates across seeds, keyed by the parameters each figure varies.
  using Key = std::vector<std::string>;
  std::map<Key, std::vector<double>> err, base_err, cost_t, cost_n;
  std::map<Key, std::vector<double>> rec_t, rec_n;
  for (const auto& r : results) {
    const auto& c = r.config;
    const Key key{to_string(c.attack), std::to_string(c.attackers), num(c.radius),
                  c.quota.to_string(), to_string(c.issuance)};
    if (auto e = mean_error(r.metrics)) err[key].push_back(*e);
    if (r.metrics.baseline_error) base_err[key].push_back(*r.metrics.baseline_error);
    if (const auto* f = first_accepted(r.metrics)) {
      cost_t[key].push_back(f->duration / 60.0);
      cost_n[key].push_back(static_cast<double>(f->honest_reports));
    }
    for (const auto& a : r.metrics.agreements) {
      if (a.verdict != Verdict::Accepted) continue;
      Key k = key;
      k.push_back(std::to_string(a.accepted_index));
      rec_t[k].push_back(a.duration / 60.0);
      rec_n[k].push_back(static_cast<double>(a.honest_reports));
    }
  }
  std::set<Key> keys;
  for (const auto& [k, _] : err) keys.insert(k);
  for (const auto& [k, _] : base_err) keys.insert(k);
  for (const auto& [k, _] : cost_t) keys.insert(k);

  const std::vector<std::string> key_cols{"attack", "attackers", "radius", "quota", "issuance"};
  auto stat_cells = [](const Stats& s) {
    return std::vector<std::string>{std::to_string(s.n), num(s.mean), num(s.sd)};
  };
  {
    Table by_r(dir / "error_vs_R.csv",
               concat(key_cols, {"n", "mean_error", "sd_error", "n_baseline", "mean_baseline_error",
                                 "sd_baseline_error"}));
    Table by_f(dir / "error_vs_f.csv",
               concat(key_cols, {"n", "mean_error", "sd_error", "n_baseline", "mean_baseline_error",
                                 "sd_baseline_error"}));
    Table cost(dir / "cost_vs_f.csv",
               concat(key_cols, {"n", "mean_time_min", "sd_time_min", "n_reports",
                                 "mean_honest_reports", "sd_honest_reports"}));
    for (const auto& k : keys) {
      const auto e = concat(stat_cells(stats_of(err[k])), stat_cells(stats_of(base_err[k])));
      by_r.row(concat(k, e));
      by_f.row(concat(k, e));
      cost.row(concat(k, concat(stat_cells(stats_of(cost_t[k])), stat_cells(stats_of(cost_n[k])))));
    }
  }
  {
    Table rec(dir / "recovery.csv",
              concat(key_cols, {"agreement", "n", "mean_time_min", "sd_time_min", "n_reports",
                                "mean_honest_reports", "sd_honest_reports"}));
    for (const auto& [k, ts] : rec_t) {
      rec.row(concat(k, concat(stat_cells(stats_of(ts)), stat_cells(stats_of(rec_n[k])))));
    }
  }
  {
    std::vector<Delivery> pooled;
    for (const auto& r : results) {
      pooled.insert(pooled.end(), r.metrics.deliveries.begin(), r.metrics.deliveries.end());
    }
    Table delay(dir / "block_delay.csv", {"delay_s", "cdf"});
    for (const auto& [d, p] : delay_cdf(pooled)) delay.row({num(d), num(p)});
  }

  Json manifest{{"v", kSchemaVersion}, {"runs", Json::array()}};
  for (const auto& r : results) {
    manifest["runs"].push_back({{"config", r.config.to_json()},
                                {"seed", r.seed},
                                {"digest", r.replay_digest},
                                {"node_digests_agree", true},
                                {"events", "events/" + run_tag(r) + ".jsonl"},
                                {"chain", "chains/" + run_tag(r) + ".jsonl"}});
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace swarm_oracle
