#include <map>
#include <string>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "swarm_oracle/contract.hpp"
#include "swarm_oracle/experiments.hpp"
#include "swarm_oracle/ledger.hpp"
#include "swarm_oracle/serialize.hpp"

namespace py = pybind11;
using namespace swarm_oracle;

namespace {

// JSON crosses the boundary as text; Python's json module does the rest.
py::object to_py(const Json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Json from_py(const py::handle& obj) {
  const std::string text = py::str(py::module_::import("json").attr("dumps")(obj));
  return Json::parse(text);
}

Json apply_result_json(const ApplyResult& r) {
  Json out{{"disposition", to_string(r.disposition)},
           {"reason", to_string(r.reason)},
           {"coerced", r.coerced},
           {"settlements", Json::array()}};
  out["cluster"] = r.cluster ? Json(*r.cluster) : Json(nullptr);
  for (const auto& s : r.settlements) out["settlements"].push_back(to_json(s));
  return out;
}

Json run_summary(const RunResult& r) {
  const RunMetrics& m = r.metrics;
  Json agreements = Json::array();
  for (const auto& a : m.agreements) {
    agreements.push_back({{"index", a.index},
                          {"accepted_index", a.accepted_index},
                          {"verdict", to_string(a.verdict)},
                          {"cluster", a.cluster},
                          {"founder", a.founder},
                          {"attacker_founded", a.attacker_founded},
                          {"founder_landmark", a.founder_landmark},
                          {"centroid", to_json(a.centroid)},
                          {"time", a.time},
                          {"duration", a.duration},
                          {"honest_reports", a.honest_reports},
                          {"error", a.error ? Json(*a.error) : Json(nullptr)}});
  }
  Json share = Json::array();
  for (const auto& p : m.attacker_share) {
    share.push_back({{"settlement", p.settlement},
                     {"time", p.time},
                     {"share", p.share},
                     {"attacker_units", p.attacker_units},
                     {"supply_units", p.supply_units}});
  }
  return {{"config", r.config.to_json()},
          {"seed", r.seed},
          {"digest", r.replay_digest},
          {"node_digests", r.node_digests},
          {"agreements", std::move(agreements)},
          {"attacker_share", std::move(share)},
          {"reports", m.reports},
          {"honest_reports", m.honest_reports},
          {"max_open_clusters", m.max_open_clusters},
          {"end_time", m.end_time},
          {"stop_reached", m.stop_reached},
          {"violated_safety", m.violated_safety},
          {"block_delay_mean", m.block_delay.mean},
          {"baseline_error", m.baseline_error ? Json(*m.baseline_error) : Json(nullptr)},
          {"chain", r.chain},
          {"events", r.events}};
}

ContractParams make_params(const std::string& quota, std::uint64_t issuance_units, double radius,
                           std::size_t dimension, const std::string& weighting,
                           const std::string& deposit_base) {
  ContractParams p;
  p.quota = Quota::parse(quota);
  p.issuance = TokenAmount(issuance_units);
  p.radius = radius;
  p.dimension = dimension;
  p.weighting = deposit_weighting_from_string(weighting);
  p.deposit_base = deposit_base_from_string(deposit_base);
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reputation-weighted oracle contract, ledger replay and swarm experiments";
  m.attr("UNITS_PER_TOKEN") = kUnitsPerToken;

  py::register_exception<Error>(m, "Error");

  py::class_<ContractState>(m, "Contract")
      .def(py::init([](const std::map<RobotId, std::uint64_t>& balances, const std::string& quota,
                       std::uint64_t issuance, double radius, std::size_t dimension,
                       const std::string& weighting, const std::string& deposit_base) {
             std::map<RobotId, TokenAmount> initial;
             for (const auto& [robot, units] : balances) initial.emplace(robot, TokenAmount(units));
             return ContractState(
                 make_params(quota, issuance, radius, dimension, weighting, deposit_base),
                 std::move(initial));
           }),
           py::arg("balances"), py::arg("quota") = "1/3", py::arg("issuance") = 0,
           py::arg("radius") = 60.0, py::arg("dimension") = 3,
           py::arg("weighting") = "supply_adjusted", py::arg("deposit_base") = "holdings",
           "Balances map robot id to base units.")
      .def(
          "apply_report",
          [](ContractState& self, const py::dict& report, std::uint64_t block) {
            return to_py(apply_result_json(self.apply_report(report_from_json(from_py(report)), block)));
          },
          py::arg("report"), py::arg("block_index") = 0)
      .def("required_deposit",
           [](const ContractState& self, RobotId robot) { return self.required_deposit(robot).units(); })
      .def("holdings", [](const ContractState& self, RobotId robot) { return self.holdings(robot).units(); })
      .def_property_readonly("supply", [](const ContractState& self) { return self.supply().units(); })
      .def_property_readonly("decisive_settlements", &ContractState::decisive_settlements)
      .def_property_readonly("accounted_total",
                             [](const ContractState& self) { return self.accounted_total().units(); })
      .def("state", [](const ContractState& self) { return to_py(to_json(self)); })
      .def("digest", [](const ContractState& self) { return state_digest(self); });

  m.def(
      "run",
      [](const py::dict& config, std::uint64_t seed) {
        RunResult result;
        const ExperimentConfig cfg = ExperimentConfig::from_json(from_py(config));
        {
          py::gil_scoped_release release;
          result = swarm_oracle::run(cfg, seed);
        }
        return to_py(run_summary(result));
      },
      py::arg("config"), py::arg("seed"), "Simulate one configuration with one seed.");

  m.def(
      "expand_matrix",
      [](const py::dict& matrix) {
        Json out = Json::array();
        for (const auto& cfg : expand_matrix(from_py(matrix))) out.push_back(cfg.to_json());
        return to_py(out);
      },
      py::arg("matrix"));

  m.def(
      "replay_chain",
      [](const std::string& text) {
        const ParsedChain parsed = parse_chain(text);
        const ContractState state = replay(parsed.genesis, parsed.blocks);
        return to_py(Json{{"blocks", parsed.blocks.size()},
                          {"digest", state_digest(state)},
                          {"supply", state.supply().units()},
                          {"consensus", state.consensus().size()}});
      },
      py::arg("chain"), "Replay an exported chain and return its final digest.");

  m.def(
      "consensus_error",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return consensus_error(Observation(a), Observation(b));
      },
      py::arg("agreement"), py::arg("reference"));
}
