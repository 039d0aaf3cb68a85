#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "swarm_oracle/experiments.hpp"

using namespace swarm_oracle;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void summarize(const std::vector<RunResult>& results, std::ostream& out) {
  for (const auto& r : results) {
    std::size_t accepted = 0;
    for (const auto& a : r.metrics.agreements) accepted += a.verdict == Verdict::Accepted ? 1 : 0;
    out << r.config.name << " seed=" << r.seed << " accepted=" << accepted
        << " decisive=" << r.metrics.agreements.size() << " t_end=" << r.metrics.end_time
        << "s stop_reached=" << (r.metrics.stop_reached ? "yes" : "no")
        << " digest=" << r.replay_digest.substr(0, 16) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Swarm Oracle consensus simulator and experiment runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  unsigned threads = 0;
  auto* run_cmd = app.add_subcommand("run", "Run one experiment configuration");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", seed, "Run only this seed");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string chain_path;
  auto* replay_cmd = app.add_subcommand("replay", "Replay an exported chain and print the final state digest");
  replay_cmd->add_option("--chain", chain_path, "Chain export (JSONL)")->required()->check(CLI::ExistingFile);

  std::string matrix_path;
  std::string sweep_out = "sweep_out";
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a cartesian parameter grid");
  sweep_cmd->add_option("--matrix", matrix_path, "Matrix file (JSON)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out", sweep_out, "Output directory");
  sweep_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      ExperimentConfig config = ExperimentConfig::load(config_path);
      if (seed) config.seeds = {*seed};
      const auto results = run_all({config}, threads);
      emit(results, out_dir);
      summarize(results, std::cout);
    } else if (*replay_cmd) {
      const ParsedChain parsed = parse_chain(read_file(chain_path));
      const ContractState state = replay(parsed.genesis, parsed.blocks);
      Json summary{{"blocks", parsed.blocks.size()},
                   {"digest", state_digest(state)},
                   {"supply", state.supply().units()},
                   {"decisive_settlements", state.decisive_settlements()},
                   {"open_clusters", state.open_clusters().size()},
                   {"consensus", Json::array()}};
      Json open = Json::array();
      for (const auto& c : state.open_clusters()) {
        Json members = Json::array();
        for (const auto& m : c.members) members.push_back(m.report.robot);
        open.push_back({{"id", c.id}, {"pool", c.pool.units()}, {"centroid", to_json(c.centroid)},
                        {"members", std::move(members)}});
      }
      summary["open"] = std::move(open);
      for (const auto& a : state.consensus()) {
        summary["consensus"].push_back(
            {{"cluster", a.cluster}, {"block", a.block_index}, {"value", to_json(a.value)}});
      }
      std::cout << summary.dump(2) << "\n";
    } else if (*sweep_cmd) {
      std::ifstream in(matrix_path);
      Json matrix;
      try {
        matrix = Json::parse(in);
      } catch (const Json::exception& e) {
        throw Error("cannot parse matrix " + matrix_path + ": " + e.what());
      }
      const auto configs = expand_matrix(matrix);
      const auto results = run_all(configs, threads);
      emit(results, sweep_out);
      summarize(results, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
