// dtopo: build, exercise and check distributed space-tree topologies.
//
// Exit codes: 0 pass, 1 consistency violation or failed run, 2 usage error.

#include "dtopo/errors.hpp"
#include "dtopo/harness.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <map>

using namespace dtopo;

namespace {

constexpr int kPass = 0;
constexpr int kViolation = 1;
constexpr int kUsage = 2;

const std::map<std::string, Linearization> kSchemes{{"morton", Linearization::Morton},
                                                    {"depth-first", Linearization::DepthFirst}};
const std::map<std::string, PatternKind> kPatterns{{"structured", PatternKind::Structured},
                                                   {"joined", PatternKind::Joined}};
const std::map<std::string, Mode> kModes{{"decentral", Mode::Decentral}, {"central", Mode::Central}};

std::ostream& open_out(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw ConfigError("cannot write " + path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralised space-tree topology simulator"};
  app.require_subcommand(1);
  bool threads = false;
  app.add_flag("--threads", threads, "run every rank on its own thread");

  auto* gen = app.add_subcommand("gen", "build, distribute and dump a uniform tree");
  int gen_depth = 3;
  std::size_t gen_ranks = 4;
  Linearization gen_scheme = Linearization::Morton;
  std::string gen_out;
  gen->add_option("--depth", gen_depth, "uniform depth")->check(CLI::Range(0, 8));
  gen->add_option("--ranks", gen_ranks, "rank count")->check(CLI::PositiveNumber);
  gen->add_option("--scheme", gen_scheme, "morton or depth-first")->transform(CLI::CheckedTransformer(kSchemes));
  gen->add_option("--out", gen_out, "dump file (default stdout)");

  auto* bench = app.add_subcommand("bench", "uniform refinement by one level");
  Mode bench_mode = Mode::Decentral;
  int bench_from = 3;
  int bench_to = 4;
  std::size_t bench_ranks = 4;
  PatternKind bench_pattern = PatternKind::Structured;
  std::size_t bench_payload = 0;
  std::string bench_out;
  bench->add_option("--mode", bench_mode, "decentral or central")->transform(CLI::CheckedTransformer(kModes));
  bench->add_option("--from", bench_from, "start depth")->check(CLI::Range(0, 7));
  bench->add_option("--to", bench_to, "end depth, from + 1")->check(CLI::Range(1, 8));
  bench->add_option("--ranks", bench_ranks, "rank count")->check(CLI::PositiveNumber);
  bench->add_option("--pattern", bench_pattern, "structured or joined")->transform(CLI::CheckedTransformer(kPatterns));
  bench->add_option("--payload", bench_payload, "bytes of simulation data per grid");
  bench->add_option("--out", bench_out, "stats CSV (default stdout)");

  auto* fz = app.add_subcommand("fuzz", "random rounds checked after each round");
  FuzzOptions fo;
  std::string fuzz_artifacts = "fuzz-failure";
  fz->add_option("--seed", fo.seed, "RNG seed");
  fz->add_option("--ops", fo.ops, "number of rounds")->check(CLI::PositiveNumber);
  fz->add_option("--ranks", fo.ranks, "rank count")->check(CLI::PositiveNumber);
  fz->add_option("--depth", fo.depth, "deepest level")->check(CLI::Range(1, 6));
  fz->add_option("--pattern", fo.pattern, "structured or joined")->transform(CLI::CheckedTransformer(kPatterns));
  fz->add_option("--artifacts", fuzz_artifacts, "directory for the failing scenario and dumps");

  auto* check = app.add_subcommand("check", "consistency check of topology dumps");
  std::vector<std::string> check_files;
  check->add_option("dumps", check_files, "dump files; all ranks together")->required()->check(CLI::ExistingFile);

  auto* run = app.add_subcommand("run", "replay a scenario file");
  std::string run_file;
  std::string run_dumps;
  std::string run_stats;
  std::string run_mode;
  run->add_option("scenario", run_file, "scenario file")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", run_mode, "override the scenario's mode")->check(CLI::IsMember({"decentral", "central"}));
  run->add_option("--dumps", run_dumps, "write final dumps here");
  run->add_option("--stats", run_stats, "write per-cycle stats CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const Executor executor = threads ? Executor::Threaded : Executor::RoundBased;

  try {
    if (*gen) {
      DomainSpec spec;
      spec.max_depth = std::max(spec.max_depth, gen_depth);
      TransportConfig cfg;
      cfg.executor = executor;
      auto dist = initial_distribute(spec, gen_depth, gen_ranks, gen_scheme, cfg);
      std::ofstream file;
      auto& os = open_out(gen_out, file);
      for (const auto& t : dist.ranks) write_dump(os, snapshot(t, spec.factor));
      return kPass;
    }
    if (*bench) {
      BenchOptions bo;
      bo.ranks = bench_ranks;
      bo.mode = bench_mode;
      bo.pattern = bench_pattern;
      bo.payload_bytes = bench_payload;
      bo.transport.executor = executor;
      const auto res = bench_refine(bench_from, bench_to, bo);
      std::ofstream file;
      auto& os = open_out(bench_out, file);
      write_stats_csv(os, res.cycles, bo.transport.alpha, bo.transport.beta);
      std::cerr << to_string(bench_mode) << " P=" << bench_ranks << " grids " << res.initial_grids << " -> "
                << res.final_grids << " max_rank_msgs=" << res.max_rank_msgs << " rank0_msgs=" << res.rank0_msgs
                << " modeled_time=" << res.max_modeled_time << "\n";
      return kPass;
    }
    if (*fz) {
      fo.executor = executor;
      const auto res = fuzz(fo);
      if (res.pass) {
        std::cout << "pass: seed " << fo.seed << ", " << res.rounds_run << " rounds\n";
        return kPass;
      }
      write_failure_artifacts(res, fuzz_artifacts);
      std::cout << "FAIL in round " << *res.failed_round << " (artifacts in " << fuzz_artifacts << ")\n"
                << res.failure << "\n";
      return kViolation;
    }
    if (*check) {
      std::vector<RankDump> dumps;
      for (const auto& f : check_files) {
        std::ifstream in(f);
        for (auto& d : parse_dumps(in)) dumps.push_back(std::move(d));
      }
      const auto rep = check_consistency(dumps);
      std::cout << rep.describe();
      return rep.ok() ? kPass : kViolation;
    }
    if (*run) {
      std::ifstream in(run_file);
      Scenario s = parse_scenario(in);
      if (!run_mode.empty()) s.mode = parse_mode(run_mode);
      const auto res = run_scenario(s, executor);
      if (!run_dumps.empty()) {
        std::ofstream out(run_dumps);
        out << res.final_dumps;
      }
      if (!run_stats.empty()) {
        std::vector<TrafficStats> cycles;
        for (const auto& r : res.rounds) cycles.insert(cycles.end(), r.cycles.begin(), r.cycles.end());
        std::ofstream out(run_stats);
        const TransportConfig cfg;
        write_stats_csv(out, cycles, cfg.alpha, cfg.beta);
      }
      if (!res.ok()) {
        std::cout << "FAIL in round " << *res.failed_round << "\n" << res.failure << "\n";
        return kViolation;
      }
      std::cout << "pass: " << res.rounds.size() << " rounds\n";
      return kPass;
    }
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kViolation;
  }
  return kUsage;
}
