#pragma once

#include "dtopo/central.hpp"
#include "dtopo/dump.hpp"
#include "dtopo/protocol.hpp"
#include "dtopo/scenario.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dtopo {

struct Distribution {
  std::vector<RankTopology> ranks;
  // Traffic of the master sending every rank its hulls.
  TrafficStats traffic;
};

// Rank 0 builds the uniform tree, sorts it along the curve, cuts balanced
// slices, rewrites every link to the destination UID and sends each rank
// its hulls. Payload blobs are attached by each rank afterwards.
Distribution initial_distribute(const DomainSpec& spec, int depth, std::size_t ranks, Linearization scheme,
                                const TransportConfig& config = {}, std::size_t payload_bytes = 0);

// A running scenario in either mode.
class Simulation {
 public:
  explicit Simulation(const Scenario& scenario, Executor executor = Executor::RoundBased);
  Simulation(const Scenario& scenario, const TransportConfig& config);

  const Scenario& scenario() const { return scenario_; }
  Cluster& cluster() { return *cluster_; }
  const Cluster& cluster() const { return *cluster_; }
  const TrafficStats& distribution_traffic() const { return distribution_; }

  // Explicit migrate ops override the balancer for that round.
  RoundReport run_round(const ScenarioRound& round);
  RoundReport run_round(const std::vector<RefineDeleteBatch>& batches, const PlanSource& plans);

  std::vector<RankDump> dumps() const;
  // All rank dumps concatenated in rank order.
  std::string dump_text() const;
  ConsistencyReport check() const;

 private:
  Scenario scenario_;
  std::unique_ptr<Cluster> cluster_;
  std::unique_ptr<CentralManager> manager_;
  std::unique_ptr<Balancer> balancer_;
  TrafficStats distribution_;
};

struct ScenarioResult {
  std::vector<RoundReport> rounds;
  std::string final_dumps;
  // First round whose state failed the check, counted from 1.
  std::optional<std::size_t> failed_round;
  std::string failure;

  bool ok() const { return !failed_round; }
};

ScenarioResult run_scenario(const Scenario& scenario, Executor executor = Executor::RoundBased, bool check_rounds = true);

// Every leaf at depth `from` refines once.
std::vector<RefineDeleteBatch> uniform_refine_batches(const Cluster& cluster, int from);

struct BenchResult {
  std::uint64_t initial_grids = 0;
  std::uint64_t final_grids = 0;
  std::vector<TrafficStats> cycles;
  TrafficStats total;
  std::uint64_t max_rank_msgs = 0;
  std::uint64_t rank0_msgs = 0;
  double max_modeled_time = 0.0;
};

struct BenchOptions {
  std::size_t ranks = 4;
  Mode mode = Mode::Decentral;
  Linearization scheme = Linearization::Morton;
  PatternKind pattern = PatternKind::Structured;
  TransportConfig transport;
  std::size_t payload_bytes = 0;
};

// Uniform refinement from one depth to the next; grid totals are checked
// against the closed form.
BenchResult bench_refine(int from, int to, const BenchOptions& options);

struct FuzzOptions {
  std::uint64_t seed = 1;
  int ops = 100;
  std::size_t ranks = 8;
  // Deepest level grids may reach; the start tree is one level shallower
  // unless that leaves a rank without a grid.
  int depth = 3;
  Executor executor = Executor::RoundBased;
  PatternKind pattern = PatternKind::Structured;
};

struct FuzzResult {
  bool pass = true;
  int rounds_run = 0;
  std::optional<int> failed_round;
  std::string failure;
  // Replayable scenario, cut after the failing round when there is one.
  Scenario scenario;
  std::string final_dumps;
  std::vector<TrafficStats> traffic;
  FanoutStats fanout;
};

// Seeded random rounds of refinements, deletions and migrations, each
// followed by a full consistency check.
FuzzResult fuzz(const FuzzOptions& options);

// Writes scenario.txt and dumps.jsonl into dir.
void write_failure_artifacts(const FuzzResult& result, const std::filesystem::path& dir);

}  // namespace dtopo
