#pragma once

// Decentralised topology updates. One round is three exchange cycles over
// the communication pattern: refine/delete, then migration grids, then
// migration reference updates. Children of a refined neighbour that live on
// a third rank are reached through one extra update pass that reuses the
// migration update routine.

#include "dtopo/balancer.hpp"
#include "dtopo/schedule.hpp"
#include "dtopo/spacetree.hpp"
#include "dtopo/topology.hpp"
#include "dtopo/transport.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <vector>

namespace dtopo {

enum class IntentKind { Refine, Delete };

struct Intent {
  IntentKind kind = IntentKind::Refine;
  std::uint32_t gid = 0;
  friend bool operator==(const Intent&, const Intent&) = default;
};
using RefineDeleteBatch = std::vector<Intent>;

// A link the origin of a migration must have rewritten: holder's slot
// (face direction, subgrid with hash, or supergrid) should name value.
struct UpdateEntry {
  GridUid holder;
  Direction slot = Direction::East;
  std::uint32_t hash = 0;
  GridUid value;
};
using UpdateList = std::vector<UpdateEntry>;

enum class PatternKind { Structured, Joined };

struct FanoutStats {
  std::uint64_t refined = 0;
  std::uint64_t deleted = 0;
  std::uint64_t migrated = 0;
  std::uint64_t max_per_refine = 0;
  std::uint64_t max_per_delete = 0;
  std::uint64_t max_per_migrate = 0;
  // Cross-rank neighbour slots written while linking new children.
  std::uint64_t cross_link_writes = 0;
  std::uint64_t duplicates_erased = 0;
  std::uint64_t relayed = 0;

  FanoutStats& operator+=(const FanoutStats& o);
};

struct Cluster {
  DomainSpec spec;
  std::vector<RankTopology> ranks;
  Transport transport;
  PatternKind pattern = PatternKind::Structured;
  // Size of the simulation blob attached to every new child.
  std::size_t payload_bytes = 0;
  // One counter set per rank so rank executors never share one.
  std::vector<FanoutStats> fanout;

  Cluster(DomainSpec spec, std::vector<RankTopology> ranks, TransportConfig config = {});
  std::size_t size() const { return ranks.size(); }
  FanoutStats total_fanout() const;
};

struct RoundReport {
  std::vector<TrafficStats> cycles;
  FanoutStats fanout;

  TrafficStats total() const;
};

// Deterministic filler for simulation blobs.
std::vector<std::byte> make_payload(const GridUid& uid, std::size_t bytes);

// Creates and registers the children and queues one Refine query per
// present neighbour link.
std::vector<GridUid> issue_refine(RankTopology& topo, const DomainSpec& spec, std::uint32_t gid,
                                  FanoutStats* stats = nullptr, std::size_t payload_bytes = 0);
// Queues Delete queries to every neighbour and the parent; the grid is
// removed at the end of the refine/delete cycle.
void issue_delete(RankTopology& topo, std::uint32_t gid, FanoutStats* stats = nullptr);

// Checks a whole round of batches: known gids, one intent per grid, refine
// only unrefined grids below the depth limit, delete only non-root leaves,
// and no delete of a child living on a third rank while a face neighbour of
// its parent refines.
void validate_batches(const std::vector<RankTopology>& ranks, const std::vector<RefineDeleteBatch>& batches,
                      const DomainSpec& spec);
// The refining grid that forbids deleting leaf this round, if any.
std::optional<GridUid> delete_conflict(const std::vector<RankTopology>& ranks, const std::set<GridUid>& refining,
                                       const GridUid& leaf);
// Targets must be current peers, gids unique and local, and linked grids
// may not leave from different origins in the same round.
void validate_plans(const std::vector<RankTopology>& ranks, const std::vector<MigrationPlan>& plans);

// Peer schedules for the current remote_ranks lists.
std::vector<CommSchedule> make_schedules(const std::vector<std::vector<Rank>>& peers, PatternKind kind);

// Runs the queued refine/delete queries to completion. Returns the traffic
// of the query cycle and of the relay pass.
std::vector<TrafficStats> run_refine_delete_cycle(Cluster& cluster);

// Issues and runs one batch per rank.
std::vector<TrafficStats> run_refine_delete(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches);

// The two migration cycles followed by the rebuild of every remote_ranks.
std::vector<TrafficStats> run_migration_round(Cluster& cluster, const std::vector<MigrationPlan>& plans);

// Load summaries as the balancer sees them.
std::vector<LoadSummary> load_summaries(const Cluster& cluster);

// Produces every rank's plan once the refine/delete cycle has finished.
using PlanSource = std::function<std::vector<MigrationPlan>(const Cluster&)>;
PlanSource balancer_plans(Balancer& balancer);

RoundReport run_full_round(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches, const PlanSource& plans);
RoundReport run_full_round(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches, Balancer& balancer);

}  // namespace dtopo
