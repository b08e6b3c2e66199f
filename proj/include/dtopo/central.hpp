#pragma once

// Baseline with one bookkeeping manager on rank 0. Every worker sends its
// intents to the manager and waits for the hulls the manager changed on its
// behalf; the manager keeps a mirror of the whole domain and recomputes
// links from lattice positions. Rank 0 also keeps its own grids.

#include "dtopo/protocol.hpp"

#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace dtopo {

class CentralManager {
 public:
  explicit CentralManager(const Cluster& cluster);

  std::size_t size() const { return mirror_.size(); }
  const GridHull* find(Rank rank, std::uint32_t gid) const;
  std::uint32_t next_gid(Rank rank) const { return next_gid_.at(rank); }

 private:
  friend struct CentralRound;
  using Key = std::pair<Rank, std::uint32_t>;
  std::map<Key, GridHull> mirror_;
  std::vector<std::uint32_t> next_gid_;
};

// Refine/delete exchange, then the balancer's plans, then the migration
// exchange. Two messages per worker and phase.
RoundReport central_round(Cluster& cluster, CentralManager& manager, const std::vector<RefineDeleteBatch>& batches,
                          Balancer& balancer);
RoundReport central_round(Cluster& cluster, CentralManager& manager, const std::vector<RefineDeleteBatch>& batches,
                          const PlanSource& plans);

}  // namespace dtopo
