#include "dtopo/balancer.hpp"

#include "dtopo/errors.hpp"

#include <algorithm>

namespace dtopo {

MigrationPlan GreedyCountBalancer::plan(const RankTopology& topo, const LoadSummary& load) {
  if (load.peers.empty()) return {};
  for (const auto& [peer, n] : load.peers) {
    if (n > load.local || (n == load.local && peer < load.rank)) return {};
  }
  auto least = load.peers.begin();
  for (auto it = load.peers.begin(); it != load.peers.end(); ++it) {
    if (it->second < least->second) least = it;
  }
  const Rank target = least->first;
  std::size_t count = (load.local - least->second) / 2;
  count = std::min(count, topo.size() - 1);
  if (count == 0) return {};

  std::vector<std::uint32_t> bordering;
  std::vector<std::uint32_t> rest;
  for (const auto& [gid, g] : topo.registry()) {
    bool touches = false;
    for_each_link(g, [&](const GridUid& u) { touches = touches || u.rank == target; });
    (touches ? bordering : rest).push_back(gid);
  }
  MigrationPlan out;
  for (const auto* list : {&bordering, &rest}) {
    for (auto gid : *list) {
      if (out.size() == count) return out;
      out.push_back({gid, target});
    }
  }
  return out;
}

MigrationPlan ScriptedBalancer::plan(const RankTopology& topo, const LoadSummary&) {
  if (topo.rank() >= plans_.size()) return {};
  return plans_[topo.rank()];
}

std::unique_ptr<Balancer> make_balancer(const std::string& name) {
  if (name == "null") return std::make_unique<NullBalancer>();
  if (name == "greedy-count") return std::make_unique<GreedyCountBalancer>();
  if (name == "scripted") return std::make_unique<ScriptedBalancer>();
  throw ConfigError("unknown balancer '" + name + "'");
}

}  // namespace dtopo
