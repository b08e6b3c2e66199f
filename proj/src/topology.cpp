#include "dtopo/topology.hpp"

#include "dtopo/errors.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace dtopo {

GridHull& RankTopology::insert(GridHull hull) {
  const auto gid = hull.uid.gid;
  auto [it, fresh] = registry_.emplace(gid, std::move(hull));
  if (!fresh) throw StateError("rank " + std::to_string(rank_) + " already holds gid " + std::to_string(gid));
  return it->second;
}

GridUid RankTopology::register_grid(GridHull hull) {
  if (next_gid_ > kMaxGid) {
    throw CapacityError("rank " + std::to_string(rank_) + " exhausted the 23-bit grid identifier space");
  }
  hull.uid = GridUid{rank_, next_gid_++, hull.uid.hash};
  return insert(std::move(hull)).uid;
}

GridUid RankTopology::allocate_uid(std::uint32_t hash) {
  if (next_gid_ > kMaxGid) {
    throw CapacityError("rank " + std::to_string(rank_) + " exhausted the 23-bit grid identifier space");
  }
  return GridUid{rank_, next_gid_++, hash};
}

void RankTopology::adopt(GridHull hull) {
  if (hull.uid.rank != rank_) {
    throw StateError("grid " + to_string(hull.uid) + " does not belong to rank " + std::to_string(rank_));
  }
  const auto gid = hull.uid.gid;
  insert(std::move(hull));
  next_gid_ = std::max(next_gid_, gid + 1);
}

void RankTopology::remove(std::uint32_t gid) {
  if (registry_.erase(gid) == 0) throw StateError("rank " + std::to_string(rank_) + " has no gid " + std::to_string(gid));
}

GridHull* RankTopology::find(std::uint32_t gid) {
  auto it = registry_.find(gid);
  return it == registry_.end() ? nullptr : &it->second;
}

GridHull& RankTopology::grid(std::uint32_t gid) {
  if (auto* g = find(gid)) return *g;
  throw StateError("rank " + std::to_string(rank_) + " has no gid " + std::to_string(gid));
}

const GridHull& RankTopology::grid(std::uint32_t gid) const {
  return const_cast<RankTopology*>(this)->grid(gid);
}

bool RankTopology::is_peer(Rank r) const {
  return std::binary_search(remote_ranks_.begin(), remote_ranks_.end(), r);
}

const std::vector<Rank>& RankTopology::rebuild_remote_ranks() {
  std::set<Rank> peers;
  for (const auto& [gid, g] : registry_) {
    for_each_link(g, [&](const GridUid& l) {
      if (l.rank != rank_) peers.insert(l.rank);
    });
  }
  remote_ranks_.assign(peers.begin(), peers.end());
  return remote_ranks_;
}

std::vector<Rank> RankTopology::hierarchical_peers() const {
  std::set<Rank> peers;
  for (const auto& [gid, g] : registry_) {
    if (g.parent && g.parent->rank != rank_) peers.insert(g.parent->rank);
    for (const auto& c : g.children) {
      if (c && c->rank != rank_) peers.insert(c->rank);
    }
  }
  return {peers.begin(), peers.end()};
}

void RankTopology::enqueue_query(Rank peer, const PendingQuery& q) {
  if (peer != rank_ && !is_peer(peer)) {
    throw LinkError("rank " + std::to_string(rank_) + " has no link to rank " + std::to_string(peer));
  }
  query_vectors_[peer].push_back(q);
}

void RankTopology::enqueue_update(Rank peer, const PendingQuery& q) {
  if (peer != rank_ && !is_peer(peer)) {
    throw LinkError("rank " + std::to_string(rank_) + " has no link to rank " + std::to_string(peer));
  }
  if (!q.uid) throw ContractError("update query without replacement UID");
  update_vectors_[peer].push_back(q);
}

std::optional<GridUid> RankTopology::forwarded(std::uint32_t old_gid) const {
  auto it = tombstones_.find(old_gid);
  if (it == tombstones_.end()) return std::nullopt;
  return it->second;
}

}  // namespace dtopo
