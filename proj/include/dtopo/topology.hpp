#pragma once

#include "dtopo/codec.hpp"
#include "dtopo/spacetree.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace dtopo {

// A query waiting in a queryVector, together with local bookkeeping that
// never goes on the wire.
struct PendingQuery {
  Query query;
  // GID of the local grid that caused the query.
  std::uint32_t issuer = 0;
  // Replacement reference carried in the parallel new-UID vector of an
  // update exchange; absent for refine/delete queries.
  std::optional<GridUid> uid;
};

// One rank's local-only view of the domain.
class RankTopology {
 public:
  RankTopology() = default;
  explicit RankTopology(Rank rank) : rank_(rank) {}

  Rank rank() const { return rank_; }

  // Stores hull under a fresh GID. The hull keeps its position hash.
  GridUid register_grid(GridHull hull);
  // Reserves the next GID without storing anything yet.
  GridUid allocate_uid(std::uint32_t hash);
  // Stores a hull whose UID was assigned elsewhere (initial distribution).
  void adopt(GridHull hull);
  void remove(std::uint32_t gid);

  bool contains(std::uint32_t gid) const { return registry_.count(gid) != 0; }
  bool owns(const GridUid& uid) const { return uid.rank == rank_ && contains(uid.gid); }
  GridHull& grid(std::uint32_t gid);
  const GridHull& grid(std::uint32_t gid) const;
  GridHull* find(std::uint32_t gid);
  const std::map<std::uint32_t, GridHull>& registry() const { return registry_; }
  std::size_t size() const { return registry_.size(); }
  std::uint32_t next_gid() const { return next_gid_; }

  const std::vector<Rank>& remote_ranks() const { return remote_ranks_; }
  bool is_peer(Rank r) const;
  // Recomputed from scratch over every link of every local grid.
  const std::vector<Rank>& rebuild_remote_ranks();
  // Ranks holding the parent or a child of a local grid, excluding self.
  std::vector<Rank> hierarchical_peers() const;

  // Appends to the peer's queryVector; peer must be self or a remote rank.
  void enqueue_query(Rank peer, const PendingQuery& q);
  void enqueue_query(Rank peer, const Query& q, std::uint32_t issuer) { enqueue_query(peer, PendingQuery{q, issuer, {}}); }
  std::vector<PendingQuery>& query_vector(Rank peer) { return query_vectors_[peer]; }
  const std::map<Rank, std::vector<PendingQuery>>& query_vectors() const { return query_vectors_; }
  void clear_query_vectors() { query_vectors_.clear(); }

  // Reference updates (query + replacement UID) for the update exchange.
  void enqueue_update(Rank peer, const PendingQuery& q);
  std::vector<PendingQuery>& update_vector(Rank peer) { return update_vectors_[peer]; }
  const std::map<Rank, std::vector<PendingQuery>>& update_vectors() const { return update_vectors_; }
  void clear_update_vectors() { update_vectors_.clear(); }

  std::vector<GridUid>& neighbour_vector(Rank peer) { return neighbour_vectors_[peer]; }
  void clear_neighbour_vectors() { neighbour_vectors_.clear(); }

  // Intents issued for the round in progress.
  void mark_refined(std::uint32_t gid) { refined_now_.insert(gid); }
  void mark_deleted(std::uint32_t gid) { deleted_now_.insert(gid); }
  bool refined_this_round(std::uint32_t gid) const { return refined_now_.count(gid) != 0; }
  bool deleted_this_round(std::uint32_t gid) const { return deleted_now_.count(gid) != 0; }
  const std::set<std::uint32_t>& deleted_this_round() const { return deleted_now_; }
  void clear_marks() {
    refined_now_.clear();
    deleted_now_.clear();
  }

  // Forwarding of grids migrated away during the current round.
  void add_tombstone(std::uint32_t old_gid, const GridUid& now) { tombstones_[old_gid] = now; }
  std::optional<GridUid> forwarded(std::uint32_t old_gid) const;
  const std::map<std::uint32_t, GridUid>& tombstones() const { return tombstones_; }
  void clear_tombstones() { tombstones_.clear(); }

 private:
  GridHull& insert(GridHull hull);

  Rank rank_ = 0;
  std::map<std::uint32_t, GridHull> registry_;
  std::uint32_t next_gid_ = 0;
  std::vector<Rank> remote_ranks_;
  std::map<Rank, std::vector<PendingQuery>> query_vectors_;
  std::map<Rank, std::vector<PendingQuery>> update_vectors_;
  std::map<Rank, std::vector<GridUid>> neighbour_vectors_;
  std::set<std::uint32_t> refined_now_;
  std::set<std::uint32_t> deleted_now_;
  std::map<std::uint32_t, GridUid> tombstones_;
};

// Every link a hull holds: parent, present children and face neighbours.
template <typename F>
void for_each_link(const GridHull& g, F&& f) {
  if (g.parent) f(*g.parent);
  for (const auto& c : g.children) {
    if (c) f(*c);
  }
  for (const auto& n : g.neighbors) {
    if (n) f(*n);
  }
}

}  // namespace dtopo
