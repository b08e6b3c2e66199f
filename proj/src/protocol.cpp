#include "dtopo/protocol.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/wire.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>

namespace dtopo {

FanoutStats& FanoutStats::operator+=(const FanoutStats& o) {
  refined += o.refined;
  deleted += o.deleted;
  migrated += o.migrated;
  max_per_refine = std::max(max_per_refine, o.max_per_refine);
  max_per_delete = std::max(max_per_delete, o.max_per_delete);
  max_per_migrate = std::max(max_per_migrate, o.max_per_migrate);
  cross_link_writes += o.cross_link_writes;
  duplicates_erased += o.duplicates_erased;
  relayed += o.relayed;
  return *this;
}

Cluster::Cluster(DomainSpec s, std::vector<RankTopology> r, TransportConfig config)
    : spec(s), ranks(std::move(r)), transport(ranks.size(), config), fanout(ranks.size()) {
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (ranks[i].rank() != i) throw ConfigError("rank topologies must be ordered by rank");
  }
}

FanoutStats Cluster::total_fanout() const {
  FanoutStats out;
  for (const auto& f : fanout) out += f;
  return out;
}

TrafficStats RoundReport::total() const {
  TrafficStats out;
  for (const auto& c : cycles) out += c;
  return out;
}

std::vector<std::byte> make_payload(const GridUid& uid, std::size_t bytes) {
  std::vector<std::byte> out(bytes);
  std::uint32_t x = uid.tag() * 2654435761u + uid.rank;
  for (auto& b : out) {
    x = x * 1103515245u + 12345u;
    b = static_cast<std::byte>(x >> 24);
  }
  return out;
}

namespace {

std::string where(const RankTopology& t) { return "rank " + std::to_string(t.rank()); }

Bytes encode_queries(const std::vector<PendingQuery>& qs) {
  std::vector<std::uint64_t> w;
  w.reserve(qs.size());
  for (const auto& q : qs) w.push_back(encode_query(q.query));
  return pack_words(w);
}

std::vector<Query> decode_queries(const Bytes& b) {
  std::vector<Query> out;
  for (auto w : unpack_words(b)) out.push_back(decode_query(w));
  return out;
}

Bytes encode_uids(const std::vector<GridUid>& uids) {
  std::vector<std::uint64_t> w;
  w.reserve(uids.size());
  for (const auto& u : uids) w.push_back(encode_uid(u));
  return pack_words(w);
}

std::vector<GridUid> decode_uids(const Bytes& b) {
  std::vector<GridUid> out;
  for (auto w : unpack_words(b)) out.push_back(decode_uid(w));
  return out;
}

void clear_child(GridHull& g, std::size_t slot) {
  if (slot >= g.children.size()) return;
  g.children[slot].reset();
  if (!g.refined()) g.children.clear();
}

// Applies one reference update: face slot, child slot or parent.
void apply_update(RankTopology& topo, const Query& q, const GridUid& value, const RefinementFactor& f) {
  GridHull* g = topo.find(q.gid);
  if (!g) throw ProtocolError(where(topo) + ": update names unknown gid " + std::to_string(q.gid));
  if (is_face(q.direction)) {
    g->neighbor(q.direction) = value;
  } else if (q.direction == Direction::Subgrid) {
    const auto slot = f.slot(decode_position_hash(q.hash));
    if (g->children.empty() || slot >= g->children.size()) {
      throw ProtocolError(where(topo) + ": child update for unrefined grid " + to_string(g->uid));
    }
    g->children[slot] = value;
  } else {
    g->parent = value;
  }
}

void apply_delete(RankTopology& topo, const Query& q, Rank from, const RefinementFactor& f) {
  GridHull* x = topo.find(q.gid);
  if (!x) throw ProtocolError(where(topo) + ": delete names unknown gid " + std::to_string(q.gid));
  if (is_face(q.direction)) {
    auto& slot = x->neighbor(q.direction);
    if (slot && slot->rank != from) {
      throw ProtocolError(where(topo) + ": delete from rank " + std::to_string(from) + " for a link to rank " +
                          std::to_string(slot->rank));
    }
    slot.reset();
  } else if (q.direction == Direction::Subgrid) {
    clear_child(*x, f.slot(decode_position_hash(q.hash)));
  } else {
    throw ProtocolError(where(topo) + ": delete query with supergrid direction");
  }
}

struct NvEntry {
  std::uint32_t query = 0;
  GridUid child;
};

// Present face children of n toward d that are not being deleted here.
std::vector<GridUid> answer_children(const RankTopology& topo, const GridHull& n, Direction d,
                                     const RefinementFactor& f) {
  std::vector<GridUid> out;
  if (!n.refined()) return out;
  for (auto h : face_child_hashes(d, f)) {
    const auto& c = n.children[f.slot(decode_position_hash(h))];
    if (!c) continue;
    if (c->rank == topo.rank() && topo.deleted_this_round(c->gid)) continue;
    out.push_back(*c);
  }
  return out;
}

// Removes the receiver's own pending query that mirrors one just answered.
bool erase_duplicate(std::vector<PendingQuery>& vec, std::size_t from, const Query& q, std::uint32_t issuer) {
  for (std::size_t i = from; i < vec.size(); ++i) {
    if (vec[i].query == q && vec[i].issuer == issuer) {
      vec.erase(vec.begin() + static_cast<std::ptrdiff_t>(i));
      return true;
    }
  }
  return false;
}

GridHull& child_facing(RankTopology& topo, const GridHull& g, const GridUid& c, Direction toward,
                       const RefinementFactor& f) {
  const auto slot = f.slot(decode_position_hash(mirror_hash(c.hash, toward, f)));
  if (slot >= g.children.size() || !g.children[slot]) {
    throw ProtocolError(where(topo) + ": grid " + to_string(g.uid) + " has no child facing " + to_string(c));
  }
  return topo.grid(g.children[slot]->gid);
}

struct ExchangeRoutines {
  std::function<void(Program&, Rank)> origin;
  std::function<void(Program&, Rank)> remote;
  std::function<void(Program&)> local;
};

Program compile(const CommSchedule& s, const ExchangeRoutines& r) {
  Program p;
  for (const auto& step : s.steps) {
    switch (step.op) {
      case StepOp::Send: r.origin(p, *step.peer); break;
      case StepOp::Recv: r.remote(p, *step.peer); break;
      case StepOp::LocalUpdate: r.local(p); break;
    }
  }
  return p;
}

std::vector<std::vector<Rank>> remote_lists(const Cluster& c) {
  std::vector<std::vector<Rank>> out;
  for (const auto& t : c.ranks) out.push_back(t.remote_ranks());
  return out;
}

// Alg. 6/7 style pass: each update vector goes out as queries plus the
// parallel replacement UIDs and is applied in order on the receiver.
ExchangeRoutines update_routines(RankTopology& topo, const RefinementFactor& f) {
  ExchangeRoutines r;
  r.origin = [&topo](Program& p, Rank peer) {
    p.push_back(Op::send(peer, Channel::UpdateQueries, [&topo, peer] { return encode_queries(topo.update_vector(peer)); }));
    p.push_back(Op::send(peer, Channel::NewUids, [&topo, peer] {
      std::vector<GridUid> uids;
      for (const auto& q : topo.update_vector(peer)) uids.push_back(*q.uid);
      topo.update_vector(peer).clear();
      return encode_uids(uids);
    }));
  };
  r.remote = [&topo, f](Program& p, Rank peer) {
    auto qs = std::make_shared<std::vector<Query>>();
    p.push_back(Op::recv(peer, Channel::UpdateQueries, [qs](Bytes&& b) { *qs = decode_queries(b); }));
    p.push_back(Op::recv(peer, Channel::NewUids, [&topo, qs, f, peer](Bytes&& b) {
      const auto uids = decode_uids(b);
      if (uids.size() != qs->size()) {
        throw ProtocolError(where(topo) + ": update from rank " + std::to_string(peer) + " has " +
                            std::to_string(qs->size()) + " queries but " + std::to_string(uids.size()) + " UIDs");
      }
      for (std::size_t i = 0; i < uids.size(); ++i) apply_update(topo, (*qs)[i], uids[i], f);
    }));
  };
  r.local = [&topo, f](Program& p) {
    p.push_back(Op::local([&topo, f] {
      auto& self = topo.update_vector(topo.rank());
      for (const auto& q : self) apply_update(topo, q.query, *q.uid, f);
      self.clear();
    }));
  };
  return r;
}

TrafficStats run_update_pass(Cluster& cluster, const std::vector<std::vector<Rank>>& peers,
                             std::vector<Program> prefix, const std::string& label) {
  const auto schedules = make_schedules(peers, cluster.pattern);
  std::vector<Program> programs(cluster.size());
  for (std::size_t r = 0; r < cluster.size(); ++r) {
    if (r < prefix.size()) programs[r] = std::move(prefix[r]);
    auto body = compile(schedules[r], update_routines(cluster.ranks[r], cluster.spec.factor));
    for (auto& op : body) programs[r].push_back(std::move(op));
  }
  return cluster.transport.run_cycle(std::move(programs), label);
}

}  // namespace

std::vector<GridUid> issue_refine(RankTopology& topo, const DomainSpec& spec, std::uint32_t gid, FanoutStats* stats,
                                  std::size_t payload_bytes) {
  GridHull* g = topo.find(gid);
  if (!g) throw StateError(where(topo) + ": refine of unknown gid " + std::to_string(gid));
  if (g->refined()) throw StateError("grid " + to_string(g->uid) + " is already refined");
  if (topo.deleted_this_round(gid)) throw StateError("grid " + to_string(g->uid) + " is being deleted");
  if (g->depth >= spec.max_depth) throw StateError("grid " + to_string(g->uid) + " is at max depth");

  auto kids = subdivide(*g, spec.factor, [&](std::uint32_t h) { return topo.allocate_uid(h); });
  std::vector<GridUid> out;
  for (auto& k : kids) {
    k.payload = make_payload(k.uid, payload_bytes);
    out.push_back(k.uid);
    topo.adopt(std::move(k));
  }
  topo.mark_refined(gid);

  std::uint64_t sent = 0;
  for (int i = 0; i < kFaces; ++i) {
    const auto d = face(i);
    const auto& n = g->neighbor(d);
    if (!n) continue;
    topo.enqueue_query(n->rank, Query{Task::Refine, opposite(d), n->gid, 0}, gid);
    ++sent;
  }
  if (stats) {
    ++stats->refined;
    stats->max_per_refine = std::max(stats->max_per_refine, sent);
  }
  return out;
}

void issue_delete(RankTopology& topo, std::uint32_t gid, FanoutStats* stats) {
  GridHull* g = topo.find(gid);
  if (!g) throw StateError(where(topo) + ": delete of unknown gid " + std::to_string(gid));
  if (!g->is_leaf()) throw StateError("grid " + to_string(g->uid) + " is not a leaf");
  if (!g->parent) throw StateError("the root grid cannot be deleted");
  if (topo.deleted_this_round(gid) || topo.refined_this_round(gid)) {
    throw StateError("grid " + to_string(g->uid) + " already has an intent this round");
  }
  std::uint64_t sent = 0;
  for (int i = 0; i < kFaces; ++i) {
    const auto d = face(i);
    const auto& n = g->neighbor(d);
    if (!n) continue;
    topo.enqueue_query(n->rank, Query{Task::Delete, opposite(d), n->gid, 0}, gid);
    ++sent;
  }
  topo.enqueue_query(g->parent->rank, Query{Task::Delete, Direction::Subgrid, g->parent->gid, g->uid.hash}, gid);
  ++sent;
  topo.mark_deleted(gid);
  if (stats) {
    ++stats->deleted;
    stats->max_per_delete = std::max(stats->max_per_delete, sent);
  }
}

std::optional<GridUid> delete_conflict(const std::vector<RankTopology>& ranks, const std::set<GridUid>& refining,
                                       const GridUid& leaf) {
  const auto& p = *ranks[leaf.rank].grid(leaf.gid).parent;
  const auto& parent = ranks[p.rank].grid(p.gid);
  for (const auto& q : parent.neighbors) {
    if (q && refining.count(*q) && leaf.rank != p.rank && leaf.rank != q->rank) return q;
  }
  return std::nullopt;
}

void validate_batches(const std::vector<RankTopology>& ranks, const std::vector<RefineDeleteBatch>& batches,
                      const DomainSpec& spec) {
  if (batches.size() > ranks.size()) throw ContractError("more batches than ranks");
  std::set<GridUid> refining;
  std::vector<GridUid> deleting;
  for (std::size_t r = 0; r < batches.size(); ++r) {
    const auto& topo = ranks[r];
    std::set<std::uint32_t> seen;
    for (const auto& in : batches[r]) {
      if (!topo.contains(in.gid)) throw StateError(where(topo) + ": intent names unknown gid " + std::to_string(in.gid));
      if (!seen.insert(in.gid).second) throw ContractError(where(topo) + ": two intents for gid " + std::to_string(in.gid));
      const auto& g = topo.grid(in.gid);
      if (in.kind == IntentKind::Refine) {
        if (g.refined()) throw StateError("grid " + to_string(g.uid) + " is already refined");
        if (g.depth >= spec.max_depth) throw StateError("grid " + to_string(g.uid) + " is at max depth");
        refining.insert(g.uid);
      } else {
        if (!g.is_leaf()) throw StateError("grid " + to_string(g.uid) + " is not a leaf");
        if (!g.parent) throw StateError("the root grid cannot be deleted");
        deleting.push_back(g.uid);
      }
    }
  }
  for (const auto& c : deleting) {
    if (const auto q = delete_conflict(ranks, refining, c)) {
      throw ContractError("delete of " + to_string(c) + " conflicts with refinement of " + to_string(*q) +
                          " next to its parent");
    }
  }
}

void validate_plans(const std::vector<RankTopology>& ranks, const std::vector<MigrationPlan>& plans) {
  if (plans.size() > ranks.size()) throw PlanError("more plans than ranks");
  std::map<GridUid, Rank> leaving;
  for (std::size_t r = 0; r < plans.size(); ++r) {
    const auto& topo = ranks[r];
    for (const auto& m : plans[r]) {
      if (!topo.contains(m.gid)) throw PlanError(where(topo) + ": plan names unknown gid " + std::to_string(m.gid));
      if (m.target == topo.rank() || !topo.is_peer(m.target)) {
        throw PlanError(where(topo) + ": migration target " + std::to_string(m.target) + " is not a peer");
      }
      if (!leaving.emplace(topo.grid(m.gid).uid, m.target).second) {
        throw PlanError(where(topo) + ": gid " + std::to_string(m.gid) + " planned twice");
      }
    }
  }
  for (const auto& [uid, target] : leaving) {
    for_each_link(ranks[uid.rank].grid(uid.gid), [&](const GridUid& l) {
      if (l.rank != uid.rank && leaving.count(l)) {
        throw PlanError("linked grids " + to_string(uid) + " and " + to_string(l) + " migrate from different ranks");
      }
    });
  }
}

std::vector<CommSchedule> make_schedules(const std::vector<std::vector<Rank>>& peers, PatternKind kind) {
  std::set<RankPair> pairs;
  for (std::size_t r = 0; r < peers.size(); ++r) {
    for (auto p : peers[r]) {
      if (p >= peers.size() || !std::binary_search(peers[p].begin(), peers[p].end(), static_cast<Rank>(r))) {
        throw ProtocolError("rank " + std::to_string(r) + " lists rank " + std::to_string(p) +
                            " as a peer but not the other way round");
      }
      pairs.insert(make_pair_sorted(static_cast<Rank>(r), p));
    }
  }
  if (kind == PatternKind::Joined) return join_stages(pairs, peers.size()).schedules;
  std::vector<CommSchedule> out;
  for (std::size_t r = 0; r < peers.size(); ++r) out.push_back(build_pattern(static_cast<Rank>(r), peers[r]));
  return out;
}

std::vector<TrafficStats> run_refine_delete_cycle(Cluster& cluster) {
  const auto& f = cluster.spec.factor;
  const std::size_t n = cluster.size();
  std::vector<std::vector<Rank>> hier(n);
  for (std::size_t r = 0; r < n; ++r) hier[r] = cluster.ranks[r].hierarchical_peers();

  const auto schedules = make_schedules(remote_lists(cluster), cluster.pattern);
  std::vector<Program> programs(n);
  for (std::size_t r = 0; r < n; ++r) {
    RankTopology& topo = cluster.ranks[r];
    FanoutStats& st = cluster.fanout[r];
    const Rank me = topo.rank();
    ExchangeRoutines routines;

    routines.origin = [&topo, &st, &f, me](Program& p, Rank peer) {
      auto sent = std::make_shared<std::vector<PendingQuery>>();
      auto converse = std::make_shared<std::vector<GridUid>>();
      p.push_back(Op::send(peer, Channel::QueryVector, [&topo, sent, peer] {
        *sent = std::move(topo.query_vector(peer));
        topo.query_vector(peer).clear();
        return encode_queries(*sent);
      }));
      p.push_back(Op::recv(peer, Channel::NeighbourVector, [&topo, &st, &f, sent, converse, me, peer](Bytes&& b) {
        const auto words = unpack_words(b);
        if (words.size() % 2 != 0) throw ProtocolError(where(topo) + ": odd neighbourVector from rank " + std::to_string(peer));
        std::uint64_t last = 0;
        for (std::size_t i = 0; i < words.size(); i += 2) {
          const auto qi = words[i];
          if (qi >= sent->size() || qi < last) {
            throw ProtocolError(where(topo) + ": neighbourVector from rank " + std::to_string(peer) + " is misaligned");
          }
          last = qi;
          const auto& q = (*sent)[qi];
          const GridUid c = decode_uid(words[i + 1]);
          const Direction toward = opposite(q.query.direction);
          GridHull& a = child_facing(topo, topo.grid(q.issuer), c, toward, f);
          converse->push_back(a.uid);
          if (c.rank == me) {
            if (topo.deleted_this_round(c.gid)) continue;
            topo.grid(c.gid).neighbor(q.query.direction) = a.uid;
          } else {
            ++st.cross_link_writes;
          }
          a.neighbor(toward) = c;
        }
      }));
      p.push_back(Op::send(peer, Channel::NeighbourVector, [converse] { return encode_uids(*converse); }));
    };

    routines.remote = [&topo, &st, &f, me](Program& p, Rank peer) {
      auto received = std::make_shared<std::vector<Query>>();
      auto answered = std::make_shared<std::vector<NvEntry>>();
      p.push_back(Op::recv(peer, Channel::QueryVector, [&topo, &st, &f, received, answered, peer](Bytes&& b) {
        *received = decode_queries(b);
        for (std::size_t qi = 0; qi < received->size(); ++qi) {
          const Query& q = (*received)[qi];
          if (q.task == Task::Delete) {
            apply_delete(topo, q, peer, f);
            continue;
          }
          if (q.task != Task::Refine) throw ProtocolError(where(topo) + ": migrate query in refine cycle");
          const GridHull* nb = topo.find(q.gid);
          if (!nb) throw ProtocolError(where(topo) + ": refine query names unknown gid " + std::to_string(q.gid));
          for (const auto& c : answer_children(topo, *nb, q.direction, f)) {
            answered->push_back({static_cast<std::uint32_t>(qi), c});
          }
          if (topo.refined_this_round(q.gid)) {
            const auto& g = nb->neighbor(q.direction);
            if (g && g->rank == peer &&
                erase_duplicate(topo.query_vector(peer), 0, Query{Task::Refine, opposite(q.direction), g->gid, 0}, q.gid)) {
              ++st.duplicates_erased;
            }
          }
        }
      }));
      p.push_back(Op::send(peer, Channel::NeighbourVector, [answered] {
        std::vector<std::uint64_t> w;
        for (const auto& e : *answered) {
          w.push_back(e.query);
          w.push_back(encode_uid(e.child));
        }
        return pack_words(w);
      }));
      p.push_back(Op::recv(peer, Channel::NeighbourVector, [&topo, &st, received, answered, me, peer](Bytes&& b) {
        const auto conv = decode_uids(b);
        if (conv.size() != answered->size()) {
          throw ProtocolError(where(topo) + ": converse from rank " + std::to_string(peer) + " does not match");
        }
        for (std::size_t i = 0; i < conv.size(); ++i) {
          const auto& e = (*answered)[i];
          const Query& q = (*received)[e.query];
          if (e.child.rank == me) {
            topo.grid(e.child.gid).neighbor(q.direction) = conv[i];
            ++st.cross_link_writes;
          } else if (e.child.rank != peer) {
            topo.enqueue_update(e.child.rank, PendingQuery{Query{Task::Refine, q.direction, e.child.gid, 0}, q.gid, conv[i]});
            ++st.relayed;
          }
        }
      }));
    };

    routines.local = [&topo, &st, &f, me](Program& p) {
      p.push_back(Op::local([&topo, &st, &f, me] {
        auto& self = topo.query_vector(me);
        for (std::size_t i = 0; i < self.size(); ++i) {
          const PendingQuery pq = self[i];
          const Query& q = pq.query;
          if (q.task == Task::Delete) {
            apply_delete(topo, q, me, f);
            continue;
          }
          const GridHull* nb = topo.find(q.gid);
          if (!nb) throw ProtocolError(where(topo) + ": refine query names unknown gid " + std::to_string(q.gid));
          const Direction toward = opposite(q.direction);
          for (const auto& c : answer_children(topo, *nb, q.direction, f)) {
            GridHull& a = child_facing(topo, topo.grid(pq.issuer), c, toward, f);
            a.neighbor(toward) = c;
            if (c.rank == me) {
              topo.grid(c.gid).neighbor(q.direction) = a.uid;
            } else {
              ++st.cross_link_writes;
              topo.enqueue_update(c.rank, PendingQuery{Query{Task::Refine, q.direction, c.gid, 0}, q.gid, a.uid});
              ++st.relayed;
            }
          }
          if (topo.refined_this_round(q.gid) &&
              erase_duplicate(self, i + 1, Query{Task::Refine, toward, pq.issuer, 0}, q.gid)) {
            ++st.duplicates_erased;
          }
        }
        self.clear();
      }));
    };

    programs[r] = compile(schedules[r], routines);
    programs[r].push_back(Op::local([&topo] {
      for (auto gid : topo.deleted_this_round()) topo.remove(gid);
      topo.clear_query_vectors();
    }));
  }

  std::vector<TrafficStats> out;
  out.push_back(cluster.transport.run_cycle(std::move(programs), "refine-delete"));
  out.push_back(run_update_pass(cluster, hier, {}, "relay"));
  for (auto& t : cluster.ranks) {
    t.clear_marks();
    t.clear_update_vectors();
    t.rebuild_remote_ranks();
  }
  return out;
}

std::vector<TrafficStats> run_refine_delete(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches) {
  validate_batches(cluster.ranks, batches, cluster.spec);
  for (std::size_t r = 0; r < batches.size(); ++r) {
    for (const auto& in : batches[r]) {
      if (in.kind == IntentKind::Refine) {
        issue_refine(cluster.ranks[r], cluster.spec, in.gid, &cluster.fanout[r], cluster.payload_bytes);
      } else {
        issue_delete(cluster.ranks[r], in.gid, &cluster.fanout[r]);
      }
    }
  }
  return run_refine_delete_cycle(cluster);
}

std::vector<TrafficStats> run_migration_round(Cluster& cluster, const std::vector<MigrationPlan>& plans) {
  validate_plans(cluster.ranks, plans);
  const std::size_t n = cluster.size();
  const auto peers = remote_lists(cluster);
  const auto schedules = make_schedules(peers, cluster.pattern);

  std::vector<std::shared_ptr<UpdateList>> lists(n);
  std::vector<std::shared_ptr<std::map<std::uint32_t, Rank>>> sent_to(n);
  std::vector<Program> programs(n);
  for (std::size_t r = 0; r < n; ++r) {
    RankTopology& topo = cluster.ranks[r];
    FanoutStats& st = cluster.fanout[r];
    const MigrationPlan plan = r < plans.size() ? plans[r] : MigrationPlan{};
    auto updates = lists[r] = std::make_shared<UpdateList>();
    auto moved = sent_to[r] = std::make_shared<std::map<std::uint32_t, Rank>>();
    ExchangeRoutines routines;

    routines.origin = [&topo, &st, plan, updates, moved](Program& p, Rank peer) {
      auto order = std::make_shared<std::vector<std::uint32_t>>();
      p.push_back(Op::send(peer, Channel::MigrationGrids, [&topo, &st, plan, updates, moved, order, peer] {
        std::vector<GridHull> hulls;
        for (const auto& m : plan) {
          if (m.target != peer) continue;
          GridHull g = topo.grid(m.gid);
          for (int i = 0; i < kFaces; ++i) {
            const auto& y = g.neighbors[static_cast<std::size_t>(i)];
            if (y) updates->push_back({*y, opposite(face(i)), 0, g.uid});
          }
          if (g.parent) updates->push_back({*g.parent, Direction::Subgrid, g.uid.hash, g.uid});
          for (const auto& c : g.children) {
            if (c) updates->push_back({*c, Direction::Supergrid, 0, g.uid});
          }
          order->push_back(m.gid);
          (*moved)[m.gid] = peer;
          ++st.migrated;
          topo.remove(m.gid);
          hulls.push_back(std::move(g));
        }
        return serialize_hulls(hulls);
      }));
      p.push_back(Op::recv(peer, Channel::NewUids, [&topo, order, peer](Bytes&& b) {
        const auto uids = decode_uids(b);
        if (uids.size() != order->size()) {
          throw ProtocolError(where(topo) + ": rank " + std::to_string(peer) + " returned the wrong number of UIDs");
        }
        for (std::size_t i = 0; i < uids.size(); ++i) topo.add_tombstone((*order)[i], uids[i]);
      }));
    };
    routines.remote = [&topo](Program& p, Rank peer) {
      auto fresh = std::make_shared<std::vector<GridUid>>();
      p.push_back(Op::recv(peer, Channel::MigrationGrids, [&topo, fresh](Bytes&& b) {
        auto hulls = deserialize_hulls(b);
        std::map<GridUid, GridUid> renamed;
        for (auto& h : hulls) {
          const GridUid old = h.uid;
          const GridUid now = topo.register_grid(std::move(h));
          renamed[old] = now;
          fresh->push_back(now);
        }
        auto fix = [&](std::optional<GridUid>& l) {
          if (!l) return;
          auto it = renamed.find(*l);
          if (it != renamed.end()) l = it->second;
        };
        for (const auto& u : *fresh) {
          GridHull& g = topo.grid(u.gid);
          fix(g.parent);
          for (auto& c : g.children) fix(c);
          for (auto& nb : g.neighbors) fix(nb);
        }
      }));
      p.push_back(Op::send(peer, Channel::NewUids, [fresh] { return encode_uids(*fresh); }));
    };
    routines.local = [](Program&) {};
    programs[r] = compile(schedules[r], routines);
  }

  std::vector<TrafficStats> out;
  out.push_back(cluster.transport.run_cycle(std::move(programs), "migrate-grids"));

  std::vector<Program> retarget(n);
  for (std::size_t r = 0; r < n; ++r) {
    RankTopology& topo = cluster.ranks[r];
    FanoutStats& st = cluster.fanout[r];
    retarget[r].push_back(Op::local([&topo, &st, updates = lists[r], moved = sent_to[r]] {
      std::map<std::uint32_t, std::uint64_t> per_grid;
      for (const auto& e : *updates) {
        const auto value = topo.forwarded(e.value.gid);
        if (!value) throw ProtocolError(where(topo) + ": no tombstone for " + to_string(e.value));
        GridUid holder = e.holder;
        if (holder.rank == topo.rank()) {
          if (const auto h = topo.forwarded(holder.gid)) {
            if (moved->at(holder.gid) == moved->at(e.value.gid)) continue;
            holder = *h;
          }
        }
        const std::uint32_t hash = e.slot == Direction::Subgrid ? e.hash : 0;
        topo.enqueue_update(holder.rank, PendingQuery{Query{Task::Migrate, e.slot, holder.gid, hash}, e.value.gid, *value});
        ++per_grid[e.value.gid];
      }
      for (const auto& [gid, count] : per_grid) st.max_per_migrate = std::max(st.max_per_migrate, count);
    }));
  }
  out.push_back(run_update_pass(cluster, peers, std::move(retarget), "migrate-update"));
  for (auto& t : cluster.ranks) {
    t.clear_update_vectors();
    t.clear_tombstones();
    t.rebuild_remote_ranks();
  }
  return out;
}

std::vector<LoadSummary> load_summaries(const Cluster& cluster) {
  std::vector<LoadSummary> out;
  for (const auto& t : cluster.ranks) {
    LoadSummary s;
    s.rank = t.rank();
    s.local = t.size();
    for (auto p : t.remote_ranks()) s.peers[p] = cluster.ranks[p].size();
    out.push_back(std::move(s));
  }
  return out;
}

PlanSource balancer_plans(Balancer& balancer) {
  return [&balancer](const Cluster& c) {
    const auto loads = load_summaries(c);
    std::vector<MigrationPlan> plans;
    for (std::size_t r = 0; r < c.size(); ++r) plans.push_back(balancer.plan(c.ranks[r], loads[r]));
    return plans;
  };
}

RoundReport run_full_round(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches, const PlanSource& plans) {
  const auto before = cluster.fanout;
  for (auto& f : cluster.fanout) f = FanoutStats{};
  RoundReport report;
  try {
    report.cycles = run_refine_delete(cluster, batches);
    for (auto& c : run_migration_round(cluster, plans(cluster))) report.cycles.push_back(std::move(c));
  } catch (...) {
    for (std::size_t r = 0; r < cluster.size(); ++r) cluster.fanout[r] += before[r];
    throw;
  }
  report.fanout = cluster.total_fanout();
  for (std::size_t r = 0; r < cluster.size(); ++r) {
    FanoutStats merged = before[r];
    merged += cluster.fanout[r];
    cluster.fanout[r] = merged;
  }
  return report;
}

RoundReport run_full_round(Cluster& cluster, const std::vector<RefineDeleteBatch>& batches, Balancer& balancer) {
  return run_full_round(cluster, batches, balancer_plans(balancer));
}

}  // namespace dtopo
