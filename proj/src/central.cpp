#include "dtopo/central.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/wire.hpp"

#include <memory>
#include <set>
#include <tuple>

namespace dtopo {

namespace {

using Key = std::pair<Rank, std::uint32_t>;
Key key_of(const GridUid& u) { return {u.rank, u.gid}; }

struct Reply {
  std::vector<std::uint32_t> removed;
  std::vector<GridHull> hulls;
};

Bytes encode_reply(const Reply& r) {
  std::vector<std::uint64_t> w{r.removed.size()};
  w.insert(w.end(), r.removed.begin(), r.removed.end());
  w.push_back(r.hulls.size());
  for (const auto& h : r.hulls) append_hull(w, h);
  return pack_words(w);
}

Reply decode_reply(const Bytes& b) {
  const auto w = unpack_words(b);
  Reply r;
  std::size_t at = 0;
  auto next = [&]() {
    if (at >= w.size()) throw FormatError("truncated manager reply");
    return w[at++];
  };
  for (auto n = next(); n > 0; --n) r.removed.push_back(static_cast<std::uint32_t>(next()));
  for (auto n = next(); n > 0; --n) r.hulls.push_back(read_hull(w, at));
  if (at != w.size()) throw FormatError("trailing words in manager reply");
  return r;
}

void apply_reply(RankTopology& topo, Reply&& r, std::size_t payload_bytes) {
  for (auto gid : r.removed) topo.remove(gid);
  for (auto& h : r.hulls) {
    if (GridHull* g = topo.find(h.uid.gid)) {
      if (h.payload.empty()) h.payload = std::move(g->payload);
      *g = std::move(h);
    } else {
      if (h.payload.empty()) h.payload = make_payload(h.uid, payload_bytes);
      topo.adopt(std::move(h));
    }
  }
  topo.rebuild_remote_ranks();
}

Bytes encode_intents(const RefineDeleteBatch& b) {
  std::vector<std::uint64_t> w;
  for (const auto& in : b) {
    w.push_back(encode_query({in.kind == IntentKind::Refine ? Task::Refine : Task::Delete, Direction::East, in.gid, 0}));
  }
  return pack_words(w);
}

RefineDeleteBatch decode_intents(const Bytes& b) {
  RefineDeleteBatch out;
  for (auto w : unpack_words(b)) {
    const Query q = decode_query(w);
    out.push_back({q.task == Task::Refine ? IntentKind::Refine : IntentKind::Delete, q.gid});
  }
  return out;
}

struct Request {
  MigrationPlan plan;
  std::vector<GridHull> hulls;
};

Bytes encode_request(const RankTopology& topo, const MigrationPlan& plan) {
  std::vector<std::uint64_t> w{plan.size()};
  for (const auto& m : plan) {
    w.push_back(m.gid);
    w.push_back(m.target);
  }
  for (const auto& m : plan) append_hull(w, topo.grid(m.gid));
  return pack_words(w);
}

Request decode_request(const Bytes& b) {
  const auto w = unpack_words(b);
  Request r;
  std::size_t at = 0;
  if (w.empty()) throw FormatError("empty migration request");
  const auto n = w[at++];
  if (w.size() < 1 + 2 * n) throw FormatError("truncated migration request");
  for (std::uint64_t i = 0; i < n; ++i) {
    r.plan.push_back({static_cast<std::uint32_t>(w[at]), static_cast<Rank>(w[at + 1])});
    at += 2;
  }
  for (std::uint64_t i = 0; i < n; ++i) r.hulls.push_back(read_hull(w, at));
  if (at != w.size()) throw FormatError("trailing words in migration request");
  return r;
}

}  // namespace

CentralManager::CentralManager(const Cluster& cluster) {
  for (const auto& t : cluster.ranks) {
    next_gid_.push_back(t.next_gid());
    for (const auto& [gid, g] : t.registry()) {
      GridHull h = g;
      h.payload.clear();
      mirror_.emplace(Key{t.rank(), gid}, std::move(h));
    }
  }
}

const GridHull* CentralManager::find(Rank rank, std::uint32_t gid) const {
  auto it = mirror_.find({rank, gid});
  return it == mirror_.end() ? nullptr : &it->second;
}

struct CentralRound {
  Cluster& cluster;
  CentralManager& m;

  GridHull& at(const Key& k) {
    auto it = m.mirror_.find(k);
    if (it == m.mirror_.end()) {
      throw ProtocolError("manager has no grid " + std::to_string(k.first) + ":" + std::to_string(k.second));
    }
    return it->second;
  }

  std::vector<Reply> replies(const std::set<Key>& touched, const std::set<Key>& removed,
                             const std::map<Key, std::vector<std::byte>>& payloads = {}) {
    std::vector<Reply> out(cluster.size());
    for (const auto& k : removed) out[k.first].removed.push_back(k.second);
    for (const auto& k : touched) {
      auto it = m.mirror_.find(k);
      if (it == m.mirror_.end()) continue;
      GridHull h = it->second;
      if (auto p = payloads.find(k); p != payloads.end()) h.payload = p->second;
      out[k.first].hulls.push_back(std::move(h));
    }
    return out;
  }

  std::vector<Reply> refine_delete(const std::vector<RefineDeleteBatch>& intents) {
    const auto& f = cluster.spec.factor;
    std::set<Key> touched, removed;
    std::vector<Key> fresh, deleting;
    for (std::size_t r = 0; r < intents.size(); ++r) {
      for (const auto& in : intents[r]) {
        const Key k{static_cast<Rank>(r), in.gid};
        GridHull& g = at(k);
        if (in.kind == IntentKind::Delete) {
          deleting.push_back(k);
          continue;
        }
        auto kids = subdivide(g, f, [&](std::uint32_t h) { return GridUid{static_cast<Rank>(r), m.next_gid_[r]++, h}; });
        touched.insert(k);
        for (auto& kid : kids) {
          const Key kk = key_of(kid.uid);
          fresh.push_back(kk);
          touched.insert(kk);
          m.mirror_.emplace(kk, std::move(kid));
        }
      }
    }
    for (const auto& k : deleting) {
      const GridHull g = at(k);
      GridHull& p = at(key_of(*g.parent));
      p.children[f.slot(decode_position_hash(g.uid.hash))].reset();
      if (!p.refined()) p.children.clear();
      touched.insert(key_of(p.uid));
      for (int i = 0; i < kFaces; ++i) {
        const auto& n = g.neighbors[static_cast<std::size_t>(i)];
        if (!n) continue;
        at(key_of(*n)).neighbor(opposite(face(i))).reset();
        touched.insert(key_of(*n));
      }
      m.mirror_.erase(k);
      touched.erase(k);
      removed.insert(k);
    }

    std::map<std::tuple<int, std::int64_t, std::int64_t, std::int64_t>, Key> lattice;
    for (const auto& [k, g] : m.mirror_) lattice[{g.depth, g.pos.x, g.pos.y, g.pos.z}] = k;
    for (const auto& k : fresh) {
      GridHull& g = at(k);
      for (int i = 0; i < kFaces; ++i) {
        const auto d = face(i);
        const Coord3 s = step(d);
        auto it = lattice.find({g.depth, g.pos.x + s.x, g.pos.y + s.y, g.pos.z + s.z});
        if (it == lattice.end()) continue;
        GridHull& n = at(it->second);
        g.neighbor(d) = n.uid;
        n.neighbor(opposite(d)) = g.uid;
        touched.insert(it->second);
      }
    }
    return replies(touched, removed);
  }

  std::vector<Reply> migrate(const std::vector<Request>& requests) {
    const std::size_t n = cluster.size();
    std::vector<std::vector<Rank>> peers;
    for (const auto& t : cluster.ranks) peers.push_back(t.remote_ranks());
    const auto schedules = make_schedules(peers, cluster.pattern);

    std::map<GridUid, GridUid> renamed;
    std::map<Key, std::vector<std::byte>> payloads;
    std::set<Key> touched, removed;
    for (std::size_t t = 0; t < n; ++t) {
      for (auto origin : schedules[t].exchange_order()) {
        const auto& req = requests[origin];
        for (std::size_t i = 0; i < req.plan.size(); ++i) {
          if (req.plan[i].target != t) continue;
          GridHull h = req.hulls[i];
          const GridUid old = h.uid;
          h.uid = GridUid{static_cast<Rank>(t), m.next_gid_[t]++, old.hash};
          renamed[old] = h.uid;
          const Key k = key_of(h.uid);
          payloads[k] = std::move(h.payload);
          h.payload.clear();
          m.mirror_.erase(key_of(old));
          removed.insert(key_of(old));
          touched.insert(k);
          m.mirror_.emplace(k, std::move(h));
        }
      }
    }
    if (!renamed.empty()) {
      for (auto& [k, g] : m.mirror_) {
        bool changed = false;
        auto fix = [&](std::optional<GridUid>& l) {
          if (!l) return;
          auto it = renamed.find(*l);
          if (it == renamed.end()) return;
          l = it->second;
          changed = true;
        };
        fix(g.parent);
        for (auto& c : g.children) fix(c);
        for (auto& nb : g.neighbors) fix(nb);
        if (changed) touched.insert(k);
      }
    }
    return replies(touched, removed, payloads);
  }

  TrafficStats run_phase(const std::function<Bytes(Rank)>& request, const std::function<std::vector<Reply>(std::vector<Bytes>&)>& decide,
                         Channel up, const std::string& label) {
    const std::size_t n = cluster.size();
    std::vector<Program> programs(n);
    auto inbox = std::make_shared<std::vector<Bytes>>(n);
    auto outbox = std::make_shared<std::vector<Reply>>();
    auto& manager = programs[0];
    for (Rank w = 1; w < n; ++w) {
      manager.push_back(Op::recv(w, up, [inbox, w](Bytes&& b) { (*inbox)[w] = std::move(b); }));
    }
    manager.push_back(Op::local([this, inbox, outbox, request, decide] {
      (*inbox)[0] = request(0);
      *outbox = decide(*inbox);
      apply_reply(cluster.ranks[0], std::move((*outbox)[0]), cluster.payload_bytes);
    }));
    for (Rank w = 1; w < n; ++w) {
      manager.push_back(Op::send(w, Channel::MigrationGrids, [outbox, w] { return encode_reply((*outbox)[w]); }));
      programs[w].push_back(Op::send(0, up, [request, w] { return request(w); }));
      programs[w].push_back(Op::recv(0, Channel::MigrationGrids, [this, w](Bytes&& b) {
        apply_reply(cluster.ranks[w], decode_reply(b), cluster.payload_bytes);
      }));
    }
    return cluster.transport.run_cycle(std::move(programs), label);
  }
};

RoundReport central_round(Cluster& cluster, CentralManager& manager, const std::vector<RefineDeleteBatch>& batches,
                          const PlanSource& plan_source) {
  RoundReport report;
  validate_batches(cluster.ranks, batches, cluster.spec);
  CentralRound round{cluster, manager};
  const std::size_t n = cluster.size();

  std::vector<RefineDeleteBatch> padded(n);
  for (std::size_t r = 0; r < batches.size(); ++r) padded[r] = batches[r];
  report.cycles.push_back(round.run_phase(
      [&padded](Rank r) { return encode_intents(padded[r]); },
      [&round](std::vector<Bytes>& inbox) {
        std::vector<RefineDeleteBatch> intents;
        for (const auto& b : inbox) intents.push_back(decode_intents(b));
        return round.refine_delete(intents);
      },
      Channel::QueryVector, "central-refine-delete"));

  std::vector<MigrationPlan> plans = plan_source(cluster);
  plans.resize(n);
  validate_plans(cluster.ranks, plans);
  report.cycles.push_back(round.run_phase(
      [&cluster, &plans](Rank r) { return encode_request(cluster.ranks[r], plans[r]); },
      [&round](std::vector<Bytes>& inbox) {
        std::vector<Request> reqs;
        for (const auto& b : inbox) reqs.push_back(decode_request(b));
        return round.migrate(reqs);
      },
      Channel::MigrationGrids, "central-migrate"));

  for (std::size_t r = 0; r < n; ++r) {
    for (const auto& in : padded[r]) {
      if (in.kind == IntentKind::Refine) ++report.fanout.refined;
      else ++report.fanout.deleted;
    }
    report.fanout.migrated += plans[r].size();
  }
  return report;
}

RoundReport central_round(Cluster& cluster, CentralManager& manager, const std::vector<RefineDeleteBatch>& batches,
                          Balancer& balancer) {
  return central_round(cluster, manager, batches, balancer_plans(balancer));
}

}  // namespace dtopo
