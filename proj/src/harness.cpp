#include "dtopo/harness.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/wire.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace dtopo {

Distribution initial_distribute(const DomainSpec& spec, int depth, std::size_t ranks, Linearization scheme,
                                const TransportConfig& config, std::size_t payload_bytes) {
  spec.validate();
  const SpaceTree tree = build_uniform(spec, depth);
  const auto order = linearize(tree, scheme);
  const auto slices = partition(order.size(), ranks);

  std::map<GridUid, GridUid> dest;
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t i = slices[r].begin; i < slices[r].end; ++i) {
      dest[order[i]] = GridUid{static_cast<Rank>(r), static_cast<std::uint32_t>(i - slices[r].begin), order[i].hash};
    }
  }
  auto moved = [&](const std::optional<GridUid>& u) -> std::optional<GridUid> {
    if (!u) return std::nullopt;
    return dest.at(*u);
  };
  std::vector<std::vector<GridHull>> outgoing(ranks);
  for (std::size_t r = 0; r < ranks; ++r) {
    for (std::size_t i = slices[r].begin; i < slices[r].end; ++i) {
      GridHull h = tree.at(order[i]);
      h.uid = dest.at(h.uid);
      h.parent = moved(h.parent);
      for (auto& c : h.children) c = moved(c);
      for (auto& n : h.neighbors) n = moved(n);
      outgoing[r].push_back(std::move(h));
    }
  }

  Distribution out;
  for (std::size_t r = 0; r < ranks; ++r) out.ranks.emplace_back(static_cast<Rank>(r));
  auto finish = [&out, payload_bytes](Rank r) {
    return Op::local([&out, payload_bytes, r] {
      auto& topo = out.ranks[r];
      for (const auto& [gid, g] : topo.registry()) topo.grid(gid).payload = make_payload(g.uid, payload_bytes);
      topo.rebuild_remote_ranks();
    });
  };
  std::vector<Program> programs(ranks);
  programs[0].push_back(Op::local([&out, &outgoing] {
    for (auto& h : outgoing[0]) out.ranks[0].adopt(std::move(h));
  }));
  for (Rank r = 1; r < ranks; ++r) {
    programs[0].push_back(Op::send(r, Channel::MigrationGrids, [&outgoing, r] { return serialize_hulls(outgoing[r]); }));
    programs[r].push_back(Op::recv(0, Channel::MigrationGrids, [&out, r](Bytes&& b) {
      for (auto& h : deserialize_hulls(b)) out.ranks[r].adopt(std::move(h));
    }));
    programs[r].push_back(finish(r));
  }
  programs[0].push_back(finish(0));
  Transport transport(ranks, config);
  out.traffic = transport.run_cycle(std::move(programs), "distribute");
  return out;
}

namespace {

TransportConfig config_of(const Scenario& s, Executor e) {
  TransportConfig c;
  c.mode = s.transport;
  c.buffer_budget = s.buffer_budget;
  c.executor = e;
  return c;
}

}  // namespace

Simulation::Simulation(const Scenario& scenario, Executor executor)
    : Simulation(scenario, config_of(scenario, executor)) {}

Simulation::Simulation(const Scenario& scenario, const TransportConfig& config) : scenario_(scenario) {
  scenario_.validate();
  auto dist = initial_distribute(scenario_.spec, scenario_.depth, scenario_.ranks, scenario_.scheme, config,
                                 scenario_.payload_bytes);
  distribution_ = dist.traffic;
  cluster_ = std::make_unique<Cluster>(scenario_.spec, std::move(dist.ranks), config);
  cluster_->pattern = scenario_.pattern;
  cluster_->payload_bytes = scenario_.payload_bytes;
  if (scenario_.mode == Mode::Central) manager_ = std::make_unique<CentralManager>(*cluster_);
  balancer_ = make_balancer(scenario_.balancer);
}

RoundReport Simulation::run_round(const ScenarioRound& round) {
  const auto batches = round.batches(cluster_->size());
  if (round.has_migrations()) {
    const auto plans = round.plans(cluster_->size());
    return run_round(batches, [plans](const Cluster&) { return plans; });
  }
  return run_round(batches, balancer_plans(*balancer_));
}

RoundReport Simulation::run_round(const std::vector<RefineDeleteBatch>& batches, const PlanSource& plans) {
  if (manager_) return central_round(*cluster_, *manager_, batches, plans);
  return run_full_round(*cluster_, batches, plans);
}

std::vector<RankDump> Simulation::dumps() const {
  std::vector<RankDump> out;
  for (const auto& t : cluster_->ranks) out.push_back(snapshot(t, cluster_->spec.factor));
  return out;
}

std::string Simulation::dump_text() const {
  std::ostringstream os;
  for (const auto& d : dumps()) write_dump(os, d);
  return os.str();
}

ConsistencyReport Simulation::check() const {
  const auto d = dumps();
  return check_consistency(d);
}

ScenarioResult run_scenario(const Scenario& scenario, Executor executor, bool check_rounds) {
  ScenarioResult out;
  Simulation sim(scenario, executor);
  for (std::size_t i = 0; i < scenario.rounds.size(); ++i) {
    try {
      out.rounds.push_back(sim.run_round(scenario.rounds[i]));
    } catch (const Error& e) {
      out.failed_round = i + 1;
      out.failure = e.what();
      break;
    }
    if (check_rounds) {
      const auto rep = sim.check();
      if (!rep.ok()) {
        out.failed_round = i + 1;
        out.failure = rep.describe();
        break;
      }
    }
  }
  out.final_dumps = sim.dump_text();
  return out;
}

std::vector<RefineDeleteBatch> uniform_refine_batches(const Cluster& cluster, int from) {
  std::vector<RefineDeleteBatch> out(cluster.size());
  for (std::size_t r = 0; r < cluster.size(); ++r) {
    for (const auto& [gid, g] : cluster.ranks[r].registry()) {
      if (g.depth == from && g.is_leaf()) out[r].push_back({IntentKind::Refine, gid});
    }
  }
  return out;
}

BenchResult bench_refine(int from, int to, const BenchOptions& options) {
  if (from < 0 || to != from + 1) throw ConfigError("bench refines exactly one level: to must be from + 1");
  Scenario s;
  s.spec.max_depth = to;
  s.ranks = options.ranks;
  s.depth = from;
  s.scheme = options.scheme;
  s.mode = options.mode;
  s.pattern = options.pattern;
  s.payload_bytes = options.payload_bytes;
  s.transport = options.transport.mode;
  s.buffer_budget = options.transport.buffer_budget;
  Simulation sim(s, options.transport);

  auto count = [&sim] {
    std::uint64_t n = 0;
    for (const auto& t : sim.cluster().ranks) n += t.size();
    return n;
  };
  BenchResult out;
  out.initial_grids = count();
  if (out.initial_grids != uniform_grid_count(s.spec.factor, from)) {
    throw StateError("initial grid count " + std::to_string(out.initial_grids) + " does not match the closed form");
  }
  const auto report = sim.run_round(uniform_refine_batches(sim.cluster(), from), [](const Cluster&) {
    return std::vector<MigrationPlan>{};
  });
  out.final_grids = count();
  if (out.final_grids != uniform_grid_count(s.spec.factor, to)) {
    throw StateError("final grid count " + std::to_string(out.final_grids) + " does not match the closed form");
  }
  out.cycles = report.cycles;
  out.total = report.total();
  out.max_rank_msgs = out.total.max_rank_msgs();
  out.rank0_msgs = out.total.ranks.empty() ? 0 : out.total.ranks[0].msgs();
  out.max_modeled_time = out.total.max_modeled_time();
  return out;
}

namespace {

class RoundGenerator {
 public:
  explicit RoundGenerator(std::uint64_t seed) : rng_(seed) {}

  std::size_t below(std::size_t n) { return n == 0 ? 0 : static_cast<std::size_t>(rng_() % n); }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }

  std::vector<ScenarioOp> intents(const Cluster& c) {
    std::vector<GridUid> refinable;
    std::vector<GridUid> deletable;
    std::set<GridUid> can_refine;
    for (const auto& t : c.ranks) {
      for (const auto& [gid, g] : t.registry()) {
        if (!g.is_leaf()) continue;
        if (g.depth < c.spec.max_depth) {
          refinable.push_back(g.uid);
          can_refine.insert(g.uid);
        }
        if (g.parent) deletable.push_back(g.uid);
      }
    }
    auto hull = [&c](const GridUid& u) -> const GridHull& { return c.ranks[u.rank].grid(u.gid); };

    std::set<GridUid> refining;
    std::vector<ScenarioOp> ops;
    auto refine = [&](const GridUid& u) {
      if (refining.insert(u).second) ops.push_back({ScenarioOp::Kind::Refine, u.rank, u.gid, 0});
    };
    if (!refinable.empty()) {
      for (std::size_t n = below(3); n > 0; --n) {
        const GridUid g = pick(refinable);
        const std::size_t start = below(kFaces);
        for (std::size_t i = 0; i < static_cast<std::size_t>(kFaces); ++i) {
          const auto& nb = hull(g).neighbors[(start + i) % kFaces];
          if (nb && nb->rank != g.rank && can_refine.count(*nb)) {
            refine(g);
            refine(*nb);
            break;
          }
        }
      }
      for (std::size_t n = below(5); n > 0; --n) refine(pick(refinable));
    }
    std::set<GridUid> deleting;
    if (!deletable.empty()) {
      for (std::size_t n = below(5); n > 0; --n) {
        const GridUid g = pick(deletable);
        if (refining.count(g) || deleting.count(g)) continue;
        if (delete_conflict(c.ranks, refining, g)) continue;
        deleting.insert(g);
        ops.push_back({ScenarioOp::Kind::Delete, g.rank, g.gid, 0});
      }
    }
    return ops;
  }

  std::vector<MigrationPlan> plans(const Cluster& c, std::vector<ScenarioOp>& record) {
    std::vector<MigrationPlan> out(c.size());
    std::map<GridUid, Rank> leaving;
    for (std::size_t n = below(4); n > 0; --n) {
      const Rank origin = static_cast<Rank>(below(c.size()));
      const auto& topo = c.ranks[origin];
      if (topo.remote_ranks().empty() || topo.size() < 2) continue;
      const Rank target = pick(topo.remote_ranks());
      std::vector<std::uint32_t> gids;
      for (const auto& [gid, g] : topo.registry()) gids.push_back(gid);
      std::vector<std::uint32_t> group{pick(gids)};
      for_each_link(topo.grid(group.front()), [&](const GridUid& l) {
        if (l.rank == origin && group.size() < 3 && below(2) == 0) group.push_back(l.gid);
      });
      for (auto gid : group) {
        if (out[origin].size() + 1 >= topo.size()) break;
        const GridHull& g = topo.grid(gid);
        if (leaving.count(g.uid)) continue;
        bool clash = false;
        for_each_link(g, [&](const GridUid& l) {
          auto it = leaving.find(l);
          if (it != leaving.end() && it->second != origin) clash = true;
        });
        if (clash) continue;
        leaving[g.uid] = origin;
        out[origin].push_back({gid, target});
        record.push_back({ScenarioOp::Kind::Migrate, origin, gid, target});
      }
    }
    return out;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

FuzzResult fuzz(const FuzzOptions& o) {
  if (o.ops < 1) throw ConfigError("fuzz needs at least one round");
  if (o.ranks < 1) throw ConfigError("fuzz needs at least one rank");
  if (o.depth < 1) throw ConfigError("fuzz needs a depth of at least 1");
  Scenario s;
  s.ranks = o.ranks;
  s.pattern = o.pattern;
  s.depth = o.depth - 1;
  while (uniform_grid_count(s.spec.factor, s.depth) < o.ranks) ++s.depth;
  s.spec.max_depth = std::max(o.depth, s.depth + 1);

  FuzzResult out;
  Simulation sim(s, o.executor);
  RoundGenerator gen(o.seed);
  for (int round = 1; round <= o.ops; ++round) {
    ScenarioRound rec;
    rec.ops = gen.intents(sim.cluster());
    const auto batches = rec.batches(s.ranks);
    std::string failure;
    try {
      const auto report = sim.run_round(batches, [&gen, &rec](const Cluster& c) { return gen.plans(c, rec.ops); });
      for (const auto& c : report.cycles) out.traffic.push_back(c);
      out.fanout += report.fanout;
    } catch (const Error& e) {
      failure = e.what();
    }
    s.rounds.push_back(std::move(rec));
    out.rounds_run = round;
    if (failure.empty()) {
      const auto rep = sim.check();
      if (!rep.ok()) failure = rep.describe();
    }
    if (!failure.empty()) {
      out.pass = false;
      out.failed_round = round;
      out.failure = std::move(failure);
      break;
    }
  }
  out.scenario = s;
  out.final_dumps = sim.dump_text();
  return out;
}

void write_failure_artifacts(const FuzzResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream sc(dir / "scenario.txt");
  if (result.failed_round) {
    sc << "# fails in round " << *result.failed_round << "\n";
    std::istringstream lines(result.failure);
    for (std::string l; std::getline(lines, l);) sc << "# " << l << "\n";
  }
  write_scenario(sc, result.scenario);
  std::ofstream dumps(dir / "dumps.jsonl");
  dumps << result.final_dumps;
  if (!sc || !dumps) throw ConfigError("cannot write failure artifacts to " + dir.string());
}

}  // namespace dtopo
