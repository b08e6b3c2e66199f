// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is nonzero when any criterion fails, except those listed in
// kKnownRed, which stay red on purpose and are explained in the README.

#include "oracles.hpp"
#include "support.hpp"

#include "dtopo/errors.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace dtopo;
using namespace dtopo::test;

namespace {

using Clock = std::chrono::steady_clock;

const std::set<int> kKnownRed{6};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome codec_exactness() {
  const auto t0 = Clock::now();
  std::size_t bad = 0;
  // Three fixed vectors per layout.
  bad += encode_uid(0, 0, 0) != uid_oracle(0, 0, 0);
  bad += encode_uid(1, 0, 0) != uid_oracle(1, 0, 0) || uid_oracle(1, 0, 0) != 4294967296ull;
  bad += encode_uid(0, 1, 0) != uid_oracle(0, 1, 0) || uid_oracle(0, 1, 0) != 512;
  bad += encode_query(Task::Refine, Direction::East, 0, 0) != query_oracle(0, 0, 0, 0);
  bad += encode_query(Task::Delete, Direction::Subgrid, 3, 65) != query_oracle(1, 6, 3, 65);
  bad += encode_query(Task::Migrate, Direction::Subgrid, kMaxGid, 511) != query_oracle(2, 6, kMaxGid, 511);
  std::mt19937_64 rng(2024);
  for (int n = 0; n < 100000; ++n) {
    const GridUid u = random_uid(rng);
    const auto w = encode_uid(u);
    bad += w != uid_oracle(u.rank, u.gid, u.hash) || !(decode_uid(w) == u);
    const Query q = random_query(rng);
    const auto qw = encode_query(q);
    bad += qw != query_oracle(static_cast<unsigned>(q.task), static_cast<unsigned>(q.direction), q.gid, q.hash) ||
           !(decode_query(qw) == q);
  }
  const double s = seconds_since(t0);
  std::ostringstream os;
  os << "10^5 uid + 10^5 query roundtrips, 6 fixed vectors, " << bad << " mismatches, " << s << " s";
  return {bad == 0 && s < 1.0, os.str()};
}

Outcome grid_counts() {
  const std::uint64_t want[] = {585, 4681, 37449, 299593};
  std::ostringstream os;
  bool ok = true;
  for (int d = 3; d <= 6; ++d) {
    const auto n = build_uniform(DomainSpec{}, d).size();
    ok = ok && n == want[d - 3];
    os << (d > 3 ? " / " : "") << n;
  }
  return {ok, "depths 3..6 give " + os.str()};
}

Outcome golden_tables() {
  const std::string table1 =
      "stage,0,1,2,3,4,5\n1,1,0,-,-,-,-\n2,2,-,0,-,-,-\n3,3,2,1,0,-,-\n4,4,3,-,1,0,-\n5,5,4,3,2,1,0\n"
      "6,-,5,4,-,2,1\n7,-,-,5,4,3,2\n8,-,-,-,5,-,3\n9,-,-,-,-,5,4\n";
  const std::string table2 =
      "stage,0,1,2,3,4,5\n1&7,1,0,5,4,3,2\n2&8,2,-,0,5,-,3\n3&9,3,2,1,0,5,4\n4,4,3,-,1,0,-\n5,5,4,3,2,1,0\n"
      "6,-,5,4,-,2,1\n";
  const auto pairs = all_pairs(6);
  const bool a = stage_table(structured_schedules(pairs, 6)).to_csv() == table1;
  const bool b = join_stages(pairs, 6).table.to_csv() == table2;
  return {a && b, std::string("9-stage table ") + (a ? "matches" : "differs") + ", 6-stage joined table " +
                      (b ? "matches" : "differs")};
}

Outcome deadlock_freedom() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::size_t deadlocks = 0, messages = 0;
  for (int n = 0; n < 1000; ++n) {
    const std::size_t ranks = 2 + rng() % 31;
    const double p = 0.05 + 0.9 * static_cast<double>(rng() % 1000) / 1000.0;
    const auto pairs = random_pairs(rng, ranks, p);
    Transport t(ranks);
    try {
      messages += t.run_cycle(exchange_programs(structured_schedules(pairs, ranks))).total_msgs_sent();
    } catch (const DeadlockError&) {
      ++deadlocks;
    }
  }
  bool adversarial = false;
  {
    Transport t(4);
    std::vector<Program> progs(4);
    for (Rank r = 0; r < 4; ++r) {
      for (Rank q = 0; q < 4; ++q) {
        if (q != r) progs[r].push_back(Op::send(q, Channel::QueryVector, [] { return Bytes(8); }));
      }
      for (Rank q = 0; q < 4; ++q) {
        if (q != r) progs[r].push_back(Op::recv(q, Channel::QueryVector, [](Bytes&&) {}));
      }
    }
    try {
      t.run_cycle(std::move(progs));
    } catch (const DeadlockError&) {
      adversarial = true;
    }
  }
  const double s = seconds_since(t0);
  std::ostringstream os;
  os << "1000 pair sets over 2-32 ranks, " << deadlocks << " deadlocks, " << messages
     << " messages; all-send-first " << (adversarial ? "detected" : "NOT detected") << ", " << s << " s";
  return {deadlocks == 0 && adversarial && s < 60.0, os.str()};
}

struct FuzzSweep {
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::size_t duplicates = 0;
  std::size_t group_migrations = 0;
  FanoutStats fanout;
  std::vector<Scenario> scenarios;
  std::vector<std::string> dumps;
  double seconds = 0.0;
  std::string first_failure;
};

// Rounds in which one rank sends two or more grids away.
std::size_t group_migration_rounds(const Scenario& s) {
  std::size_t n = 0;
  for (const auto& r : s.rounds) {
    std::map<Rank, int> per_origin;
    for (const auto& op : r.ops) {
      if (op.kind == ScenarioOp::Kind::Migrate) ++per_origin[op.rank];
    }
    for (const auto& [rank, c] : per_origin) {
      if (c >= 2) {
        ++n;
        break;
      }
    }
  }
  return n;
}

FuzzSweep fuzz_sweep() {
  const auto t0 = Clock::now();
  const std::size_t ranks[] = {2, 3, 5, 8, 12, 16};
  const int depths[] = {2, 3, 4};
  FuzzSweep out;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    FuzzOptions o;
    o.seed = seed;
    o.ops = 100;
    o.ranks = ranks[seed % 6];
    o.depth = depths[seed % 3];
    o.pattern = seed % 4 == 0 ? PatternKind::Joined : PatternKind::Structured;
    const auto r = fuzz(o);
    ++out.runs;
    if (!r.pass) {
      ++out.failures;
      if (out.first_failure.empty()) out.first_failure = "seed " + std::to_string(seed) + ": " + r.failure;
    }
    out.fanout += r.fanout;
    out.duplicates += r.fanout.duplicates_erased;
    out.group_migrations += group_migration_rounds(r.scenario);
    if (out.scenarios.size() < 10) {
      out.scenarios.push_back(r.scenario);
      out.dumps.push_back(r.final_dumps);
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

Outcome oracle_consistency(const FuzzSweep& f) {
  std::ostringstream os;
  os << f.runs << " seeds x 100 rounds, P 2..16, depth 2..4: " << f.failures << " failing runs, "
     << f.duplicates << " duplicate erasures, " << f.group_migrations << " multi-grid migration rounds, " << f.seconds
     << " s";
  if (!f.first_failure.empty()) os << "; " << f.first_failure.substr(0, 200);
  return {f.runs >= 20 && f.failures == 0 && f.duplicates > 0 && f.group_migrations > 0 && f.seconds < 300.0,
          os.str()};
}

Outcome scaling_trends() {
  const auto t0 = Clock::now();
  const std::size_t ps[] = {4, 8, 16, 32};
  std::vector<std::uint64_t> dec, cen;
  for (auto p : ps) {
    BenchOptions o;
    o.ranks = p;
    dec.push_back(bench_refine(4, 5, o).max_rank_msgs);
    o.mode = Mode::Central;
    cen.push_back(bench_refine(4, 5, o).rank0_msgs);
  }
  bool dec_ok = true, cen_ok = true;
  for (std::size_t i = 1; i < dec.size(); ++i) {
    dec_ok = dec_ok && dec[i] <= dec[i - 1];
    cen_ok = cen_ok && cen[i] > cen[i - 1];
  }
  const double s = seconds_since(t0);
  std::ostringstream os;
  os << "P=4/8/16/32 decentral max per-rank msgs";
  for (auto v : dec) os << ' ' << v;
  os << (dec_ok ? " (non-increasing)" : " (increasing)") << "; central manager msgs";
  for (auto v : cen) os << ' ' << v;
  os << (cen_ok ? " (increasing)" : " (not increasing)") << ", " << s << " s";
  return {dec_ok && cen_ok && s < 120.0, os.str()};
}

Outcome mode_equivalence(const FuzzSweep& f) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < f.scenarios.size(); ++i) {
    Scenario c = f.scenarios[i];
    c.mode = Mode::Central;
    const auto r = run_scenario(c, Executor::RoundBased, false);
    same += r.final_dumps == f.dumps[i];
  }
  std::ostringstream os;
  os << same << " of " << f.scenarios.size() << " fuzz scenarios byte-identical";
  return {f.scenarios.size() == 10 && same == 10, os.str()};
}

Outcome bounded_fanout(const FuzzSweep& f) {
  const auto& s = f.fanout;
  std::ostringstream os;
  os << "max queries per refine " << s.max_per_refine << "/6, per delete " << s.max_per_delete
     << "/7, per migrated grid " << s.max_per_migrate << "/15 over " << s.refined << " refines, " << s.deleted
     << " deletes, " << s.migrated << " migrations";
  return {s.max_per_refine <= 6 && s.max_per_delete <= 7 && s.max_per_migrate <= 15 && s.refined > 0 &&
              s.deleted > 0 && s.migrated > 0,
          os.str()};
}

}  // namespace

int main() {
  int blocking_failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    const bool known = kKnownRed.count(id) != 0;
    std::cout << "criterion " << id << " " << name << ": " << (o.pass ? "PASS" : "FAIL")
              << (!o.pass && known ? " (known red)" : "") << " - " << o.detail << std::endl;
    if (!o.pass && !known) ++blocking_failures;
  };
  auto guarded = [](auto&& fn) -> Outcome {
    try {
      return fn();
    } catch (const std::exception& e) {
      return {false, std::string("exception: ") + e.what()};
    }
  };

  report(1, "codec exactness", guarded(codec_exactness));
  report(2, "grid-count reproduction", guarded(grid_counts));
  report(3, "pattern golden tables", guarded(golden_tables));
  report(4, "deadlock freedom", guarded(deadlock_freedom));
  FuzzSweep sweep;
  try {
    sweep = fuzz_sweep();
  } catch (const std::exception& e) {
    sweep.failures = 1;
    sweep.first_failure = e.what();
  }
  report(5, "oracle consistency", oracle_consistency(sweep));
  report(6, "scaling trends", guarded(scaling_trends));
  report(7, "mode equivalence", guarded([&] { return mode_equivalence(sweep); }));
  report(8, "bounded fan-out", bounded_fanout(sweep));
  return blocking_failures == 0 ? 0 : 1;
}
