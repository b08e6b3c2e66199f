#pragma once

#include "dtopo/dump.hpp"
#include "dtopo/harness.hpp"

#include <map>
#include <set>
#include <span>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace dtopo::test {

using Cell = std::tuple<int, std::int64_t, std::int64_t, std::int64_t>;

inline Cell cell(int depth, const Coord3& p) { return {depth, p.x, p.y, p.z}; }

// east, west, north, south, top, bottom
inline constexpr std::int64_t kOffsets[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};

inline std::map<Cell, GridUid> lattice(const std::vector<RankDump>& dumps) {
  std::map<Cell, GridUid> out;
  for (const auto& d : dumps) {
    for (const auto& g : d.grids) out[cell(g.depth, g.pos)] = g.uid;
  }
  return out;
}

inline const GridHull* hull_at(const Cluster& c, int depth, Coord3 pos) {
  for (const auto& t : c.ranks) {
    for (const auto& [gid, g] : t.registry()) {
      if (g.depth == depth && g.pos == pos) return &g;
    }
  }
  return nullptr;
}

inline const GridHull& hull_of(const Cluster& c, const GridUid& uid) { return c.ranks.at(uid.rank).grid(uid.gid); }

// Counts link mismatches against lattice arithmetic alone: face slot d of a
// grid at p must name whatever sits at p + step(d) on the same depth, the
// parent slot whatever sits at p / factor one level up.
inline std::size_t lattice_mismatches(const std::vector<RankDump>& dumps) {
  const auto at = lattice(dumps);
  auto lookup = [&](int depth, const Coord3& p) -> std::optional<GridUid> {
    auto it = at.find(cell(depth, p));
    if (it == at.end()) return std::nullopt;
    return it->second;
  };
  std::size_t bad = 0;
  for (const auto& d : dumps) {
    for (const auto& g : d.grids) {
      for (int k = 0; k < kFaces; ++k) {
        const auto* o = kOffsets[k];
        const Coord3 q{g.pos.x + o[0], g.pos.y + o[1], g.pos.z + o[2]};
        if (g.neighbors[static_cast<std::size_t>(k)] != lookup(g.depth, q)) ++bad;
      }
      if (g.depth > 0) {
        const Coord3 up{g.pos.x / d.factor.x, g.pos.y / d.factor.y, g.pos.z / d.factor.z};
        if (g.parent != lookup(g.depth - 1, up)) ++bad;
      } else if (g.parent) {
        ++bad;
      }
    }
  }
  return bad;
}

inline std::size_t total_grids(const Cluster& c) {
  std::size_t n = 0;
  for (const auto& t : c.ranks) n += t.size();
  return n;
}

inline Scenario small_scenario(std::size_t ranks, int depth, int max_depth) {
  Scenario s;
  s.ranks = ranks;
  s.depth = depth;
  s.spec.max_depth = max_depth;
  return s;
}

// Each Send step sends a query word and waits for one answer word; each
// Recv step mirrors it. LocalUpdate steps do nothing.
inline std::vector<Program> exchange_programs(std::span<const CommSchedule> schedules) {
  std::vector<Program> out(schedules.size());
  for (std::size_t r = 0; r < schedules.size(); ++r) {
    const Rank me = schedules[r].rank;
    for (const auto& st : schedules[r].steps) {
      if (st.op == StepOp::LocalUpdate) continue;
      const Rank peer = *st.peer;
      const std::uint64_t word = std::uint64_t{me} * 1000 + peer;
      auto send_q = Op::send(peer, Channel::QueryVector, [word] { return pack_words(std::vector<std::uint64_t>{word}); });
      auto recv_q = Op::recv(peer, Channel::QueryVector, [](Bytes&&) {});
      auto send_a = Op::send(peer, Channel::NeighbourVector, [word] { return pack_words(std::vector<std::uint64_t>{word}); });
      auto recv_a = Op::recv(peer, Channel::NeighbourVector, [](Bytes&&) {});
      if (st.op == StepOp::Send) {
        out[r].push_back(send_q);
        out[r].push_back(recv_a);
      } else {
        out[r].push_back(recv_q);
        out[r].push_back(send_a);
      }
    }
  }
  return out;
}

// Random pair set over `ranks` ranks with edge probability p.
inline std::set<RankPair> random_pairs(std::mt19937_64& rng, std::size_t ranks, double p) {
  std::set<RankPair> out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Rank a = 0; a < ranks; ++a) {
    for (Rank b = a + 1; b < ranks; ++b) {
      if (u(rng) < p) out.insert({a, b});
    }
  }
  return out;
}

inline std::set<RankPair> all_pairs(std::size_t ranks) {
  std::set<RankPair> out;
  for (Rank a = 0; a < ranks; ++a) {
    for (Rank b = a + 1; b < ranks; ++b) out.insert({a, b});
  }
  return out;
}

inline ScenarioOp refine_op(const GridUid& u) { return {ScenarioOp::Kind::Refine, u.rank, u.gid, 0}; }
inline ScenarioOp delete_op(const GridUid& u) { return {ScenarioOp::Kind::Delete, u.rank, u.gid, 0}; }
inline ScenarioOp migrate_op(const GridUid& u, Rank to) { return {ScenarioOp::Kind::Migrate, u.rank, u.gid, to}; }

}  // namespace dtopo::test
