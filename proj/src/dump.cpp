#include "dtopo/dump.hpp"

#include "dtopo/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

namespace dtopo {

using json = nlohmann::ordered_json;

namespace {

json uid_or_null(const std::optional<GridUid>& u) { return u ? json(to_string(*u)) : json(nullptr); }

std::optional<GridUid> opt_uid(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_string()) throw FormatError("UID must be a string or null");
  return parse_uid(j.get<std::string>());
}

Coord3 coord(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("coordinate must be an array of three integers");
  return {j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>()};
}

std::string coord_text(const Coord3& c) {
  return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + "," + std::to_string(c.z) + ")";
}

std::string slot_text(const std::optional<Direction>& d) { return d ? std::string(" ") + to_string(*d) : ""; }

}  // namespace

GridUid parse_uid(const std::string& text) {
  std::uint64_t parts[3] = {0, 0, 0};
  const char* p = text.data();
  const char* end = p + text.size();
  for (int i = 0; i < 3; ++i) {
    auto [next, ec] = std::from_chars(p, end, parts[i]);
    if (ec != std::errc{} || next == p) throw FormatError("bad UID '" + text + "'");
    p = next;
    if (i < 2) {
      if (p == end || *p != ':') throw FormatError("bad UID '" + text + "'");
      ++p;
    }
  }
  if (p != end) throw FormatError("bad UID '" + text + "'");
  if (parts[0] > 0xffffffffull || parts[1] > kMaxGid || parts[2] > kMaxHash) {
    throw FormatError("UID field out of range in '" + text + "'");
  }
  return {static_cast<Rank>(parts[0]), static_cast<std::uint32_t>(parts[1]), static_cast<std::uint32_t>(parts[2])};
}

RankDump snapshot(const RankTopology& topo, const RefinementFactor& factor) {
  RankDump d;
  d.rank = topo.rank();
  d.factor = factor;
  d.remote_ranks = topo.remote_ranks();
  for (const auto& [gid, g] : topo.registry()) d.grids.push_back(g);
  return d;
}

void write_dump(std::ostream& os, const RankDump& dump) {
  json head;
  head["type"] = "rank";
  head["rank"] = dump.rank;
  head["factor"] = {dump.factor.x, dump.factor.y, dump.factor.z};
  head["remote_ranks"] = dump.remote_ranks;
  os << head.dump() << '\n';
  for (const auto& g : dump.grids) {
    json r;
    r["type"] = "grid";
    r["uid"] = to_string(g.uid);
    r["depth"] = g.depth;
    r["lo"] = {g.pos.x, g.pos.y, g.pos.z};
    r["hi"] = {g.pos.x + 1, g.pos.y + 1, g.pos.z + 1};
    r["parent"] = uid_or_null(g.parent);
    json kids = json::array();
    for (const auto& c : g.children) kids.push_back(uid_or_null(c));
    r["children"] = kids;
    json nbs = json::array();
    for (const auto& n : g.neighbors) nbs.push_back(uid_or_null(n));
    r["neighbors"] = nbs;
    r["payload_bytes"] = g.payload.size();
    os << r.dump() << '\n';
  }
}

std::string dump_string(const RankTopology& topo, const RefinementFactor& factor) {
  std::ostringstream os;
  write_dump(os, snapshot(topo, factor));
  return os.str();
}

std::vector<RankDump> parse_dumps(std::istream& is) {
  std::vector<RankDump> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = "line " + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      const auto type = j.at("type").get<std::string>();
      if (type == "rank") {
        RankDump d;
        d.rank = j.at("rank").get<Rank>();
        const auto& f = j.at("factor");
        if (!f.is_array() || f.size() != 3) throw FormatError("factor must have three entries");
        d.factor = {f[0].get<std::uint32_t>(), f[1].get<std::uint32_t>(), f[2].get<std::uint32_t>()};
        d.factor.validate();
        d.remote_ranks = j.at("remote_ranks").get<std::vector<Rank>>();
        out.push_back(std::move(d));
      } else if (type == "grid") {
        if (out.empty()) throw FormatError("grid record before any rank header");
        GridHull g;
        g.uid = parse_uid(j.at("uid").get<std::string>());
        g.depth = j.at("depth").get<int>();
        g.pos = coord(j.at("lo"));
        const Coord3 hi = coord(j.at("hi"));
        if (hi.x != g.pos.x + 1 || hi.y != g.pos.y + 1 || hi.z != g.pos.z + 1) {
          throw FormatError("hi must be lo + 1 on the grid's lattice");
        }
        g.parent = opt_uid(j.at("parent"));
        for (const auto& c : j.at("children")) g.children.push_back(opt_uid(c));
        const auto& nbs = j.at("neighbors");
        if (!nbs.is_array() || nbs.size() != static_cast<std::size_t>(kFaces)) {
          throw FormatError("neighbors must have six entries");
        }
        for (int i = 0; i < kFaces; ++i) g.neighbors[static_cast<std::size_t>(i)] = opt_uid(nbs[static_cast<std::size_t>(i)]);
        if (j.contains("payload_bytes")) g.payload.resize(j.at("payload_bytes").get<std::size_t>());
        out.back().grids.push_back(std::move(g));
      } else {
        throw FormatError("unknown record type '" + type + "'");
      }
    } catch (const FormatError& e) {
      throw FormatError(at + e.what());
    } catch (const Error& e) {
      throw FormatError(at + e.what());
    } catch (const json::exception& e) {
      throw FormatError(at + e.what());
    }
  }
  return out;
}

std::vector<RankDump> parse_dumps(const std::string& text) {
  std::istringstream is(text);
  return parse_dumps(is);
}

const char* to_string(Violation::Kind k) {
  switch (k) {
    case Violation::Kind::Ownership: return "ownership";
    case Violation::Kind::Duplicate: return "duplicate";
    case Violation::Kind::Hierarchy: return "hierarchy";
    case Violation::Kind::Neighbor: return "neighbor";
    case Violation::Kind::RemoteRanks: return "remote_ranks";
  }
  return "?";
}

std::string Violation::describe() const {
  if (kind == Kind::RemoteRanks) return std::string(to_string(kind)) + " rank " + std::to_string(grid.rank) + ": " + detail;
  return std::string(to_string(kind)) + " " + to_string(grid) + " depth " + std::to_string(depth) + " at " +
         coord_text(pos) + slot_text(slot) + ": " + detail;
}

std::string ConsistencyReport::describe() const {
  std::string out = std::to_string(grids) + " grids, " + std::to_string(violations.size()) + " violations\n";
  for (const auto& v : violations) out += "  " + v.describe() + "\n";
  return out;
}

ConsistencyReport check_consistency(std::span<const RankDump> dumps) {
  ConsistencyReport rep;
  if (dumps.empty()) return rep;
  const RefinementFactor f = dumps.front().factor;
  for (const auto& d : dumps) {
    if (!(d.factor == f)) throw FormatError("dumps disagree on the refinement factor");
  }

  std::set<std::tuple<int, GridUid, int>> seen;
  auto report = [&](Violation::Kind kind, const GridHull& g, std::optional<Direction> slot, std::string detail) {
    const int s = slot ? static_cast<int>(*slot) : -1;
    if (!seen.emplace(static_cast<int>(kind), g.uid, s).second) return;
    rep.violations.push_back({kind, g.uid, g.depth, g.pos, slot, std::move(detail)});
  };

  std::vector<GridHull> all;
  std::map<GridUid, std::size_t> index;
  std::map<std::tuple<int, std::int64_t, std::int64_t, std::int64_t>, GridUid> place;
  for (const auto& d : dumps) {
    for (const auto& g : d.grids) {
      if (g.uid.rank != d.rank) {
        report(Violation::Kind::Ownership, g, std::nullopt, "listed by rank " + std::to_string(d.rank));
      }
      if (index.count(g.uid)) {
        report(Violation::Kind::Duplicate, g, std::nullopt, "UID listed twice");
        continue;
      }
      auto [it, fresh] = place.emplace(std::make_tuple(g.depth, g.pos.x, g.pos.y, g.pos.z), g.uid);
      if (!fresh) report(Violation::Kind::Duplicate, g, std::nullopt, "same cell as " + to_string(it->second));
      index[g.uid] = all.size();
      all.push_back(g);
    }
  }
  rep.grids = all.size();
  auto lookup = [&](const GridUid& u) -> const GridHull* {
    auto it = index.find(u);
    return it == index.end() ? nullptr : &all[it->second];
  };

  for (const auto& g : all) {
    if (g.depth < 0) report(Violation::Kind::Hierarchy, g, std::nullopt, "negative depth");
    for (int a = 0; a < 3; ++a) {
      std::int64_t cells = 1;
      for (int i = 0; i < g.depth; ++i) cells *= f.at(a);
      if (g.pos.at(a) < 0 || g.pos.at(a) >= cells) {
        report(Violation::Kind::Hierarchy, g, std::nullopt, "outside the root box");
        break;
      }
    }
    if (!g.parent) {
      if (g.depth != 0) report(Violation::Kind::Hierarchy, g, Direction::Supergrid, "missing parent");
    } else if (const GridHull* p = lookup(*g.parent)) {
      const auto pos = decode_position_hash(g.uid.hash);
      const auto slot = f.slot(pos);
      if (p->depth + 1 != g.depth || !(child_position(*p, f, pos) == g.pos)) {
        report(Violation::Kind::Hierarchy, g, Direction::Supergrid, "not inside parent " + to_string(*g.parent));
      } else if (p->children.size() != f.count() || p->children[slot] != g.uid) {
        report(Violation::Kind::Hierarchy, g, Direction::Supergrid,
               "parent " + to_string(*g.parent) + " does not list it as child");
      }
    } else {
      report(Violation::Kind::Hierarchy, g, Direction::Supergrid, "parent " + to_string(*g.parent) + " does not exist");
    }

    if (!g.children.empty() && g.children.size() != f.count()) {
      report(Violation::Kind::Hierarchy, g, Direction::Subgrid, "child list has the wrong length");
    } else if (!g.children.empty()) {
      bool any = false;
      for (std::size_t s = 0; s < g.children.size(); ++s) {
        const auto& c = g.children[s];
        if (!c) continue;
        any = true;
        const GridHull* ch = lookup(*c);
        if (!ch) {
          report(Violation::Kind::Hierarchy, g, Direction::Subgrid, "child " + to_string(*c) + " does not exist");
        } else if (ch->parent != g.uid || f.slot(decode_position_hash(c->hash)) != s) {
          report(Violation::Kind::Hierarchy, g, Direction::Subgrid, "child " + to_string(*c) + " does not match");
        }
      }
      if (!any) report(Violation::Kind::Hierarchy, g, Direction::Subgrid, "refined without children");
    }
  }

  const auto oracle = neighbor_oracle(all);
  for (const auto& g : all) {
    const auto& want = oracle.at(g.uid);
    for (int i = 0; i < kFaces; ++i) {
      const auto d = face(i);
      const auto& have = g.neighbors[static_cast<std::size_t>(i)];
      const auto& expect = want[static_cast<std::size_t>(i)];
      if (have != expect) {
        report(Violation::Kind::Neighbor, g, d,
               "expected " + (expect ? to_string(*expect) : "none") + ", found " + (have ? to_string(*have) : "none"));
      }
      if (!have) continue;
      const GridHull* t = lookup(*have);
      if (!t) continue;
      const auto& back = t->neighbors[static_cast<std::size_t>(index_of(opposite(d)))];
      if (back != g.uid) {
        report(Violation::Kind::Neighbor, g, d, "link to " + to_string(*have) + " is not reciprocated");
      }
    }
  }

  for (const auto& d : dumps) {
    std::set<Rank> peers;
    for (const auto& g : d.grids) {
      for_each_link(g, [&](const GridUid& l) {
        if (l.rank != d.rank) peers.insert(l.rank);
      });
    }
    const std::vector<Rank> expect(peers.begin(), peers.end());
    if (expect != d.remote_ranks) {
      std::string have;
      for (auto r : d.remote_ranks) have += (have.empty() ? "" : ",") + std::to_string(r);
      std::string want;
      for (auto r : expect) want += (want.empty() ? "" : ",") + std::to_string(r);
      Violation v;
      v.kind = Violation::Kind::RemoteRanks;
      v.grid = GridUid{d.rank, 0, 0};
      v.detail = "listed [" + have + "], links give [" + want + "]";
      rep.violations.push_back(std::move(v));
    }
  }
  return rep;
}

}  // namespace dtopo
