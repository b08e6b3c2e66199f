#pragma once

// Line-delimited topology dumps. A rank dump is one header record followed
// by one record per grid in ascending gid order:
//
//   {"type":"rank","rank":1,"factor":[2,2,2],"remote_ranks":[0,2]}
//   {"type":"grid","uid":"1:0:3","depth":2,"lo":[2,0,0],"hi":[3,1,1],
//    "parent":"0:5:0","children":[],"neighbors":["1:1:2",null,...]}
//
// lo/hi are lattice coordinates at the grid's own depth. children is empty
// for an unrefined grid, otherwise one entry per child slot in hash order.

#include "dtopo/spacetree.hpp"
#include "dtopo/topology.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dtopo {

struct RankDump {
  Rank rank = 0;
  RefinementFactor factor;
  std::vector<Rank> remote_ranks;
  std::vector<GridHull> grids;
};

RankDump snapshot(const RankTopology& topo, const RefinementFactor& factor);
void write_dump(std::ostream& os, const RankDump& dump);
std::string dump_string(const RankTopology& topo, const RefinementFactor& factor);

// Parses any number of concatenated rank dumps. Throws FormatError.
std::vector<RankDump> parse_dumps(std::istream& is);
std::vector<RankDump> parse_dumps(const std::string& text);

GridUid parse_uid(const std::string& text);

struct Violation {
  enum class Kind { Ownership, Duplicate, Hierarchy, Neighbor, RemoteRanks };
  Kind kind = Kind::Neighbor;
  GridUid grid;
  int depth = 0;
  Coord3 pos;
  // Face or hierarchy slot involved, when there is one.
  std::optional<Direction> slot;
  std::string detail;

  std::string describe() const;
};
const char* to_string(Violation::Kind k);

struct ConsistencyReport {
  std::size_t grids = 0;
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

// Rebuilds the global tree from all dumps and checks ownership, parent and
// child geometry, every face slot against neighbor_oracle plus reciprocity,
// and every remote_ranks list.
ConsistencyReport check_consistency(std::span<const RankDump> dumps);

}  // namespace dtopo
