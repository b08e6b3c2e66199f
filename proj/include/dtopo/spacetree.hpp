#pragma once

#include "dtopo/codec.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace dtopo {

// Children per axis; the position hash reserves three bits per axis.
struct RefinementFactor {
  std::uint32_t x = 2;
  std::uint32_t y = 2;
  std::uint32_t z = 2;

  std::uint32_t at(int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  std::uint32_t count() const { return x * y * z; }
  void validate() const;

  // Dense child slot of the child at position p; equals hash order.
  std::size_t slot(const Position& p) const { return p.i + x * (p.j + y * std::size_t{p.k}); }
  Position position(std::size_t slot) const;

  friend bool operator==(const RefinementFactor&, const RefinementFactor&) = default;
};

inline constexpr RefinementFactor kBisection{2, 2, 2};

struct Coord3 {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  std::int64_t at(int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
  std::int64_t& at(int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
  friend auto operator<=>(const Coord3&, const Coord3&) = default;
};

// Unit step from a grid to its face neighbour in direction d.
Coord3 step(Direction d);

struct Box {
  std::array<double, 3> origin{0.0, 0.0, 0.0};
  std::array<double, 3> extent{1.0, 1.0, 1.0};
};

struct DomainSpec {
  Box root;
  RefinementFactor factor = kBisection;
  int max_depth = 6;
  // Informational: every grid encloses the same number of cells.
  std::uint32_t cells_per_grid = 16 * 16 * 16;

  void validate() const;
};

// Topological grid record. Geometry is kept as integer coordinates on the
// lattice of its depth: along axis a the grid spans
// [pos.a, pos.a + 1] / factor.a^depth of the root extent.
struct GridHull {
  GridUid uid;
  int depth = 0;
  Coord3 pos;
  std::optional<GridUid> parent;
  // Empty for a grid that was never refined; otherwise factor.count() slots.
  // Slots of deleted leaf children are empty.
  std::vector<std::optional<GridUid>> children;
  std::array<std::optional<GridUid>, kFaces> neighbors;
  std::vector<std::byte> payload;

  bool refined() const;
  bool is_leaf() const { return !refined(); }
  std::optional<GridUid>& neighbor(Direction d) { return neighbors[static_cast<std::size_t>(index_of(d))]; }
  const std::optional<GridUid>& neighbor(Direction d) const {
    return neighbors[static_cast<std::size_t>(index_of(d))];
  }
};

// Physical bounding box of a hull.
Box bbox(const DomainSpec& spec, const GridHull& hull);

// Lattice position of the child at p inside parent.
Coord3 child_position(const GridHull& parent, const RefinementFactor& f, const Position& p);

// Creates the factor.count() children of parent. Each child's UID comes from
// make_uid(hash). Sibling neighbour slots, the child parent links and the
// parent's child slots are filled.
std::vector<GridHull> subdivide(GridHull& parent, const RefinementFactor& factor,
                                const std::function<GridUid(std::uint32_t hash)>& make_uid);

// Position of a child whose hash is child_hash, reflected across the face
// shared with the neighbouring parent in direction `toward`.
std::uint32_t mirror_hash(std::uint32_t child_hash, Direction toward, const RefinementFactor& f);

// Hashes of the children lying on the face of their parent in direction d.
std::vector<std::uint32_t> face_child_hashes(Direction d, const RefinementFactor& f);

// Global tree as built by the master before distribution. UIDs use rank 0
// and creation order as GID.
class SpaceTree {
 public:
  explicit SpaceTree(DomainSpec spec);

  const DomainSpec& spec() const { return spec_; }
  std::size_t size() const { return grids_.size(); }
  std::span<const GridHull> grids() const { return grids_; }
  const GridHull& root() const { return grids_.front(); }

  bool contains(const GridUid& uid) const;
  const GridHull& at(const GridUid& uid) const;
  GridHull& at(const GridUid& uid);

  std::vector<GridUid> subdivide(const GridUid& parent);

  // Fills every same-depth face link from lattice coordinates.
  void link_neighbors();

 private:
  DomainSpec spec_;
  std::vector<GridHull> grids_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

SpaceTree build_uniform(const DomainSpec& spec, int depth);

// Sum over levels 0..depth of factor.count()^level.
std::uint64_t uniform_grid_count(const RefinementFactor& factor, int depth);

enum class Linearization { Morton, DepthFirst };

std::vector<GridUid> linearize(const SpaceTree& tree, Linearization scheme);

struct Slice {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

// Contiguous balanced slices; the first (count % ranks) ranks get one more.
std::vector<Slice> partition(std::size_t count, std::size_t ranks);

using NeighborSlots = std::array<std::optional<GridUid>, kFaces>;

// Brute-force same-depth face adjacency over all pairs of the given hulls.
std::map<GridUid, NeighborSlots> neighbor_oracle(std::span<const GridHull> grids);
std::map<GridUid, NeighborSlots> neighbor_oracle(const SpaceTree& tree);

}  // namespace dtopo
