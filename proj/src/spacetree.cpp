#include "dtopo/spacetree.hpp"

#include "dtopo/errors.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <tuple>

namespace dtopo {

namespace {

struct LatticeKey {
  int depth;
  Coord3 pos;
  friend bool operator==(const LatticeKey&, const LatticeKey&) = default;
};

struct LatticeKeyHash {
  std::size_t operator()(const LatticeKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.depth) * 0x9E3779B97F4A7C15ull;
    for (std::int64_t v : {k.pos.x, k.pos.y, k.pos.z}) {
      h ^= static_cast<std::uint64_t>(v) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

std::uint64_t ipow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Morton digit of one level: bits of i, j, k interleaved, i least significant.
std::uint32_t interleave3(const Position& p) {
  std::uint32_t d = 0;
  for (unsigned b = 0; b < 3; ++b) {
    d |= ((p.i >> b) & 1u) << (3 * b);
    d |= ((p.j >> b) & 1u) << (3 * b + 1);
    d |= ((p.k >> b) & 1u) << (3 * b + 2);
  }
  return d;
}

}  // namespace

void RefinementFactor::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (at(a) < 1 || at(a) > 8) throw ConfigError("refinement factor per axis must lie in 1..8");
  }
  if (count() < 2) throw ConfigError("refinement factor product must be at least 2");
}

Position RefinementFactor::position(std::size_t slot) const {
  Position p;
  p.i = static_cast<std::uint32_t>(slot % x);
  p.j = static_cast<std::uint32_t>((slot / x) % y);
  p.k = static_cast<std::uint32_t>(slot / (std::size_t{x} * y));
  return p;
}

Coord3 step(Direction d) {
  Coord3 c;
  if (!is_face(d)) return c;
  c.at(axis_of(d)) = is_positive(d) ? 1 : -1;
  return c;
}

void DomainSpec::validate() const {
  factor.validate();
  if (max_depth < 0) throw ConfigError("max depth must be non-negative");
  for (int a = 0; a < 3; ++a) {
    const auto f = factor.at(a);
    if (f == 1) continue;
    // The lattice coordinate factor^depth must stay representable.
    std::uint64_t span = 1;
    for (int d = 0; d < max_depth; ++d) {
      if (span > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) / f) {
        throw ConfigError("max depth too large for the lattice coordinate range");
      }
      span *= f;
    }
    if (root.extent[static_cast<std::size_t>(a)] <= 0.0) throw ConfigError("root extent must be positive");
  }
}

bool GridHull::refined() const {
  return std::any_of(children.begin(), children.end(), [](const auto& c) { return c.has_value(); });
}

Box bbox(const DomainSpec& spec, const GridHull& hull) {
  Box b;
  for (int a = 0; a < 3; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    const double denom = static_cast<double>(ipow(spec.factor.at(a), hull.depth));
    b.extent[ua] = spec.root.extent[ua] / denom;
    b.origin[ua] = spec.root.origin[ua] + spec.root.extent[ua] * (static_cast<double>(hull.pos.at(a)) / denom);
  }
  return b;
}

Coord3 child_position(const GridHull& parent, const RefinementFactor& f, const Position& p) {
  return {parent.pos.x * f.x + p.i, parent.pos.y * f.y + p.j, parent.pos.z * f.z + p.k};
}

std::vector<GridHull> subdivide(GridHull& parent, const RefinementFactor& factor,
                                const std::function<GridUid(std::uint32_t hash)>& make_uid) {
  if (parent.refined()) throw StateError("grid " + to_string(parent.uid) + " is already refined");
  const std::size_t n = factor.count();
  std::vector<GridHull> kids(n);
  parent.children.assign(n, std::nullopt);
  for (std::size_t s = 0; s < n; ++s) {
    const Position p = factor.position(s);
    GridHull& c = kids[s];
    c.uid = make_uid(encode_position_hash(p));
    c.depth = parent.depth + 1;
    c.pos = child_position(parent, factor, p);
    c.parent = parent.uid;
    parent.children[s] = c.uid;
  }
  for (std::size_t s = 0; s < n; ++s) {
    const Position p = factor.position(s);
    for (int d = 0; d < kFaces; ++d) {
      const Direction dir = face(d);
      const int axis = axis_of(dir);
      const std::int64_t coord = axis == 0 ? p.i : axis == 1 ? p.j : p.k;
      const std::int64_t next = coord + (is_positive(dir) ? 1 : -1);
      if (next < 0 || next >= static_cast<std::int64_t>(factor.at(axis))) continue;
      Position q = p;
      (axis == 0 ? q.i : axis == 1 ? q.j : q.k) = static_cast<std::uint32_t>(next);
      kids[s].neighbor(dir) = kids[factor.slot(q)].uid;
    }
  }
  return kids;
}

std::uint32_t mirror_hash(std::uint32_t child_hash, Direction toward, const RefinementFactor& f) {
  Position p = decode_position_hash(child_hash);
  const int axis = axis_of(toward);
  std::uint32_t& c = axis == 0 ? p.i : axis == 1 ? p.j : p.k;
  c = f.at(axis) - 1 - c;
  return encode_position_hash(p);
}

std::vector<std::uint32_t> face_child_hashes(Direction d, const RefinementFactor& f) {
  std::vector<std::uint32_t> out;
  const int axis = axis_of(d);
  const std::uint32_t want = is_positive(d) ? f.at(axis) - 1 : 0;
  for (std::size_t s = 0; s < f.count(); ++s) {
    const Position p = f.position(s);
    const std::uint32_t c = axis == 0 ? p.i : axis == 1 ? p.j : p.k;
    if (c == want) out.push_back(encode_position_hash(p));
  }
  return out;
}

SpaceTree::SpaceTree(DomainSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  GridHull root;
  root.uid = GridUid{0, 0, 0};
  grids_.push_back(std::move(root));
  index_.emplace(encode_uid(grids_.front().uid), 0);
}

bool SpaceTree::contains(const GridUid& uid) const { return index_.count(encode_uid(uid)) != 0; }

const GridHull& SpaceTree::at(const GridUid& uid) const {
  auto it = index_.find(encode_uid(uid));
  if (it == index_.end()) throw StateError("unknown grid " + to_string(uid));
  return grids_[it->second];
}

GridHull& SpaceTree::at(const GridUid& uid) {
  return const_cast<GridHull&>(static_cast<const SpaceTree&>(*this).at(uid));
}

std::vector<GridUid> SpaceTree::subdivide(const GridUid& parent_uid) {
  GridHull& parent = at(parent_uid);
  if (parent.depth >= spec_.max_depth) throw StateError("grid " + to_string(parent_uid) + " is at max depth");
  if (grids_.size() + spec_.factor.count() > std::size_t{kMaxGid} + 1) {
    throw CapacityError("tree exceeds the 23-bit grid identifier space");
  }
  std::uint32_t next = static_cast<std::uint32_t>(grids_.size());
  auto kids = dtopo::subdivide(parent, spec_.factor, [&](std::uint32_t hash) { return GridUid{0, next++, hash}; });
  std::vector<GridUid> out;
  out.reserve(kids.size());
  for (auto& k : kids) {
    out.push_back(k.uid);
    index_.emplace(encode_uid(k.uid), grids_.size());
    grids_.push_back(std::move(k));
  }
  return out;
}

void SpaceTree::link_neighbors() {
  std::unordered_map<LatticeKey, std::size_t, LatticeKeyHash> lattice;
  lattice.reserve(grids_.size());
  for (std::size_t i = 0; i < grids_.size(); ++i) lattice.emplace(LatticeKey{grids_[i].depth, grids_[i].pos}, i);
  for (auto& g : grids_) {
    for (int d = 0; d < kFaces; ++d) {
      const Coord3 s = step(face(d));
      const LatticeKey k{g.depth, {g.pos.x + s.x, g.pos.y + s.y, g.pos.z + s.z}};
      auto it = lattice.find(k);
      g.neighbors[static_cast<std::size_t>(d)] =
          it == lattice.end() ? std::nullopt : std::optional<GridUid>(grids_[it->second].uid);
    }
  }
}

SpaceTree build_uniform(const DomainSpec& spec, int depth) {
  if (depth < 0 || depth > spec.max_depth) throw ConfigError("uniform depth outside 0..max_depth");
  SpaceTree tree(spec);
  std::vector<GridUid> level{tree.root().uid};
  for (int d = 0; d < depth; ++d) {
    std::vector<GridUid> next;
    next.reserve(level.size() * spec.factor.count());
    for (const auto& uid : level) {
      auto kids = tree.subdivide(uid);
      next.insert(next.end(), kids.begin(), kids.end());
    }
    level = std::move(next);
  }
  tree.link_neighbors();
  return tree;
}

std::uint64_t uniform_grid_count(const RefinementFactor& factor, int depth) {
  std::uint64_t total = 0;
  std::uint64_t level = 1;
  for (int d = 0; d <= depth; ++d) {
    total += level;
    level *= factor.count();
  }
  return total;
}

std::vector<GridUid> linearize(const SpaceTree& tree, Linearization scheme) {
  std::vector<GridUid> order;
  order.reserve(tree.size());
  if (scheme == Linearization::DepthFirst) {
    std::vector<GridUid> stack{tree.root().uid};
    while (!stack.empty()) {
      const GridUid uid = stack.back();
      stack.pop_back();
      order.push_back(uid);
      const auto& kids = tree.at(uid).children;
      for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
        if (*it) stack.push_back(**it);
      }
    }
    return order;
  }

  // Morton: lexicographic order of per-level interleaved digits, so an
  // ancestor (a prefix) sorts before its descendants.
  const auto& f = tree.spec().factor;
  std::vector<std::pair<std::vector<std::uint32_t>, GridUid>> keyed;
  keyed.reserve(tree.size());
  for (const auto& g : tree.grids()) {
    std::vector<std::uint32_t> path(static_cast<std::size_t>(g.depth));
    Coord3 c = g.pos;
    for (int l = g.depth - 1; l >= 0; --l) {
      Position p{static_cast<std::uint32_t>(c.x % f.x), static_cast<std::uint32_t>(c.y % f.y),
                 static_cast<std::uint32_t>(c.z % f.z)};
      path[static_cast<std::size_t>(l)] = interleave3(p);
      c = {c.x / f.x, c.y / f.y, c.z / f.z};
    }
    keyed.emplace_back(std::move(path), g.uid);
  }
  std::sort(keyed.begin(), keyed.end());
  for (auto& [path, uid] : keyed) order.push_back(uid);
  return order;
}

std::vector<Slice> partition(std::size_t count, std::size_t ranks) {
  if (ranks == 0) throw ConfigError("rank count must be positive");
  if (count < ranks) {
    throw ConfigError("every participating rank must obtain at least one grid: " + std::to_string(count) +
                      " grids for " + std::to_string(ranks) + " ranks");
  }
  std::vector<Slice> out(ranks);
  const std::size_t base = count / ranks;
  const std::size_t extra = count % ranks;
  std::size_t at = 0;
  for (std::size_t r = 0; r < ranks; ++r) {
    const std::size_t n = base + (r < extra ? 1 : 0);
    out[r] = {at, at + n};
    at += n;
  }
  return out;
}

std::map<GridUid, NeighborSlots> neighbor_oracle(std::span<const GridHull> grids) {
  std::map<GridUid, NeighborSlots> out;
  std::map<int, std::vector<const GridHull*>> by_depth;
  for (const auto& g : grids) {
    out.emplace(g.uid, NeighborSlots{});
    by_depth[g.depth].push_back(&g);
  }
  for (const auto& [depth, level] : by_depth) {
    for (std::size_t a = 0; a < level.size(); ++a) {
      for (std::size_t b = a + 1; b < level.size(); ++b) {
        const GridHull& ga = *level[a];
        const GridHull& gb = *level[b];
        const std::int64_t dx = gb.pos.x - ga.pos.x;
        const std::int64_t dy = gb.pos.y - ga.pos.y;
        const std::int64_t dz = gb.pos.z - ga.pos.z;
        const std::int64_t manhattan = (dx < 0 ? -dx : dx) + (dy < 0 ? -dy : dy) + (dz < 0 ? -dz : dz);
        if (manhattan != 1) continue;
        Direction dir = dx == 1 ? Direction::East : dx == -1 ? Direction::West
                      : dy == 1 ? Direction::North : dy == -1 ? Direction::South
                      : dz == 1 ? Direction::Top : Direction::Bottom;
        out[ga.uid][static_cast<std::size_t>(index_of(dir))] = gb.uid;
        out[gb.uid][static_cast<std::size_t>(index_of(opposite(dir)))] = ga.uid;
      }
    }
  }
  return out;
}

std::map<GridUid, NeighborSlots> neighbor_oracle(const SpaceTree& tree) { return neighbor_oracle(tree.grids()); }

}  // namespace dtopo
