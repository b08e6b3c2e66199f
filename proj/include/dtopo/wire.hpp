#pragma once

// Binary hull records exchanged when grids migrate. Everything is a stream
// of little-endian 64-bit words:
//
//   count
//   per hull:
//     uid  depth  x  y  z  flags  parent  neighbour[6]
//     child_slots  child_mask[ceil(child_slots/64)]  child[child_slots]
//     payload_bytes  payload (zero-padded to a word boundary)
//
// flags bit 0 marks a parent, bits 8..13 mark present neighbour slots.
// Absent references are written as zero and masked out.

#include "dtopo/spacetree.hpp"
#include "dtopo/transport.hpp"

#include <span>
#include <vector>

namespace dtopo {

Bytes serialize_hulls(std::span<const GridHull> hulls);
std::vector<GridHull> deserialize_hulls(std::span<const std::byte> bytes);

void append_hull(std::vector<std::uint64_t>& words, const GridHull& hull);
// Reads one hull starting at words[at] and advances at.
GridHull read_hull(std::span<const std::uint64_t> words, std::size_t& at);

}  // namespace dtopo
