#pragma once

// Bit layouts of grid identifiers and protocol queries.
//
//   UID    rank(63..32) | gid(31..9) | hash(8..0)
//   query  zero(63..37) | task(36..35) | direction(34..32) | gid(31..9) | hash(8..0)
//   hash   p_k(8..6) | p_j(5..3) | p_i(2..0)

#include <compare>
#include <cstdint>
#include <string>

namespace dtopo {

using Rank = std::uint32_t;

inline constexpr unsigned kGidBits = 23;
inline constexpr unsigned kHashBits = 9;
inline constexpr unsigned kRankBits = 32;
inline constexpr unsigned kTaskBits = 2;
inline constexpr unsigned kDirectionBits = 3;
inline constexpr unsigned kQueryUnusedBits = 27;

inline constexpr std::uint32_t kMaxGid = (1u << kGidBits) - 1;
inline constexpr std::uint32_t kMaxHash = (1u << kHashBits) - 1;

struct GridUid {
  Rank rank = 0;
  std::uint32_t gid = 0;
  std::uint32_t hash = 0;

  friend auto operator<=>(const GridUid&, const GridUid&) = default;

  // gid and hash together, the low 32 bits of the packed word.
  std::uint32_t tag() const { return (gid << kHashBits) | hash; }
};

std::uint64_t encode_uid(Rank rank, std::uint32_t gid, std::uint32_t hash);
std::uint64_t encode_uid(const GridUid& uid);
GridUid decode_uid(std::uint64_t packed);

struct Position {
  std::uint32_t i = 0;
  std::uint32_t j = 0;
  std::uint32_t k = 0;
  friend bool operator==(const Position&, const Position&) = default;
};

std::uint32_t encode_position_hash(std::uint32_t p_i, std::uint32_t p_j, std::uint32_t p_k);
std::uint32_t encode_position_hash(const Position& p);
Position decode_position_hash(std::uint32_t hash);

enum class Task : std::uint8_t { Refine = 0, Delete = 1, Migrate = 2 };

// Six same-depth faces followed by the two hierarchical relations.
enum class Direction : std::uint8_t {
  East = 0,
  West = 1,
  North = 2,
  South = 3,
  Top = 4,
  Bottom = 5,
  Subgrid = 6,
  Supergrid = 7,
};

inline constexpr int kFaces = 6;

constexpr bool is_face(Direction d) { return static_cast<int>(d) < kFaces; }
constexpr Direction face(int index) { return static_cast<Direction>(index); }
constexpr int index_of(Direction d) { return static_cast<int>(d); }
// east<->west, north<->south, top<->bottom
constexpr Direction opposite(Direction d) { return static_cast<Direction>(static_cast<int>(d) ^ 1); }
// 0 = x, 1 = y, 2 = z
constexpr int axis_of(Direction d) { return static_cast<int>(d) / 2; }
constexpr bool is_positive(Direction d) { return (static_cast<int>(d) & 1) == 0; }

const char* to_string(Direction d);
const char* to_string(Task t);

struct Query {
  Task task = Task::Refine;
  Direction direction = Direction::East;
  std::uint32_t gid = 0;
  std::uint32_t hash = 0;
  friend bool operator==(const Query&, const Query&) = default;
};

// Validates the per-task field constraints before packing.
std::uint64_t encode_query(const Query& q);
std::uint64_t encode_query(Task task, Direction direction, std::uint32_t gid, std::uint32_t hash);
Query decode_query(std::uint64_t packed);

std::string to_string(const GridUid& uid);

}  // namespace dtopo
