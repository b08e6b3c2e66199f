#include "dtopo/codec.hpp"

#include "dtopo/errors.hpp"

#include <string>

namespace dtopo {

namespace {

constexpr unsigned kHashShift = 0;
constexpr unsigned kGidShift = kHashBits;
constexpr unsigned kRankShift = kHashBits + kGidBits;
constexpr unsigned kDirectionShift = kHashBits + kGidBits;
constexpr unsigned kTaskShift = kDirectionShift + kDirectionBits;
constexpr unsigned kUsedQueryBits = kTaskShift + kTaskBits;

static_assert(kRankBits + kGidBits + kHashBits == 64);
static_assert(kQueryUnusedBits + kTaskBits + kDirectionBits + kGidBits + kHashBits == 64);

void check_gid_hash(std::uint32_t gid, std::uint32_t hash) {
  if (gid > kMaxGid) throw RangeError("gid " + std::to_string(gid) + " exceeds 23 bits");
  if (hash > kMaxHash) throw RangeError("hash " + std::to_string(hash) + " exceeds 9 bits");
}

// Returns an empty string when the fields satisfy the per-task rules.
std::string query_violation(const Query& q) {
  const auto dir = static_cast<unsigned>(q.direction);
  const auto task = static_cast<unsigned>(q.task);
  if (task > 2) return "unknown task code " + std::to_string(task);
  if (dir > 7) return "direction code " + std::to_string(dir) + " exceeds 3 bits";
  if (q.gid > kMaxGid) return "gid exceeds 23 bits";
  if (q.hash > kMaxHash) return "hash exceeds 9 bits";
  switch (q.task) {
    case Task::Refine:
      if (dir > 5) return "refine query with non-face direction";
      if (q.hash != 0) return "refine query with nonzero hash";
      break;
    case Task::Delete:
      if (dir > 6) return "delete query with supergrid direction";
      if (dir != 6 && q.hash != 0) return "delete query with hash on a face direction";
      break;
    case Task::Migrate:
      if (dir != 6 && q.hash != 0) return "migrate query with hash on a non-subgrid direction";
      break;
  }
  return {};
}

}  // namespace

std::uint64_t encode_uid(Rank rank, std::uint32_t gid, std::uint32_t hash) {
  check_gid_hash(gid, hash);
  return (std::uint64_t{rank} << kRankShift) | (std::uint64_t{gid} << kGidShift) |
         (std::uint64_t{hash} << kHashShift);
}

std::uint64_t encode_uid(const GridUid& uid) { return encode_uid(uid.rank, uid.gid, uid.hash); }

GridUid decode_uid(std::uint64_t packed) {
  GridUid uid;
  uid.rank = static_cast<Rank>(packed >> kRankShift);
  uid.gid = static_cast<std::uint32_t>((packed >> kGidShift) & kMaxGid);
  uid.hash = static_cast<std::uint32_t>((packed >> kHashShift) & kMaxHash);
  return uid;
}

std::uint32_t encode_position_hash(std::uint32_t p_i, std::uint32_t p_j, std::uint32_t p_k) {
  if (p_i > 7 || p_j > 7 || p_k > 7) throw RangeError("position coordinate exceeds 3 bits");
  return (p_k << 6) | (p_j << 3) | p_i;
}

std::uint32_t encode_position_hash(const Position& p) { return encode_position_hash(p.i, p.j, p.k); }

Position decode_position_hash(std::uint32_t hash) {
  if (hash > kMaxHash) throw RangeError("hash exceeds 9 bits");
  return {hash & 7u, (hash >> 3) & 7u, (hash >> 6) & 7u};
}

std::uint64_t encode_query(const Query& q) {
  if (auto why = query_violation(q); !why.empty()) throw RangeError("invalid query: " + why);
  return (std::uint64_t{static_cast<unsigned>(q.task)} << kTaskShift) |
         (std::uint64_t{static_cast<unsigned>(q.direction)} << kDirectionShift) |
         (std::uint64_t{q.gid} << kGidShift) | (std::uint64_t{q.hash} << kHashShift);
}

std::uint64_t encode_query(Task task, Direction direction, std::uint32_t gid, std::uint32_t hash) {
  return encode_query(Query{task, direction, gid, hash});
}

Query decode_query(std::uint64_t packed) {
  if ((packed >> kUsedQueryBits) != 0) throw MalformedQueryError("query has nonzero unused bits");
  Query q;
  q.task = static_cast<Task>((packed >> kTaskShift) & 0x3u);
  q.direction = static_cast<Direction>((packed >> kDirectionShift) & 0x7u);
  q.gid = static_cast<std::uint32_t>((packed >> kGidShift) & kMaxGid);
  q.hash = static_cast<std::uint32_t>((packed >> kHashShift) & kMaxHash);
  if (auto why = query_violation(q); !why.empty()) throw MalformedQueryError("malformed query: " + why);
  return q;
}

const char* to_string(Direction d) {
  switch (d) {
    case Direction::East: return "east";
    case Direction::West: return "west";
    case Direction::North: return "north";
    case Direction::South: return "south";
    case Direction::Top: return "top";
    case Direction::Bottom: return "bottom";
    case Direction::Subgrid: return "subgrid";
    case Direction::Supergrid: return "supergrid";
  }
  return "?";
}

const char* to_string(Task t) {
  switch (t) {
    case Task::Refine: return "refine";
    case Task::Delete: return "delete";
    case Task::Migrate: return "migrate";
  }
  return "?";
}

std::string to_string(const GridUid& uid) {
  return std::to_string(uid.rank) + ":" + std::to_string(uid.gid) + ":" + std::to_string(uid.hash);
}

}  // namespace dtopo
