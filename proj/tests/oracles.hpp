#pragma once

// Reference arithmetic kept apart from the library: multiplication and
// division by powers of two instead of shifts and masks.

#include "dtopo/codec.hpp"

#include <cstdint>
#include <random>

namespace dtopo::test {

inline constexpr std::uint64_t kP9 = 512;
inline constexpr std::uint64_t kP32 = 4294967296ull;
inline constexpr std::uint64_t kP35 = 8 * kP32;

inline std::uint64_t uid_oracle(std::uint64_t rank, std::uint64_t gid, std::uint64_t hash) {
  return rank * kP32 + gid * kP9 + hash;
}

inline GridUid uid_unoracle(std::uint64_t w) {
  return {static_cast<Rank>(w / kP32), static_cast<std::uint32_t>((w % kP32) / kP9),
          static_cast<std::uint32_t>(w % kP9)};
}

inline std::uint64_t query_oracle(std::uint64_t task, std::uint64_t dir, std::uint64_t gid, std::uint64_t hash) {
  return task * kP35 + dir * kP32 + gid * kP9 + hash;
}

inline std::uint64_t closed_form_grids(int depth) {
  std::uint64_t p = 1;
  for (int i = 0; i <= depth; ++i) p *= 8;
  return (p - 1) / 7;
}

inline Query random_query(std::mt19937_64& rng) {
  Query q;
  q.task = static_cast<Task>(rng() % 3);
  const unsigned max_dir = q.task == Task::Refine ? 5 : q.task == Task::Delete ? 6 : 7;
  q.direction = static_cast<Direction>(rng() % (max_dir + 1));
  q.gid = static_cast<std::uint32_t>(rng() % (kMaxGid + 1ull));
  q.hash = q.direction == Direction::Subgrid ? static_cast<std::uint32_t>(rng() % 512) : 0;
  return q;
}

inline GridUid random_uid(std::mt19937_64& rng) {
  return {static_cast<Rank>(rng()), static_cast<std::uint32_t>(rng() % (kMaxGid + 1ull)),
          static_cast<std::uint32_t>(rng() % 512)};
}

}  // namespace dtopo::test
