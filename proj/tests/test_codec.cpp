#include "doctest.h"
#include "oracles.hpp"

#include "dtopo/codec.hpp"
#include "dtopo/errors.hpp"

using namespace dtopo;
using namespace dtopo::test;

TEST_SUITE("codec") {

TEST_CASE("uid fixed vectors") {
  CHECK(encode_uid(0, 0, 0) == 0);
  CHECK(encode_uid(1, 0, 0) == 4294967296ull);
  CHECK(encode_uid(0, 1, 0) == 512);
  CHECK(encode_uid(1, 0, 0) == uid_oracle(1, 0, 0));
  CHECK(decode_uid(0) == GridUid{0, 0, 0});
  CHECK(decode_uid(4294967296ull) == GridUid{1, 0, 0});
  CHECK(decode_uid(513) == GridUid{0, 1, 1});
  CHECK(encode_uid(0xFFFFFFFFu, kMaxGid, kMaxHash) == ~0ull);
}

TEST_CASE("uid range errors") {
  CHECK_THROWS_AS(encode_uid(0, kMaxGid + 1, 0), RangeError);
  CHECK_THROWS_AS(encode_uid(0, 0, 512), RangeError);
}

TEST_CASE("uid roundtrip against oracle") {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 20000; ++n) {
    const GridUid u = random_uid(rng);
    const auto w = encode_uid(u);
    REQUIRE(w == uid_oracle(u.rank, u.gid, u.hash));
    REQUIRE(decode_uid(w) == u);
    REQUIRE(uid_unoracle(w) == u);
    REQUIRE(u.tag() == w % kP32);
  }
}

TEST_CASE("uid fields occupy disjoint bit ranges") {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 2000; ++n) {
    const GridUid u = random_uid(rng);
    const auto base = encode_uid(u);
    GridUid r = u, g = u, h = u;
    r.rank ^= 1u << (rng() % 32);
    g.gid ^= 1u << (rng() % 23);
    h.hash ^= 1u << (rng() % 9);
    CHECK(((base ^ encode_uid(r)) & ~0xFFFFFFFF00000000ull) == 0);
    CHECK(((base ^ encode_uid(g)) & ~0x00000000FFFFFE00ull) == 0);
    CHECK(((base ^ encode_uid(h)) & ~0x00000000000001FFull) == 0);
  }
}

TEST_CASE("position hash") {
  CHECK(encode_position_hash(0, 0, 0) == 0);
  CHECK(encode_position_hash(1, 0, 1) == 65);
  CHECK(encode_position_hash(7, 7, 7) == 511);
  CHECK_THROWS_AS(encode_position_hash(8, 0, 0), RangeError);
  for (std::uint32_t h = 0; h < 512; ++h) {
    const Position p = decode_position_hash(h);
    CHECK(p.k * 64 + p.j * 8 + p.i == h);
    CHECK(encode_position_hash(p) == h);
  }
}

TEST_CASE("query fixed vectors") {
  CHECK(encode_query(Task::Refine, Direction::East, 0, 0) == 0);
  CHECK(encode_query(Task::Delete, Direction::Subgrid, 3, 65) == 60129543745ull);
  CHECK(encode_query(Task::Delete, Direction::Subgrid, 3, 65) == query_oracle(1, 6, 3, 65));
  CHECK(encode_query(Task::Migrate, Direction::Subgrid, kMaxGid, 511) == 98784247807ull);
  const Query q = decode_query(60129543745ull);
  CHECK(q == Query{Task::Delete, Direction::Subgrid, 3, 65});
}

TEST_CASE("query per-task rules") {
  CHECK_THROWS_AS(encode_query(Task::Refine, Direction::Subgrid, 0, 0), RangeError);
  CHECK_THROWS_AS(encode_query(Task::Refine, Direction::East, 0, 1), RangeError);
  CHECK_THROWS_AS(encode_query(Task::Delete, Direction::Supergrid, 0, 0), RangeError);
  CHECK_THROWS_AS(encode_query(Task::Delete, Direction::North, 0, 5), RangeError);
  CHECK_NOTHROW(encode_query(Task::Migrate, Direction::Supergrid, 4, 0));
  CHECK_THROWS_AS(decode_query(1ull << 37), MalformedQueryError);
  CHECK_THROWS_AS(decode_query(query_oracle(3, 0, 0, 0)), MalformedQueryError);
  CHECK_THROWS_AS(decode_query(query_oracle(0, 6, 0, 0)), MalformedQueryError);
}

TEST_CASE("query roundtrip against oracle") {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 20000; ++n) {
    const Query q = random_query(rng);
    const auto w = encode_query(q);
    REQUIRE(w == query_oracle(static_cast<unsigned>(q.task), static_cast<unsigned>(q.direction), q.gid, q.hash));
    REQUIRE(w < (1ull << 37));
    REQUIRE(decode_query(w) == q);
  }
}

TEST_CASE("opposite directions") {
  CHECK(opposite(Direction::East) == Direction::West);
  CHECK(opposite(Direction::North) == Direction::South);
  CHECK(opposite(Direction::Top) == Direction::Bottom);
  CHECK(opposite(Direction::Subgrid) == Direction::Supergrid);
}

}
