#include "doctest.h"
#include "support.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/topology.hpp"

using namespace dtopo;
using namespace dtopo::test;

namespace {

GridHull hull_with_hash(std::uint32_t hash) {
  GridHull h;
  h.uid.hash = hash;
  return h;
}

}  // namespace

TEST_SUITE("topology") {

TEST_CASE("registration") {
  RankTopology t(3);
  const auto a = t.register_grid(hull_with_hash(17));
  const auto b = t.register_grid(hull_with_hash(5));
  CHECK(a == GridUid{3, 0, 17});
  CHECK(b == GridUid{3, 1, 5});
  CHECK(t.size() == 2);
  CHECK(t.owns(a));
  CHECK(!t.owns(GridUid{2, 0, 17}));
  t.remove(0);
  CHECK(!t.contains(0));
  CHECK(t.register_grid(hull_with_hash(0)).gid == 2);
  CHECK_THROWS_AS(t.remove(0), StateError);
}

TEST_CASE("gid capacity") {
  RankTopology t(0);
  GridHull last;
  last.uid = GridUid{0, kMaxGid, 0};
  t.adopt(last);
  CHECK(t.next_gid() == kMaxGid + 1);
  CHECK_THROWS_AS(t.register_grid(GridHull{}), CapacityError);
  CHECK_THROWS_AS(t.allocate_uid(0), CapacityError);
  GridHull foreign;
  foreign.uid = GridUid{1, 0, 0};
  CHECK_THROWS_AS(t.adopt(foreign), StateError);
}

TEST_CASE("query vectors") {
  RankTopology t(0);
  GridHull g;
  g.neighbor(Direction::East) = GridUid{2, 4, 0};
  t.register_grid(g);
  t.rebuild_remote_ranks();
  const Query q1{Task::Refine, Direction::West, 4, 0};
  const Query q2{Task::Delete, Direction::West, 4, 0};
  t.enqueue_query(2, q1, 0);
  t.enqueue_query(2, q2, 0);
  t.enqueue_query(0, q1, 0);
  REQUIRE(t.query_vector(2).size() == 2);
  CHECK(t.query_vector(2)[0].query == q1);
  CHECK(t.query_vector(2)[1].query == q2);
  CHECK(t.query_vector(0).size() == 1);
  CHECK_THROWS_AS(t.enqueue_query(1, q1, 0), LinkError);
  CHECK_THROWS_AS(t.enqueue_update(2, PendingQuery{q1, 0, {}}), ContractError);
  CHECK_THROWS_AS(t.enqueue_update(5, PendingQuery{q1, 0, GridUid{1, 1, 1}}), LinkError);
}

TEST_CASE("remote ranks from links") {
  RankTopology t(1);
  GridHull a, b;
  a.parent = GridUid{0, 0, 0};
  a.neighbor(Direction::North) = GridUid{4, 9, 0};
  b.children = {GridUid{3, 1, 0}, std::nullopt, GridUid{1, 0, 0}};
  t.register_grid(a);
  t.register_grid(b);
  CHECK(t.rebuild_remote_ranks() == std::vector<Rank>{0, 3, 4});
  CHECK(t.hierarchical_peers() == std::vector<Rank>{0, 3});
  t.grid(0).neighbor(Direction::North).reset();
  CHECK(t.rebuild_remote_ranks() == std::vector<Rank>{0, 3});
  CHECK(!t.is_peer(4));
}

TEST_CASE("distributed remote ranks match link owners") {
  for (std::size_t p : {1, 2, 3, 7}) {
    const auto dist = initial_distribute(DomainSpec{}, 2, p, Linearization::Morton);
    for (const auto& t : dist.ranks) {
      std::set<Rank> owners;
      for (const auto& [gid, g] : t.registry()) {
        for_each_link(g, [&](const GridUid& l) {
          if (l.rank != t.rank()) owners.insert(l.rank);
        });
      }
      CHECK(t.remote_ranks() == std::vector<Rank>(owners.begin(), owners.end()));
      if (p == 1) CHECK(t.remote_ranks().empty());
    }
  }
  const auto two = initial_distribute(DomainSpec{}, 1, 2, Linearization::Morton);
  CHECK(two.ranks[0].remote_ranks() == std::vector<Rank>{1});
  CHECK(two.ranks[1].remote_ranks() == std::vector<Rank>{0});
}

TEST_CASE("tombstones and marks") {
  RankTopology t(0);
  t.add_tombstone(4, GridUid{1, 7, 3});
  CHECK(t.forwarded(4) == GridUid{1, 7, 3});
  CHECK(!t.forwarded(5));
  t.clear_tombstones();
  CHECK(!t.forwarded(4));
  t.mark_refined(2);
  t.mark_deleted(3);
  CHECK(t.refined_this_round(2));
  CHECK(t.deleted_this_round(3));
  t.clear_marks();
  CHECK(!t.refined_this_round(2));
  CHECK(!t.deleted_this_round(3));
}

}
