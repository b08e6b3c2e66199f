#include "doctest.h"
#include "support.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/schedule.hpp"

#include <algorithm>

using namespace dtopo;
using namespace dtopo::test;

namespace {

// Six ranks, every pair communicating.
const char* kStructured6 =
    "stage,0,1,2,3,4,5\n"
    "1,1,0,-,-,-,-\n"
    "2,2,-,0,-,-,-\n"
    "3,3,2,1,0,-,-\n"
    "4,4,3,-,1,0,-\n"
    "5,5,4,3,2,1,0\n"
    "6,-,5,4,-,2,1\n"
    "7,-,-,5,4,3,2\n"
    "8,-,-,-,5,-,3\n"
    "9,-,-,-,-,5,4\n";

const char* kJoined6 =
    "stage,0,1,2,3,4,5\n"
    "1&7,1,0,5,4,3,2\n"
    "2&8,2,-,0,5,-,3\n"
    "3&9,3,2,1,0,5,4\n"
    "4,4,3,-,1,0,-\n"
    "5,5,4,3,2,1,0\n"
    "6,-,5,4,-,2,1\n";

std::vector<Rank> peers_in_order(const CommSchedule& s) {
  std::vector<Rank> out;
  for (const auto& st : s.steps) {
    if (st.peer) out.push_back(*st.peer);
  }
  return out;
}

std::size_t max_degree(const std::set<RankPair>& pairs, std::size_t ranks) {
  std::size_t d = 0;
  for (const auto& p : peers_from_pairs(pairs, ranks)) d = std::max(d, p.size());
  return d;
}

void check_table(const StageTable& t, const std::set<RankPair>& pairs) {
  std::set<RankPair> seen;
  for (const auto& row : t.rows) {
    for (Rank r = 0; r < t.ranks; ++r) {
      const auto& p = row.partner[r];
      if (!p) continue;
      REQUIRE(row.partner[*p] == r);
      if (r < *p) CHECK(seen.insert({r, *p}).second);
    }
  }
  CHECK(seen == pairs);
}

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("structured pattern steps") {
  const std::vector<Rank> peers{0, 1, 2, 4, 5};
  const auto s = build_pattern(3, peers);
  const std::vector<CommStep> want{
      {StepOp::Recv, 0, 0}, {StepOp::Send, 0, 0}, {StepOp::Recv, 1, 0}, {StepOp::Send, 1, 0},
      {StepOp::Recv, 2, 0}, {StepOp::Send, 2, 0}, {StepOp::LocalUpdate, std::nullopt, 0},
      {StepOp::Send, 4, 0}, {StepOp::Recv, 4, 0}, {StepOp::Send, 5, 0}, {StepOp::Recv, 5, 0}};
  CHECK(s.steps == want);
  CHECK(s.exchange_order() == std::vector<Rank>{0, 1, 2, 4, 5});

  const auto lone = build_pattern(0, {});
  REQUIRE(lone.steps.size() == 1);
  CHECK(lone.steps[0].op == StepOp::LocalUpdate);

  const std::vector<Rank> unsorted{2, 1};
  CHECK_THROWS_AS(build_pattern(0, unsorted), ContractError);
  const std::vector<Rank> with_self{0, 1};
  CHECK_THROWS_AS(build_pattern(1, with_self), ContractError);
}

TEST_CASE("six ranks all pairs: structured table") {
  const auto pairs = all_pairs(6);
  const auto sched = structured_schedules(pairs, 6);
  const auto t = stage_table(sched);
  CHECK(t.to_csv() == kStructured6);
  CHECK(peers_in_order(sched[0]) == std::vector<Rank>{1, 1, 2, 2, 3, 3, 4, 4, 5, 5});
  std::vector<std::size_t> idle;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (!t.rows[i].partner[3]) idle.push_back(i + 1);
  }
  CHECK(idle == std::vector<std::size_t>{1, 2, 6, 9});
}

TEST_CASE("six ranks all pairs: joined table") {
  const auto j = join_stages(all_pairs(6), 6);
  CHECK(j.table.to_csv() == kJoined6);
  REQUIRE(j.table.rows.size() == 6);
  CHECK(j.table.rows[0].labels == std::vector<int>{1, 7});
  CHECK(j.table.rows[1].labels == std::vector<int>{2, 8});
  CHECK(j.table.rows[2].labels == std::vector<int>{3, 9});
  const auto& first = j.table.rows[0].partner;
  CHECK(first[0] == Rank{1});
  CHECK(first[2] == Rank{5});
  CHECK(first[3] == Rank{4});
}

TEST_CASE("small joins") {
  CHECK(join_stages({{0, 1}}, 2).table.rows.size() == 1);
  const auto d = join_stages({{0, 1}, {2, 3}}, 4);
  REQUIRE(d.table.rows.size() == 1);
  CHECK(d.table.rows[0].partner[0] == Rank{1});
  CHECK(d.table.rows[0].partner[2] == Rank{3});
  CHECK(join_stages({}, 3).table.rows.empty());
}

TEST_CASE("random pair sets: completeness, validity and stage bound") {
  std::mt19937_64 rng(21);
  for (int n = 0; n < 200; ++n) {
    const std::size_t ranks = 2 + rng() % 15;
    const auto pairs = random_pairs(rng, ranks, 0.1 + 0.8 * static_cast<double>(rng() % 100) / 100.0);
    const auto sched = structured_schedules(pairs, ranks);
    const auto peers = peers_from_pairs(pairs, ranks);
    for (Rank r = 0; r < ranks; ++r) {
      std::size_t sends = 0, recvs = 0, locals = 0;
      for (const auto& st : sched[r].steps) {
        sends += st.op == StepOp::Send;
        recvs += st.op == StepOp::Recv;
        locals += st.op == StepOp::LocalUpdate;
      }
      CHECK(sends == peers[r].size());
      CHECK(recvs == peers[r].size());
      CHECK(locals == 1);
    }
    check_table(stage_table(sched), pairs);
    const auto j = join_stages(pairs, ranks);
    check_table(j.table, pairs);
    const auto delta = max_degree(pairs, ranks);
    if (delta > 0) CHECK(j.table.rows.size() <= 2 * delta - 1);
    CHECK(j.table.rows.size() <= stage_table(sched).rows.size());
    CHECK(stage_table(j.schedules).rows.size() <= j.table.rows.size());
  }
}

TEST_CASE("unpaired schedules cannot progress") {
  std::vector<CommSchedule> s(2);
  s[0].rank = 0;
  s[0].steps = {{StepOp::Send, 1, 0}, {StepOp::Recv, 1, 0}};
  s[1].rank = 1;
  CHECK_THROWS_AS(stage_table(s), ContractError);
}

}
