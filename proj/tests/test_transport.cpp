#include "doctest.h"
#include "support.hpp"

#include "dtopo/errors.hpp"
#include "dtopo/transport.hpp"

#include <sstream>

using namespace dtopo;
using namespace dtopo::test;

namespace {

Bytes word(std::uint64_t w) { return pack_words(std::vector<std::uint64_t>{w}); }

// Every rank sends to its right neighbour on a ring before receiving.
std::vector<Program> send_first_ring(std::size_t n) {
  std::vector<Program> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto next = static_cast<Rank>((r + 1) % n);
    const auto prev = static_cast<Rank>((r + n - 1) % n);
    out[r].push_back(Op::send(next, Channel::QueryVector, [] { return word(1); }));
    out[r].push_back(Op::recv(prev, Channel::QueryVector, [](Bytes&&) {}));
  }
  return out;
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("word framing") {
  const std::vector<std::uint64_t> w{0, 1, 0x0102030405060708ull};
  const auto b = pack_words(w);
  REQUIRE(b.size() == 24);
  CHECK(b[8] == std::byte{1});
  CHECK(b[16] == std::byte{8});
  CHECK(unpack_words(b) == w);
  CHECK_THROWS_AS(unpack_words(Bytes(7)), FormatError);
}

TEST_CASE("matched send and recv") {
  for (auto ex : {Executor::RoundBased, Executor::Threaded}) {
    TransportConfig cfg;
    cfg.executor = ex;
    Transport t(2, cfg);
    Bytes got;
    std::vector<Program> p(2);
    p[0].push_back(Op::send(1, Channel::QueryVector, [] { return word(0xABCDEFull); }));
    p[1].push_back(Op::recv(0, Channel::QueryVector, [&](Bytes&& b) { got = std::move(b); }));
    const auto st = t.run_cycle(std::move(p));
    CHECK(got == word(0xABCDEFull));
    CHECK(st.ranks[0].msgs_sent == 1);
    CHECK(st.ranks[0].bytes_sent == 8);
    CHECK(st.ranks[1].msgs_recv == 1);
    CHECK(st.ranks[1].bytes_recv == 8);
    CHECK(st.conserved());
  }
}

TEST_CASE("fifo per source, destination and channel") {
  for (auto mode : {TransportMode::Rendezvous, TransportMode::Buffered}) {
    Transport t(2, TransportConfig{mode, 1024});
    std::vector<std::uint64_t> order;
    std::vector<Program> p(2);
    for (std::uint64_t i = 0; i < 5; ++i) {
      p[0].push_back(Op::send(1, Channel::UpdateQueries, [i] { return word(i); }));
      p[1].push_back(Op::recv(0, Channel::UpdateQueries, [&](Bytes&& b) { order.push_back(unpack_words(b)[0]); }));
    }
    t.run_cycle(std::move(p));
    CHECK(order == std::vector<std::uint64_t>{0, 1, 2, 3, 4});
  }
}

TEST_CASE("deadlock detection names the cycle") {
  for (auto ex : {Executor::RoundBased, Executor::Threaded}) {
    TransportConfig cfg;
    cfg.executor = ex;
    Transport t(3, cfg);
    try {
      t.run_cycle(send_first_ring(3));
      FAIL("no deadlock raised");
    } catch (const DeadlockError& e) {
      auto c = e.cycle();
      std::sort(c.begin(), c.end());
      CHECK(c == std::vector<Rank>{0, 1, 2});
    }
  }
  Transport t(2);
  std::vector<Program> p(2);
  p[0].push_back(Op::send(1, Channel::QueryVector, [] { return word(1); }));
  CHECK_THROWS_AS(t.run_cycle(std::move(p)), ShutdownError);
}

TEST_CASE("buffered mode") {
  Transport ample(3, TransportConfig{TransportMode::Buffered, 64});
  const auto st = ample.run_cycle(send_first_ring(3));
  CHECK(st.total_msgs_sent() == 3);
  CHECK(st.conserved());

  Transport zero(3, TransportConfig{TransportMode::Buffered, 0});
  CHECK_THROWS_AS(zero.run_cycle(send_first_ring(3)), DeadlockError);

  Transport tight(2, TransportConfig{TransportMode::Buffered, 8});
  std::vector<Program> p(2);
  p[0].push_back(Op::send(1, Channel::QueryVector, [] { return pack_words(std::vector<std::uint64_t>{1, 2}); }));
  p[1].push_back(Op::recv(0, Channel::QueryVector, [](Bytes&&) {}));
  CHECK_THROWS_AS(tight.run_cycle(std::move(p)), BufferOverflowError);

  Transport sw(2);
  sw.set_mode(TransportMode::Buffered, 16);
  CHECK(sw.config().mode == TransportMode::Buffered);
  CHECK(sw.config().buffer_budget == 16);
}

TEST_CASE("structured schedules over six ranks") {
  const auto sched = structured_schedules(all_pairs(6), 6);
  for (auto ex : {Executor::RoundBased, Executor::Threaded}) {
    TransportConfig cfg;
    cfg.executor = ex;
    Transport t(6, cfg);
    const auto st = t.run_cycle(exchange_programs(sched));
    CHECK(st.conserved());
    for (Rank a = 0; a < 6; ++a) {
      for (Rank b = 0; b < 6; ++b) {
        if (a == b) continue;
        CHECK(st.per_link.at({a, b, Channel::QueryVector}) == 1);
        CHECK(st.per_link.at({a, b, Channel::NeighbourVector}) == 1);
      }
      CHECK(st.ranks[a].msgs() == 20);
    }
  }
}

TEST_CASE("single rank, no peers") {
  Transport t(1);
  const auto st = t.run_cycle(exchange_programs(structured_schedules({}, 1)));
  CHECK(st.total_msgs_sent() == 0);
  CHECK(st.ranks.at(0).msgs() == 0);
}

TEST_CASE("random pair sets under rendezvous terminate") {
  std::mt19937_64 rng(99);
  for (int n = 0; n < 100; ++n) {
    const std::size_t ranks = 2 + rng() % 15;
    const auto pairs = random_pairs(rng, ranks, 0.5);
    Transport t(ranks);
    const auto st = t.run_cycle(exchange_programs(structured_schedules(pairs, ranks)));
    CHECK(st.total_msgs_sent() == 4 * pairs.size());
    CHECK(st.conserved());
    Transport j(ranks);
    CHECK_NOTHROW(j.run_cycle(exchange_programs(join_stages(pairs, ranks).schedules)));
  }
}

TEST_CASE("round-based runs are deterministic") {
  std::mt19937_64 rng(4);
  const auto pairs = random_pairs(rng, 9, 0.6);
  auto run = [&] {
    Transport t(9);
    return t.run_cycle(exchange_programs(structured_schedules(pairs, 9)));
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.per_link == b.per_link);
  for (std::size_t r = 0; r < 9; ++r) {
    CHECK(a.ranks[r].msgs() == b.ranks[r].msgs());
    CHECK(a.ranks[r].modeled_time == b.ranks[r].modeled_time);
  }
}

TEST_CASE("stats csv") {
  Transport t(2);
  std::vector<Program> p(2);
  p[0].push_back(Op::send(1, Channel::QueryVector, [] { return word(1); }));
  p[1].push_back(Op::recv(0, Channel::QueryVector, [](Bytes&&) {}));
  const auto st = t.run_cycle(std::move(p), "x");
  std::ostringstream os;
  write_stats_csv(os, std::vector<TrafficStats>{st}, 1e-6, 1e-9);
  std::istringstream is(os.str());
  std::string comment, header, row0, row1;
  std::getline(is, comment);
  std::getline(is, header);
  std::getline(is, row0);
  std::getline(is, row1);
  CHECK(comment.rfind('#', 0) == 0);
  CHECK(header == kStatsCsvHeader);
  CHECK(row0.rfind("0,0,1,0,8,0,", 0) == 0);
  CHECK(row1.rfind("0,1,0,1,0,8,", 0) == 0);
}

TEST_CASE("contract errors") {
  Transport t(2);
  std::vector<Program> p(2);
  p[0].push_back(Op::send(0, Channel::QueryVector, [] { return word(1); }));
  CHECK_THROWS_AS(t.run_cycle(std::move(p)), ContractError);
  CHECK_THROWS_AS(t.run_cycle(std::vector<Program>(3)), ContractError);
  std::vector<Program> q(2);
  q[0].push_back(Op::send(1, Channel::QueryVector, [] { return Bytes(3); }));
  CHECK_THROWS_AS(t.run_cycle(std::move(q)), FormatError);
}

}
