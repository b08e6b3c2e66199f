#include "dtopo/transport.hpp"

#include <algorithm>
#include <iomanip>
#include <thread>

namespace dtopo {

const char* to_string(Channel c) {
  switch (c) {
    case Channel::QueryVector: return "QueryVector";
    case Channel::NeighbourVector: return "NeighbourVector";
    case Channel::MigrationGrids: return "MigrationGrids";
    case Channel::NewUids: return "NewUids";
    case Channel::UpdateQueries: return "UpdateQueries";
  }
  return "?";
}

Bytes pack_words(std::span<const std::uint64_t> words) {
  Bytes out(words.size() * 8);
  for (std::size_t i = 0; i < words.size(); ++i) {
    for (std::size_t b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<std::byte>((words[i] >> (8 * b)) & 0xFF);
  }
  return out;
}

std::vector<std::uint64_t> unpack_words(std::span<const std::byte> bytes) {
  if (bytes.size() % 8 != 0) throw FormatError("word payload length is not a multiple of 8");
  std::vector<std::uint64_t> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t w = 0;
    for (std::size_t b = 0; b < 8; ++b) w |= std::uint64_t{std::to_integer<std::uint8_t>(bytes[i * 8 + b])} << (8 * b);
    out[i] = w;
  }
  return out;
}

std::uint64_t TrafficStats::total_msgs_sent() const {
  std::uint64_t n = 0;
  for (const auto& r : ranks) n += r.msgs_sent;
  return n;
}

std::uint64_t TrafficStats::total_bytes_sent() const {
  std::uint64_t n = 0;
  for (const auto& r : ranks) n += r.bytes_sent;
  return n;
}

std::uint64_t TrafficStats::max_rank_msgs() const {
  std::uint64_t m = 0;
  for (const auto& r : ranks) m = std::max(m, r.msgs());
  return m;
}

double TrafficStats::max_modeled_time() const {
  double m = 0.0;
  for (const auto& r : ranks) m = std::max(m, r.modeled_time);
  return m;
}

TrafficStats& TrafficStats::operator+=(const TrafficStats& o) {
  if (ranks.size() < o.ranks.size()) ranks.resize(o.ranks.size());
  for (std::size_t i = 0; i < o.ranks.size(); ++i) {
    ranks[i].msgs_sent += o.ranks[i].msgs_sent;
    ranks[i].msgs_recv += o.ranks[i].msgs_recv;
    ranks[i].bytes_sent += o.ranks[i].bytes_sent;
    ranks[i].bytes_recv += o.ranks[i].bytes_recv;
    ranks[i].modeled_time += o.ranks[i].modeled_time;
  }
  for (std::size_t c = 0; c < kChannels; ++c) {
    sent_by_channel[c] += o.sent_by_channel[c];
    recv_by_channel[c] += o.recv_by_channel[c];
  }
  for (const auto& [k, v] : o.per_link) per_link[k] += v;
  return *this;
}

void write_stats_csv(std::ostream& os, std::span<const TrafficStats> cycles, double alpha, double beta) {
  os << "# modeled_time is synthetic: alpha + beta*bytes per message, alpha=" << alpha << " beta=" << beta << '\n';
  os << kStatsCsvHeader << '\n';
  for (const auto& c : cycles) {
    for (std::size_t r = 0; r < c.ranks.size(); ++r) {
      const auto& t = c.ranks[r];
      os << c.cycle << ',' << r << ',' << t.msgs_sent << ',' << t.msgs_recv << ',' << t.bytes_sent << ','
         << t.bytes_recv << ',' << std::setprecision(9) << t.modeled_time << '\n';
    }
  }
}

Op Op::send(Rank peer, Channel ch, std::function<Bytes()> produce) {
  Op op;
  op.kind = Kind::Send;
  op.peer = peer;
  op.channel = ch;
  op.produce = std::move(produce);
  return op;
}

Op Op::recv(Rank peer, Channel ch, std::function<void(Bytes&&)> consume) {
  Op op;
  op.kind = Kind::Recv;
  op.peer = peer;
  op.channel = ch;
  op.consume = std::move(consume);
  return op;
}

Op Op::local(std::function<void()> run) {
  Op op;
  op.kind = Kind::Local;
  op.run = std::move(run);
  return op;
}

Transport::Transport(std::size_t ranks, TransportConfig config)
    : ranks_(ranks), config_(config), states_(ranks) {
  current_.ranks.resize(ranks);
}

void Transport::set_mode(TransportMode mode, std::size_t buffer_budget) {
  std::lock_guard lock(mu_);
  if (in_flight_) throw StateError("cannot switch transport mode while a cycle is in flight");
  config_.mode = mode;
  config_.buffer_budget = buffer_budget;
}

void Transport::set_executor(Executor e) {
  std::lock_guard lock(mu_);
  if (in_flight_) throw StateError("cannot switch executor while a cycle is in flight");
  config_.executor = e;
}

void Transport::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

std::shared_ptr<Transport::Message> Transport::post(Rank src, Rank dst, Channel ch, Bytes payload) {
  if (src == dst) throw ContractError("a rank cannot send to itself");
  if (src >= ranks_ || dst >= ranks_) throw ContractError("message names a rank outside the simulation");
  if ((ch == Channel::QueryVector || ch == Channel::NeighbourVector || ch == Channel::NewUids ||
       ch == Channel::UpdateQueries) &&
      payload.size() % 8 != 0) {
    throw FormatError("word channel payload length is not a multiple of 8");
  }
  const std::size_t size = payload.size();
  auto& s = states_[src];
  if (buffered()) {
    if (s.buffered + size > config_.buffer_budget) {
      throw BufferOverflowError("rank " + std::to_string(src) + " buffer budget of " +
                                std::to_string(config_.buffer_budget) + " bytes exceeded by a " +
                                std::to_string(size) + "-byte message to rank " + std::to_string(dst));
    }
    s.buffered += size;
  }
  auto m = std::make_shared<Message>();
  m->env = Envelope{src, dst, ch, std::move(payload)};
  m->stamp = s.clock;
  if (buffered()) s.clock += config_.alpha;
  queues_[Key{src, dst, ch}].push_back(m);

  auto& t = current_.ranks[src];
  ++t.msgs_sent;
  t.bytes_sent += size;
  ++current_.sent_by_channel[static_cast<std::size_t>(ch)];
  ++current_.per_link[Key{src, dst, ch}];
  return m;
}

std::shared_ptr<Transport::Message> Transport::take(Rank dst, Rank src, Channel ch) {
  auto it = queues_.find(Key{src, dst, ch});
  if (it == queues_.end() || it->second.empty()) return nullptr;
  auto m = it->second.front();
  it->second.pop_front();
  const std::size_t size = m->env.payload.size();
  const double cost = config_.alpha + config_.beta * static_cast<double>(size);
  auto& rs = states_[dst];
  if (buffered()) {
    states_[src].buffered -= size;
    rs.clock = std::max(rs.clock, m->stamp + cost);
  } else {
    rs.clock = std::max(rs.clock, m->stamp) + cost;
  }
  m->done_clock = rs.clock;
  m->consumed = true;

  auto& t = current_.ranks[dst];
  ++t.msgs_recv;
  t.bytes_recv += size;
  ++current_.recv_by_channel[static_cast<std::size_t>(ch)];
  return m;
}

void Transport::finish_send(Rank src, const Message& m) {
  if (!buffered()) states_[src].clock = std::max(states_[src].clock, m.done_clock);
}

void Transport::raise_deadlock(const std::vector<Rank>& blocked) {
  // Follow wait-for edges from each blocked rank until a rank repeats.
  for (Rank start : blocked) {
    std::vector<Rank> path;
    std::vector<int> seen(ranks_, -1);
    Rank r = start;
    while (states_[r].state == State::Blocked && seen[r] < 0) {
      seen[r] = static_cast<int>(path.size());
      path.push_back(r);
      r = states_[r].waiting_on;
    }
    if (states_[r].state == State::Blocked) {
      std::vector<Rank> cycle(path.begin() + seen[r], path.end());
      std::string what = "deadlock: wait-for cycle";
      for (Rank c : cycle) what += " " + std::to_string(c) + " ->";
      what += " " + std::to_string(cycle.front());
      throw DeadlockError(what, cycle);
    }
  }
  const Rank r = blocked.front();
  throw ShutdownError("rank " + std::to_string(r) + " waits on rank " + std::to_string(states_[r].waiting_on) +
                      " which has finished its program");
}

void Transport::check_deadlock_locked() {
  std::vector<Rank> blocked;
  for (std::size_t r = 0; r < ranks_; ++r) {
    if (states_[r].state == State::Running) return;
    if (states_[r].state == State::Blocked) blocked.push_back(static_cast<Rank>(r));
  }
  if (blocked.empty() || failure_) return;
  try {
    raise_deadlock(blocked);
  } catch (...) {
    failure_ = std::current_exception();
  }
  cv_.notify_all();
}

void Transport::finish(Rank r) {
  std::lock_guard lock(mu_);
  states_[r].state = State::Done;
  check_deadlock_locked();
  cv_.notify_all();
}

void Transport::send(Rank src, Rank dst, Envelope env) {
  std::unique_lock lock(mu_);
  if (closed_) throw ShutdownError("send on closed transport");
  if (failure_) std::rethrow_exception(failure_);
  auto m = post(src, dst, env.channel, std::move(env.payload));
  if (states_[dst].state == State::Blocked && states_[dst].waiting_on == src) states_[dst].state = State::Running;
  cv_.notify_all();
  if (buffered()) return;
  while (!m->consumed) {
    if (failure_) std::rethrow_exception(failure_);
    if (closed_) throw ShutdownError("transport closed while rank " + std::to_string(src) + " was sending");
    states_[src].state = State::Blocked;
    states_[src].waiting_on = dst;
    check_deadlock_locked();
    if (failure_) std::rethrow_exception(failure_);
    cv_.wait(lock);
  }
  states_[src].state = State::Running;
  finish_send(src, *m);
}

Envelope Transport::recv(Rank dst, Rank src, Channel tag) {
  std::unique_lock lock(mu_);
  for (;;) {
    if (failure_) std::rethrow_exception(failure_);
    if (auto m = take(dst, src, tag)) {
      states_[dst].state = State::Running;
      if (states_[src].state == State::Blocked && states_[src].waiting_on == dst) states_[src].state = State::Running;
      cv_.notify_all();
      return m->env;
    }
    if (closed_) throw ShutdownError("recv on closed transport");
    states_[dst].state = State::Blocked;
    states_[dst].waiting_on = src;
    check_deadlock_locked();
    if (failure_) std::rethrow_exception(failure_);
    cv_.wait(lock);
  }
}

void Transport::begin_cycle(std::string label) {
  std::lock_guard lock(mu_);
  if (in_flight_) throw StateError("a cycle is already in flight");
  if (closed_) throw ShutdownError("run_cycle on closed transport");
  in_flight_ = true;
  failure_ = nullptr;
  queues_.clear();
  states_.assign(ranks_, RankState{});
  current_ = TrafficStats{};
  current_.cycle = static_cast<int>(history_.size());
  current_.label = std::move(label);
  current_.ranks.assign(ranks_, RankTraffic{});
}

TrafficStats Transport::end_cycle() {
  std::lock_guard lock(mu_);
  in_flight_ = false;
  for (std::size_t r = 0; r < ranks_; ++r) current_.ranks[r].modeled_time = states_[r].clock;
  for (const auto& [key, q] : queues_) {
    if (!q.empty()) {
      throw StateError("cycle ended with " + std::to_string(q.size()) + " undelivered message(s) from rank " +
                       std::to_string(std::get<0>(key)) + " to rank " + std::to_string(std::get<1>(key)));
    }
  }
  history_.push_back(current_);
  return current_;
}

TrafficStats Transport::run_cycle(std::vector<Program> programs, std::string label) {
  if (programs.size() != ranks_) throw ContractError("run_cycle needs exactly one program per rank");
  begin_cycle(std::move(label));
  try {
    if (config_.executor == Executor::Threaded) {
      run_threaded(programs);
    } else {
      run_round_based(programs);
    }
  } catch (...) {
    std::lock_guard lock(mu_);
    in_flight_ = false;
    throw;
  }
  return end_cycle();
}

TrafficStats Transport::run_round_based(std::vector<Program>& programs) {
  std::vector<std::size_t> pc(ranks_, 0);
  std::vector<std::shared_ptr<Message>> posted(ranks_);
  for (;;) {
    bool progress = false;
    bool done = true;
    for (std::size_t r = 0; r < ranks_; ++r) {
      auto& prog = programs[r];
      auto& st = states_[r];
      while (pc[r] < prog.size()) {
        Op& op = prog[pc[r]];
        if (op.kind == Op::Kind::Local) {
          if (op.run) op.run();
        } else if (op.kind == Op::Kind::Send) {
          if (!posted[r]) {
            posted[r] = post(static_cast<Rank>(r), op.peer, op.channel, op.produce ? op.produce() : Bytes{});
            progress = true;
          }
          if (!buffered() && !posted[r]->consumed) {
            st.state = State::Blocked;
            st.waiting_on = op.peer;
            break;
          }
          finish_send(static_cast<Rank>(r), *posted[r]);
          posted[r].reset();
        } else {
          auto m = take(static_cast<Rank>(r), op.peer, op.channel);
          if (!m) {
            st.state = State::Blocked;
            st.waiting_on = op.peer;
            break;
          }
          if (op.consume) op.consume(std::move(m->env.payload));
        }
        st.state = State::Running;
        ++pc[r];
        progress = true;
      }
      if (pc[r] < prog.size()) {
        done = false;
      } else {
        st.state = State::Done;
      }
    }
    if (done) break;
    if (!progress) {
      std::vector<Rank> blocked;
      for (std::size_t r = 0; r < ranks_; ++r) {
        if (states_[r].state == State::Blocked) blocked.push_back(static_cast<Rank>(r));
      }
      raise_deadlock(blocked);
    }
  }
  return current_;
}

TrafficStats Transport::run_threaded(std::vector<Program>& programs) {
  std::vector<std::thread> threads;
  threads.reserve(ranks_);
  for (std::size_t r = 0; r < ranks_; ++r) {
    threads.emplace_back([this, r, &programs] {
      const auto self = static_cast<Rank>(r);
      try {
        for (Op& op : programs[r]) {
          if (op.kind == Op::Kind::Local) {
            if (op.run) op.run();
          } else if (op.kind == Op::Kind::Send) {
            send(self, op.peer, Envelope{self, op.peer, op.channel, op.produce ? op.produce() : Bytes{}});
          } else {
            Envelope env = recv(self, op.peer, op.channel);
            if (op.consume) op.consume(std::move(env.payload));
          }
        }
        finish(self);
      } catch (...) {
        std::lock_guard lock(mu_);
        if (!failure_) failure_ = std::current_exception();
        states_[r].state = State::Done;
        cv_.notify_all();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure_) std::rethrow_exception(failure_);
  return current_;
}

}  // namespace dtopo
