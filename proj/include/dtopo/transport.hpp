#pragma once

#include "dtopo/codec.hpp"
#include "dtopo/errors.hpp"

#include <array>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace dtopo {

enum class Channel : std::uint8_t { QueryVector, NeighbourVector, MigrationGrids, NewUids, UpdateQueries };
inline constexpr std::size_t kChannels = 5;
const char* to_string(Channel c);

using Bytes = std::vector<std::byte>;

struct Envelope {
  Rank src = 0;
  Rank dst = 0;
  Channel channel = Channel::QueryVector;
  Bytes payload;
};

// Little-endian 64-bit word framing used by every word channel.
Bytes pack_words(std::span<const std::uint64_t> words);
std::vector<std::uint64_t> unpack_words(std::span<const std::byte> bytes);

struct RankTraffic {
  std::uint64_t msgs_sent = 0;
  std::uint64_t msgs_recv = 0;
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_recv = 0;
  // Synthetic: alpha + beta * bytes per message along each rank's clock.
  double modeled_time = 0.0;

  std::uint64_t msgs() const { return msgs_sent + msgs_recv; }
};

struct TrafficStats {
  int cycle = 0;
  std::string label;
  std::vector<RankTraffic> ranks;
  std::array<std::uint64_t, kChannels> sent_by_channel{};
  std::array<std::uint64_t, kChannels> recv_by_channel{};
  // Messages per (src, dst, channel).
  std::map<std::tuple<Rank, Rank, Channel>, std::uint64_t> per_link;

  bool conserved() const { return sent_by_channel == recv_by_channel; }
  std::uint64_t total_msgs_sent() const;
  std::uint64_t total_bytes_sent() const;
  // Largest sent+received message count of any rank.
  std::uint64_t max_rank_msgs() const;
  double max_modeled_time() const;

  TrafficStats& operator+=(const TrafficStats& other);
};

inline constexpr const char* kStatsCsvHeader = "cycle,rank,msgs_sent,msgs_recv,bytes_sent,bytes_recv,modeled_time";

// One comment line naming the synthetic time model, then the header, then
// one row per rank per cycle.
void write_stats_csv(std::ostream& os, std::span<const TrafficStats> cycles, double alpha, double beta);

enum class TransportMode { Rendezvous, Buffered };
enum class Executor { RoundBased, Threaded };

struct TransportConfig {
  TransportMode mode = TransportMode::Rendezvous;
  // Per-rank bytes that may sit in flight in buffered mode; 0 = rendezvous.
  std::size_t buffer_budget = 0;
  double alpha = 1.0e-6;
  double beta = 1.0e-9;
  Executor executor = Executor::RoundBased;
};

// One step of a rank program. Payloads are produced and consumed lazily so a
// rank can react to what it received earlier in the same cycle.
struct Op {
  enum class Kind { Send, Recv, Local };
  Kind kind = Kind::Local;
  Rank peer = 0;
  Channel channel = Channel::QueryVector;
  std::function<Bytes()> produce;
  std::function<void(Bytes&&)> consume;
  std::function<void()> run;

  static Op send(Rank peer, Channel ch, std::function<Bytes()> produce);
  static Op recv(Rank peer, Channel ch, std::function<void(Bytes&&)> consume);
  static Op local(std::function<void()> run);
};
using Program = std::vector<Op>;

class DeadlockError : public Error {
 public:
  DeadlockError(const std::string& what, std::vector<Rank> cycle) : Error(what), cycle_(std::move(cycle)) {}
  const std::vector<Rank>& cycle() const { return cycle_; }

 private:
  std::vector<Rank> cycle_;
};

class Transport {
 public:
  explicit Transport(std::size_t ranks, TransportConfig config = {});

  std::size_t ranks() const { return ranks_; }
  const TransportConfig& config() const { return config_; }
  void set_mode(TransportMode mode, std::size_t buffer_budget = 0);
  void set_executor(Executor e);

  // Blocking primitives. A rendezvous send returns once the matching
  // receive has taken the message; FIFO per (src, dst, channel).
  void send(Rank src, Rank dst, Envelope env);
  Envelope recv(Rank dst, Rank src, Channel tag);
  // Marks a rank as finished for deadlock detection of the blocking API.
  void finish(Rank r);
  void close();

  // Runs one program per rank to completion and returns this cycle's
  // traffic. Throws DeadlockError naming the wait-for cycle.
  TrafficStats run_cycle(std::vector<Program> programs, std::string label = {});

  const std::vector<TrafficStats>& history() const { return history_; }
  void clear_history() { history_.clear(); }

 private:
  struct Message {
    Envelope env;
    double stamp = 0.0;
    bool consumed = false;
    double done_clock = 0.0;
  };
  using Key = std::tuple<Rank, Rank, Channel>;
  enum class State { Running, Blocked, Done };
  struct RankState {
    State state = State::Running;
    Rank waiting_on = 0;
    double clock = 0.0;
    std::size_t buffered = 0;
  };

  bool buffered() const { return config_.mode == TransportMode::Buffered && config_.buffer_budget > 0; }
  void begin_cycle(std::string label);
  TrafficStats end_cycle();
  std::shared_ptr<Message> post(Rank src, Rank dst, Channel ch, Bytes payload);
  std::shared_ptr<Message> take(Rank dst, Rank src, Channel ch);
  void finish_send(Rank src, const Message& m);
  [[noreturn]] void raise_deadlock(const std::vector<Rank>& blocked_ranks);
  void check_deadlock_locked();

  TrafficStats run_round_based(std::vector<Program>& programs);
  TrafficStats run_threaded(std::vector<Program>& programs);

  std::size_t ranks_;
  TransportConfig config_;
  bool in_flight_ = false;
  bool closed_ = false;
  std::map<Key, std::deque<std::shared_ptr<Message>>> queues_;
  std::vector<RankState> states_;
  TrafficStats current_;
  std::vector<TrafficStats> history_;

  std::mutex mu_;
  std::condition_variable cv_;
  std::exception_ptr failure_;
};

}  // namespace dtopo
