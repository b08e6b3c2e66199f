#pragma once

#include "dtopo/codec.hpp"

#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dtopo {

enum class StepOp { Send, Recv, LocalUpdate };

struct CommStep {
  StepOp op = StepOp::LocalUpdate;
  std::optional<Rank> peer;
  // 1-based stage for stage-joined schedules, 0 when untagged.
  int stage = 0;
  friend bool operator==(const CommStep&, const CommStep&) = default;
};

struct CommSchedule {
  Rank rank = 0;
  std::vector<CommStep> steps;

  // Peers in exchange order; a Send/Recv couple with one peer is one exchange.
  std::vector<Rank> exchange_order() const;
};

// The structured pattern: for each lower peer Recv then Send, the local
// update, then for each higher peer Send then Recv, peers ascending.
CommSchedule build_pattern(Rank rank, std::span<const Rank> remote_ranks);

// Unordered rank pair, stored with first < second.
using RankPair = std::pair<Rank, Rank>;
RankPair make_pair_sorted(Rank a, Rank b);

// Per-rank sorted peer lists implied by a pair set over ranks 0..ranks-1.
std::vector<std::vector<Rank>> peers_from_pairs(const std::set<RankPair>& pairs, std::size_t ranks);
std::size_t rank_count(const std::set<RankPair>& pairs);

std::vector<CommSchedule> structured_schedules(const std::set<RankPair>& pairs, std::size_t ranks);

// Rows are stages, columns ranks; a cell holds the partner of that rank in
// that stage. Labels list the original stages a row was built from.
struct StageTable {
  std::size_t ranks = 0;
  struct Row {
    std::vector<int> labels;
    std::vector<std::optional<Rank>> partner;
  };
  std::vector<Row> rows;

  std::string to_csv() const;
};

// Lockstep execution of schedules under blocking semantics: in each stage
// every pair of ranks whose next exchange names each other proceeds.
// Throws ContractError when no pair can proceed before all are done.
StageTable stage_table(std::span<const CommSchedule> schedules);

struct StagedSchedule {
  StageTable table;
  std::vector<CommSchedule> schedules;
};

// Greedy joining of the structured pattern's stages: each later stage moves
// into the earliest stage in which all its ranks are idle.
StagedSchedule join_stages(const std::set<RankPair>& pairs, std::size_t ranks = 0);

// Schedules as executed per exchange from a staged table.
std::vector<CommSchedule> schedules_from_table(const StageTable& table);

}  // namespace dtopo
