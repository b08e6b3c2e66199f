#include "dtopo/schedule.hpp"

#include "dtopo/errors.hpp"

#include <algorithm>
#include <sstream>
#include <string>

namespace dtopo {

CommSchedule build_pattern(Rank rank, std::span<const Rank> remote_ranks) {
  for (std::size_t i = 0; i < remote_ranks.size(); ++i) {
    if (remote_ranks[i] == rank) throw ContractError("remote rank list contains the rank itself");
    if (i > 0 && remote_ranks[i - 1] >= remote_ranks[i]) {
      throw ContractError("remote rank list must be strictly ascending");
    }
  }
  CommSchedule s;
  s.rank = rank;
  auto it = std::lower_bound(remote_ranks.begin(), remote_ranks.end(), rank);
  for (auto p = remote_ranks.begin(); p != it; ++p) {
    s.steps.push_back({StepOp::Recv, *p, 0});
    s.steps.push_back({StepOp::Send, *p, 0});
  }
  s.steps.push_back({StepOp::LocalUpdate, std::nullopt, 0});
  for (auto p = it; p != remote_ranks.end(); ++p) {
    s.steps.push_back({StepOp::Send, *p, 0});
    s.steps.push_back({StepOp::Recv, *p, 0});
  }
  return s;
}

RankPair make_pair_sorted(Rank a, Rank b) {
  if (a == b) throw ContractError("a rank cannot pair with itself");
  return a < b ? RankPair{a, b} : RankPair{b, a};
}

std::size_t rank_count(const std::set<RankPair>& pairs) {
  std::size_t n = 0;
  for (const auto& [a, b] : pairs) n = std::max<std::size_t>(n, std::size_t{b} + 1);
  return n;
}

std::vector<std::vector<Rank>> peers_from_pairs(const std::set<RankPair>& pairs, std::size_t ranks) {
  std::vector<std::vector<Rank>> peers(ranks);
  for (const auto& [a, b] : pairs) {
    if (a >= b) throw ContractError("pair must be stored with first < second");
    if (b >= ranks) throw ContractError("pair names a rank beyond the rank count");
    peers[a].push_back(b);
    peers[b].push_back(a);
  }
  for (auto& p : peers) std::sort(p.begin(), p.end());
  return peers;
}

std::vector<CommSchedule> structured_schedules(const std::set<RankPair>& pairs, std::size_t ranks) {
  const auto peers = peers_from_pairs(pairs, ranks);
  std::vector<CommSchedule> out;
  out.reserve(ranks);
  for (std::size_t r = 0; r < ranks; ++r) out.push_back(build_pattern(static_cast<Rank>(r), peers[r]));
  return out;
}

std::string StageTable::to_csv() const {
  std::ostringstream os;
  os << "stage";
  for (std::size_t r = 0; r < ranks; ++r) os << ',' << r;
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.labels.size(); ++i) os << (i ? "&" : "") << row.labels[i];
    for (const auto& p : row.partner) {
      os << ',';
      if (p) os << *p; else os << '-';
    }
    os << '\n';
  }
  return os.str();
}

std::vector<Rank> CommSchedule::exchange_order() const {
  std::vector<Rank> out;
  const auto& st = steps;
  for (std::size_t i = 0; i < st.size();) {
    if (st[i].op == StepOp::LocalUpdate) {
      ++i;
      continue;
    }
    if (i + 1 >= st.size() || st[i + 1].peer != st[i].peer || st[i + 1].op == st[i].op ||
        st[i + 1].op == StepOp::LocalUpdate) {
      throw ContractError("schedule of rank " + std::to_string(rank) + " has an unpaired step");
    }
    out.push_back(*st[i].peer);
    i += 2;
  }
  return out;
}

StageTable stage_table(std::span<const CommSchedule> schedules) {
  const std::size_t n = schedules.size();
  std::vector<std::vector<Rank>> seq(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (schedules[r].rank != r) throw ContractError("schedules must be indexed by rank");
    seq[r] = schedules[r].exchange_order();
  }
  std::vector<std::size_t> head(n, 0);
  StageTable table;
  table.ranks = n;
  int stage = 0;
  for (;;) {
    bool remaining = false;
    StageTable::Row row;
    row.partner.assign(n, std::nullopt);
    for (std::size_t r = 0; r < n; ++r) {
      if (head[r] >= seq[r].size()) continue;
      remaining = true;
      const Rank p = seq[r][head[r]];
      if (p >= n) throw ContractError("schedule names unknown rank " + std::to_string(p));
      if (head[p] < seq[p].size() && seq[p][head[p]] == r) row.partner[r] = p;
    }
    if (!remaining) break;
    bool any = false;
    for (std::size_t r = 0; r < n; ++r) {
      if (row.partner[r]) {
        ++head[r];
        any = true;
      }
    }
    if (!any) throw ContractError("schedules cannot make progress: no rank pair is mutually ready");
    row.labels.push_back(++stage);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<CommSchedule> schedules_from_table(const StageTable& table) {
  std::vector<CommSchedule> out(table.ranks);
  for (std::size_t r = 0; r < table.ranks; ++r) out[r].rank = static_cast<Rank>(r);
  for (std::size_t s = 0; s < table.rows.size(); ++s) {
    const int stage = static_cast<int>(s) + 1;
    for (std::size_t r = 0; r < table.ranks; ++r) {
      const auto& p = table.rows[s].partner[r];
      if (!p) continue;
      auto& steps = out[r].steps;
      if (r < *p) {
        steps.push_back({StepOp::Send, *p, stage});
        steps.push_back({StepOp::Recv, *p, stage});
      } else {
        steps.push_back({StepOp::Recv, *p, stage});
        steps.push_back({StepOp::Send, *p, stage});
      }
    }
  }
  for (auto& s : out) s.steps.push_back({StepOp::LocalUpdate, std::nullopt, 0});
  return out;
}

StagedSchedule join_stages(const std::set<RankPair>& pairs, std::size_t ranks) {
  ranks = std::max(ranks, rank_count(pairs));
  const auto base = structured_schedules(pairs, ranks);
  const StageTable regular = stage_table(base);

  StagedSchedule out;
  out.table.ranks = ranks;
  for (const auto& row : regular.rows) {
    bool merged = false;
    for (auto& target : out.table.rows) {
      bool idle = true;
      for (std::size_t r = 0; r < ranks && idle; ++r) {
        if (row.partner[r] && target.partner[r]) idle = false;
      }
      if (!idle) continue;
      for (std::size_t r = 0; r < ranks; ++r) {
        if (row.partner[r]) target.partner[r] = row.partner[r];
      }
      target.labels.insert(target.labels.end(), row.labels.begin(), row.labels.end());
      merged = true;
      break;
    }
    if (!merged) out.table.rows.push_back(row);
  }
  out.schedules = schedules_from_table(out.table);
  return out;
}

}  // namespace dtopo
