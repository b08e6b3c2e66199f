#pragma once

#include "dtopo/codec.hpp"
#include "dtopo/topology.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace dtopo {

struct Migration {
  std::uint32_t gid = 0;
  Rank target = 0;
  friend bool operator==(const Migration&, const Migration&) = default;
};
using MigrationPlan = std::vector<Migration>;

struct LoadSummary {
  Rank rank = 0;
  std::size_t local = 0;
  // Grid counts reported by the current peers.
  std::map<Rank, std::size_t> peers;
};

class Balancer {
 public:
  virtual ~Balancer() = default;
  virtual std::string name() const = 0;
  virtual MigrationPlan plan(const RankTopology& topo, const LoadSummary& load) = 0;
};

class NullBalancer final : public Balancer {
 public:
  std::string name() const override { return "null"; }
  MigrationPlan plan(const RankTopology&, const LoadSummary&) override { return {}; }
};

// A rank whose load is the strict maximum among itself and its peers (ties
// go to the lower rank) sends half its surplus over the least-loaded peer to
// that peer, picking grids that already border it first.
class GreedyCountBalancer final : public Balancer {
 public:
  std::string name() const override { return "greedy-count"; }
  MigrationPlan plan(const RankTopology& topo, const LoadSummary& load) override;
};

// Hands out fixed per-rank plans set before the round.
class ScriptedBalancer final : public Balancer {
 public:
  std::string name() const override { return "scripted"; }
  void set(std::vector<MigrationPlan> plans) { plans_ = std::move(plans); }
  MigrationPlan plan(const RankTopology& topo, const LoadSummary& load) override;

 private:
  std::vector<MigrationPlan> plans_;
};

std::unique_ptr<Balancer> make_balancer(const std::string& name);

}  // namespace dtopo
