#pragma once

// Plain-text scenario files:
//
//   # comment
//   ranks=4
//   depth=3
//   max_depth=4
//   mode=decentral
//   [ops]
//   round
//   refine 0:12
//   delete 1:3
//   migrate 0:5 -> 1
//
// Each `round` line starts one round. Refine and delete lines form the
// per-rank batches; migrate lines replace the balancer's plans for that
// round.

#include "dtopo/balancer.hpp"
#include "dtopo/protocol.hpp"
#include "dtopo/spacetree.hpp"
#include "dtopo/transport.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dtopo {

enum class Mode { Decentral, Central };

struct ScenarioOp {
  enum class Kind { Refine, Delete, Migrate };
  Kind kind = Kind::Refine;
  Rank rank = 0;
  std::uint32_t gid = 0;
  Rank target = 0;
  friend bool operator==(const ScenarioOp&, const ScenarioOp&) = default;
};

struct ScenarioRound {
  std::vector<ScenarioOp> ops;
  friend bool operator==(const ScenarioRound&, const ScenarioRound&) = default;

  std::vector<RefineDeleteBatch> batches(std::size_t ranks) const;
  bool has_migrations() const;
  std::vector<MigrationPlan> plans(std::size_t ranks) const;
};

struct Scenario {
  DomainSpec spec;
  std::size_t ranks = 1;
  // Uniform depth of the initial tree.
  int depth = 0;
  Linearization scheme = Linearization::Morton;
  Mode mode = Mode::Decentral;
  TransportMode transport = TransportMode::Rendezvous;
  std::size_t buffer_budget = 0;
  PatternKind pattern = PatternKind::Structured;
  std::string balancer = "null";
  std::size_t payload_bytes = 0;
  std::vector<ScenarioRound> rounds;

  void validate() const;
};

Scenario parse_scenario(std::istream& is);
Scenario parse_scenario_text(const std::string& text);
void write_scenario(std::ostream& os, const Scenario& s);
std::string scenario_text(const Scenario& s);

const char* to_string(Mode m);
Mode parse_mode(const std::string& s);

}  // namespace dtopo
