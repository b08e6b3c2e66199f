#include "dtopo/scenario.hpp"

#include "dtopo/errors.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace dtopo {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <typename T>
T number(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) throw FormatError("bad value for " + key + ": '" + v + "'");
  return out;
}

// "r:g" names a grid by rank and gid; a hash part is accepted and ignored.
std::pair<Rank, std::uint32_t> grid_ref(const std::string& text) {
  const auto c = text.find(':');
  if (c == std::string::npos) throw FormatError("bad grid reference '" + text + "'");
  const auto rank = number<Rank>("rank", text.substr(0, c));
  auto rest = text.substr(c + 1);
  const auto c2 = rest.find(':');
  if (c2 != std::string::npos) rest = rest.substr(0, c2);
  return {rank, number<std::uint32_t>("gid", rest)};
}

}  // namespace

const char* to_string(Mode m) { return m == Mode::Central ? "central" : "decentral"; }

Mode parse_mode(const std::string& s) {
  if (s == "decentral") return Mode::Decentral;
  if (s == "central") return Mode::Central;
  throw ConfigError("unknown mode '" + s + "'");
}

std::vector<RefineDeleteBatch> ScenarioRound::batches(std::size_t ranks) const {
  std::vector<RefineDeleteBatch> out(ranks);
  for (const auto& op : ops) {
    if (op.kind == ScenarioOp::Kind::Migrate) continue;
    if (op.rank >= ranks) throw ConfigError("op names rank " + std::to_string(op.rank));
    out[op.rank].push_back({op.kind == ScenarioOp::Kind::Refine ? IntentKind::Refine : IntentKind::Delete, op.gid});
  }
  return out;
}

bool ScenarioRound::has_migrations() const {
  for (const auto& op : ops) {
    if (op.kind == ScenarioOp::Kind::Migrate) return true;
  }
  return false;
}

std::vector<MigrationPlan> ScenarioRound::plans(std::size_t ranks) const {
  std::vector<MigrationPlan> out(ranks);
  for (const auto& op : ops) {
    if (op.kind != ScenarioOp::Kind::Migrate) continue;
    if (op.rank >= ranks) throw ConfigError("op names rank " + std::to_string(op.rank));
    out[op.rank].push_back({op.gid, op.target});
  }
  return out;
}

void Scenario::validate() const {
  spec.validate();
  if (ranks == 0) throw ConfigError("ranks must be positive");
  if (depth < 0 || depth > spec.max_depth) throw ConfigError("depth outside 0..max_depth");
  make_balancer(balancer);
}

Scenario parse_scenario(std::istream& is) {
  Scenario s;
  std::string line;
  std::size_t lineno = 0;
  bool ops = false;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = "line " + std::to_string(lineno) + ": ";
    try {
      if (line == "[ops]") {
        ops = true;
        continue;
      }
      if (!ops) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto v = trim(line.substr(eq + 1));
        if (key == "ranks") s.ranks = number<std::size_t>(key, v);
        else if (key == "depth") s.depth = number<int>(key, v);
        else if (key == "max_depth") s.spec.max_depth = number<int>(key, v);
        else if (key == "factor") {
          std::istringstream fs(v);
          std::string a, b, c;
          if (!std::getline(fs, a, ',') || !std::getline(fs, b, ',') || !std::getline(fs, c)) {
            throw FormatError("factor must be x,y,z");
          }
          s.spec.factor = {number<std::uint32_t>(key, trim(a)), number<std::uint32_t>(key, trim(b)),
                           number<std::uint32_t>(key, trim(c))};
        } else if (key == "scheme") {
          if (v == "morton") s.scheme = Linearization::Morton;
          else if (v == "depth-first") s.scheme = Linearization::DepthFirst;
          else throw FormatError("unknown scheme '" + v + "'");
        } else if (key == "mode") s.mode = parse_mode(v);
        else if (key == "transport") {
          if (v == "rendezvous") s.transport = TransportMode::Rendezvous;
          else if (v == "buffered") s.transport = TransportMode::Buffered;
          else throw FormatError("unknown transport '" + v + "'");
        } else if (key == "buffer") s.buffer_budget = number<std::size_t>(key, v);
        else if (key == "pattern") {
          if (v == "structured") s.pattern = PatternKind::Structured;
          else if (v == "joined") s.pattern = PatternKind::Joined;
          else throw FormatError("unknown pattern '" + v + "'");
        } else if (key == "balancer") s.balancer = v;
        else if (key == "payload") s.payload_bytes = number<std::size_t>(key, v);
        else throw FormatError("unknown key '" + key + "'");
        continue;
      }
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      if (word == "round") {
        s.rounds.emplace_back();
        continue;
      }
      if (s.rounds.empty()) throw FormatError("op before the first round");
      ScenarioOp op;
      std::string ref;
      ls >> ref;
      if (word == "refine") op.kind = ScenarioOp::Kind::Refine;
      else if (word == "delete") op.kind = ScenarioOp::Kind::Delete;
      else if (word == "migrate") op.kind = ScenarioOp::Kind::Migrate;
      else throw FormatError("unknown op '" + word + "'");
      std::tie(op.rank, op.gid) = grid_ref(ref);
      if (op.kind == ScenarioOp::Kind::Migrate) {
        std::string arrow, target;
        ls >> arrow >> target;
        if (arrow != "->" || target.empty()) throw FormatError("migrate needs '-> <rank>'");
        op.target = number<Rank>("target", target);
      }
      std::string extra;
      if (ls >> extra) throw FormatError("trailing text '" + extra + "'");
      s.rounds.back().ops.push_back(op);
    } catch (const FormatError& e) {
      throw FormatError(at + e.what());
    } catch (const ConfigError& e) {
      throw FormatError(at + e.what());
    }
  }
  s.validate();
  return s;
}

Scenario parse_scenario_text(const std::string& text) {
  std::istringstream is(text);
  return parse_scenario(is);
}

void write_scenario(std::ostream& os, const Scenario& s) {
  os << "ranks=" << s.ranks << '\n';
  os << "depth=" << s.depth << '\n';
  os << "max_depth=" << s.spec.max_depth << '\n';
  os << "factor=" << s.spec.factor.x << ',' << s.spec.factor.y << ',' << s.spec.factor.z << '\n';
  os << "scheme=" << (s.scheme == Linearization::Morton ? "morton" : "depth-first") << '\n';
  os << "mode=" << to_string(s.mode) << '\n';
  os << "transport=" << (s.transport == TransportMode::Rendezvous ? "rendezvous" : "buffered") << '\n';
  os << "buffer=" << s.buffer_budget << '\n';
  os << "pattern=" << (s.pattern == PatternKind::Structured ? "structured" : "joined") << '\n';
  os << "balancer=" << s.balancer << '\n';
  os << "payload=" << s.payload_bytes << '\n';
  os << "[ops]\n";
  for (const auto& r : s.rounds) {
    os << "round\n";
    for (const auto& op : r.ops) {
      switch (op.kind) {
        case ScenarioOp::Kind::Refine: os << "refine " << op.rank << ':' << op.gid << '\n'; break;
        case ScenarioOp::Kind::Delete: os << "delete " << op.rank << ':' << op.gid << '\n'; break;
        case ScenarioOp::Kind::Migrate:
          os << "migrate " << op.rank << ':' << op.gid << " -> " << op.target << '\n';
          break;
      }
    }
  }
}

std::string scenario_text(const Scenario& s) {
  std::ostringstream os;
  write_scenario(os, s);
  return os.str();
}

}  // namespace dtopo
