#include "acdmcp/link_model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "acdmcp/rng.hpp"

namespace acdmcp::sim {

namespace {

constexpr std::uint64_t kPlacementStream = 0x706c6163;
constexpr std::uint64_t kLambdaStream = 0x6c616d62;
constexpr std::uint64_t kEnergyStream = 0x656e6572;

double distance(const Position& a, const Position& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double draw_lambda(const SimConfig& cfg, NodeId src, NodeId dst, Power p, double d, double range) {
  const auto& t = cfg.topology;
  const double u = to_unit(hash_combine({cfg.seed, kLambdaStream, src, dst, static_cast<std::uint64_t>(p)}));
  switch (t.lambda_mode) {
    case LambdaMode::constant:
      return t.lambda_constant;
    case LambdaMode::uniform:
      return t.lambda_min + (t.lambda_max - t.lambda_min) * u;
    case LambdaMode::distance: {
      const double spread = t.lambda_max - t.lambda_min;
      const double base = t.lambda_max - spread * (range > 0.0 ? d / range : 0.0);
      return std::clamp(base + spread * 0.2 * (u - 0.5), t.lambda_min, t.lambda_max);
    }
  }
  return 0.0;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    throw TopologyError(line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string_view to_string(Placement p) { return p == Placement::uniform ? "uniform" : "explicit"; }

std::string_view to_string(LambdaMode m) {
  switch (m) {
    case LambdaMode::uniform: return "uniform";
    case LambdaMode::constant: return "constant";
    case LambdaMode::distance: return "distance";
  }
  return "uniform";
}

double TopologyConfig::width() const {
  if (area_width > 0.0) return area_width;
  const double area = static_cast<double>(std::max<std::uint32_t>(node_count, 1)) * std::numbers::pi * range_low *
                      range_low / target_degree;
  return std::sqrt(area);
}

double TopologyConfig::height() const { return area_height > 0.0 ? area_height : width(); }

std::optional<double> LinkModel::lambda(NodeId src, NodeId dst, Power p) const {
  if (src >= nodes.size()) return std::nullopt;
  const auto& links = out(src, p);
  auto it = std::lower_bound(links.begin(), links.end(), dst, [](const Link& l, NodeId d) { return l.dst < d; });
  if (it == links.end() || it->dst != dst) return std::nullopt;
  return it->lambda;
}

std::size_t LinkModel::edge_count(Power p) const {
  std::size_t n = 0;
  for (const auto& l : (p == Power::low ? low : high)) n += l.size();
  return n;
}

std::uint64_t LinkModel::fingerprint() const {
  std::uint64_t h = hash_combine({nodes.size(), std::bit_cast<std::uint64_t>(range_low), std::bit_cast<std::uint64_t>(range_high)});
  for (const auto& n : nodes) {
    h = hash_combine({h, n.id, std::bit_cast<std::uint64_t>(n.pos.x), std::bit_cast<std::uint64_t>(n.pos.y),
                      std::bit_cast<std::uint64_t>(n.e_initial)});
  }
  for (int p = 0; p < 2; ++p) {
    const auto& adj = p == 0 ? low : high;
    for (std::size_t s = 0; s < adj.size(); ++s) {
      for (const auto& l : adj[s]) {
        h = hash_combine({h, static_cast<std::uint64_t>(p), s, l.dst, std::bit_cast<std::uint64_t>(l.lambda)});
      }
    }
  }
  return h;
}

void LinkModel::refresh_connectivity() {
  std::vector<bool> seen(nodes.size(), false);
  std::vector<NodeId> stack;
  if (!nodes.empty()) {
    seen[kSinkId] = true;
    stack.push_back(kSinkId);
  }
  while (!stack.empty()) {
    const NodeId v = stack.back();
    stack.pop_back();
    for (const auto* adj : {&low, &high}) {
      for (const auto& l : (*adj)[v]) {
        if (!seen[l.dst]) {
          seen[l.dst] = true;
          stack.push_back(l.dst);
        }
      }
    }
  }
  disconnected = std::find(seen.begin(), seen.end(), false) != seen.end();
}

LinkModel generate_topology(const SimConfig& cfg) {
  const auto& t = cfg.topology;
  if (t.node_count == 0) throw std::invalid_argument("topology.node_count: must be at least 1");
  LinkModel m;
  m.range_low = t.range_low;
  m.range_high = t.range_high;
  const std::uint32_t n = t.node_count;
  m.nodes.resize(n + 1);

  const double w = t.width();
  const double h = t.height();
  m.nodes[0] = NodeSpec{kSinkId, t.sink_position.value_or(Position{w / 2.0, h / 2.0}), 0.0};

  Rng place(hash_combine({cfg.seed, kPlacementStream}));
  Rng energy(hash_combine({cfg.seed, kEnergyStream}));
  for (NodeId id = 1; id <= n; ++id) {
    auto& spec = m.nodes[id];
    spec.id = id;
    if (t.placement == Placement::explicit_positions) {
      spec.pos = t.positions.at(id - 1);
    } else {
      spec.pos.x = place.uniform(0.0, w);
      spec.pos.y = place.uniform(0.0, h);
    }
    if (!cfg.energy.per_node.empty()) {
      spec.e_initial = cfg.energy.per_node.at(id - 1);
    } else if (cfg.energy.initial_max > cfg.energy.initial) {
      spec.e_initial = energy.uniform(cfg.energy.initial, cfg.energy.initial_max);
    } else {
      spec.e_initial = cfg.energy.initial;
    }
  }

  m.low.assign(n + 1, {});
  m.high.assign(n + 1, {});
  for (NodeId s = 0; s <= n; ++s) {
    for (NodeId d = 0; d <= n; ++d) {
      if (s == d) continue;
      const double dist = distance(m.nodes[s].pos, m.nodes[d].pos);
      if (dist <= t.range_low) m.low[s].push_back({d, draw_lambda(cfg, s, d, Power::low, dist, t.range_low)});
      if (dist <= t.range_high) m.high[s].push_back({d, draw_lambda(cfg, s, d, Power::high, dist, t.range_high)});
    }
  }
  m.refresh_connectivity();
  return m;
}

void write_topology(std::ostream& os, const LinkModel& m) {
  os << "# acdmcp topology v1\n";
  os << "ranges " << format_double(m.range_low) << ' ' << format_double(m.range_high) << '\n';
  for (const auto& n : m.nodes) {
    if (n.id == kSinkId) {
      os << "sink 0 " << format_double(n.pos.x) << ' ' << format_double(n.pos.y) << '\n';
    } else {
      os << "node " << n.id << ' ' << format_double(n.pos.x) << ' ' << format_double(n.pos.y) << ' '
         << format_double(n.e_initial) << '\n';
    }
  }
  for (Power p : {Power::low, Power::high}) {
    const auto& adj = p == Power::low ? m.low : m.high;
    for (std::size_t s = 0; s < adj.size(); ++s) {
      for (const auto& l : adj[s]) {
        os << "edge " << s << ' ' << l.dst << ' ' << to_string(p) << ' ' << format_double(l.lambda) << '\n';
      }
    }
  }
}

LinkModel read_topology(std::istream& is) {
  struct RawEdge {
    NodeId src, dst;
    Power p;
    double lambda;
    std::size_t line;
  };
  LinkModel m;
  std::vector<std::optional<NodeSpec>> specs;
  std::vector<RawEdge> edges;
  bool have_sink = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string_view sv = line;
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    const auto f = split(sv);
    if (f.empty()) continue;
    const auto need = [&](std::size_t k) {
      if (f.size() != k) {
        throw TopologyError(lineno, "'" + std::string(f[0]) + "' expects " + std::to_string(k - 1) + " fields");
      }
    };
    if (f[0] == "ranges") {
      need(3);
      m.range_low = parse_number<double>(f[1], lineno, "range");
      m.range_high = parse_number<double>(f[2], lineno, "range");
      if (!(m.range_low > 0.0) || !(m.range_high >= m.range_low)) {
        throw TopologyError(lineno, "ranges must satisfy 0 < low <= high");
      }
    } else if (f[0] == "sink") {
      need(4);
      if (parse_number<NodeId>(f[1], lineno, "node id") != kSinkId) throw TopologyError(lineno, "sink id must be 0");
      if (have_sink) throw TopologyError(lineno, "duplicate sink");
      have_sink = true;
      if (specs.empty()) specs.resize(1);
      specs[0] = NodeSpec{kSinkId,
                          {parse_number<double>(f[2], lineno, "coordinate"), parse_number<double>(f[3], lineno, "coordinate")},
                          0.0};
    } else if (f[0] == "node") {
      need(5);
      const auto id = parse_number<NodeId>(f[1], lineno, "node id");
      if (id == kSinkId) throw TopologyError(lineno, "node id 0 is reserved for the sink");
      if (id >= specs.size()) specs.resize(id + 1);
      if (specs[id]) throw TopologyError(lineno, "duplicate node " + std::to_string(id));
      const double e = parse_number<double>(f[4], lineno, "initial energy");
      if (!(e >= 0.0)) throw TopologyError(lineno, "initial energy must be >= 0");
      specs[id] = NodeSpec{id, {parse_number<double>(f[2], lineno, "coordinate"), parse_number<double>(f[3], lineno, "coordinate")}, e};
    } else if (f[0] == "edge") {
      need(5);
      RawEdge e{parse_number<NodeId>(f[1], lineno, "node id"), parse_number<NodeId>(f[2], lineno, "node id"), Power::low,
                parse_number<double>(f[4], lineno, "lambda"), lineno};
      if (f[3] == "low") {
        e.p = Power::low;
      } else if (f[3] == "high") {
        e.p = Power::high;
      } else {
        throw TopologyError(lineno, "power must be 'low' or 'high'");
      }
      if (!(e.lambda >= 0.0 && e.lambda <= 1.0)) {
        throw TopologyError(lineno, "lambda " + std::string(f[4]) + " outside [0,1]");
      }
      if (e.src == e.dst) throw TopologyError(lineno, "self edge");
      edges.push_back(e);
    } else {
      throw TopologyError(lineno, "unknown record '" + std::string(f[0]) + "'");
    }
  }
  if (!have_sink) throw TopologyError(lineno, "missing sink record");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (!specs[i]) throw TopologyError(lineno, "node ids must be contiguous; missing " + std::to_string(i));
    m.nodes.push_back(*specs[i]);
  }
  m.low.assign(m.nodes.size(), {});
  m.high.assign(m.nodes.size(), {});
  for (const auto& e : edges) {
    if (e.src >= m.nodes.size() || e.dst >= m.nodes.size()) throw TopologyError(e.line, "edge references unknown node");
    auto& adj = e.p == Power::low ? m.low[e.src] : m.high[e.src];
    adj.push_back({e.dst, e.lambda});
  }
  for (auto* adj : {&m.low, &m.high}) {
    for (auto& links : *adj) {
      std::stable_sort(links.begin(), links.end(), [](const Link& a, const Link& b) { return a.dst < b.dst; });
      for (std::size_t i = 1; i < links.size(); ++i) {
        if (links[i].dst == links[i - 1].dst) throw TopologyError(lineno, "duplicate edge to " + std::to_string(links[i].dst));
      }
    }
  }
  m.refresh_connectivity();
  return m;
}

LinkModel load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open topology file: " + path);
  try {
    return read_topology(in);
  } catch (const TopologyError& e) {
    throw TopologyError(e.line(), e.reason(), path);
  }
}

void save_topology_file(const std::string& path, const LinkModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write topology file: " + path);
  write_topology(out, model);
}

}  // namespace acdmcp::sim
