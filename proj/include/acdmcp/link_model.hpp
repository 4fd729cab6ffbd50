#pragma once
/*
 * Ground-truth directed link reliabilities per power level.
 *
 * Text format (one record per line, '#' starts a comment):
 *
 *   # acdmcp topology v1
 *   ranges <range_low> <range_high>
 *   sink 0 <x> <y>
 *   node <id> <x> <y> <e_initial>
 *   edge <src> <dst> low|high <lambda>
 *
 * Node ids must be 1..N without gaps; the sink is always id 0.
 */

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "acdmcp/sim_config.hpp"
#include "acdmcp/types.hpp"

namespace acdmcp::sim {

struct NodeSpec {
  NodeId id = 0;
  Position pos;
  double e_initial = 0.0;
  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct Link {
  NodeId dst = 0;
  double lambda = 0.0;
  friend bool operator==(const Link&, const Link&) = default;
};

class LinkModel {
 public:
  std::vector<NodeSpec> nodes;  // index == id; nodes[0] is the sink
  double range_low = 0.0;
  double range_high = 0.0;
  std::vector<std::vector<Link>> low;   // out-links per source, sorted by dst
  std::vector<std::vector<Link>> high;
  bool disconnected = false;  // some sensor cannot reach the sink over any edge

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
  [[nodiscard]] std::uint32_t sensor_count() const { return nodes.empty() ? 0 : static_cast<std::uint32_t>(nodes.size() - 1); }
  [[nodiscard]] const std::vector<Link>& out(NodeId src, Power p) const { return p == Power::low ? low[src] : high[src]; }
  [[nodiscard]] std::optional<double> lambda(NodeId src, NodeId dst, Power p) const;
  [[nodiscard]] std::size_t edge_count(Power p) const;
  [[nodiscard]] std::uint64_t fingerprint() const;

  // Recomputes `disconnected` from the current edges.
  void refresh_connectivity();

  friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

class TopologyError : public std::runtime_error {
 public:
  TopologyError(std::size_t line, const std::string& reason, const std::string& source = {})
      : std::runtime_error((source.empty() ? "line " : source + ":") + std::to_string(line) + ": " + reason),
        line_(line),
        reason_(reason) {}
  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& reason() const { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

LinkModel generate_topology(const SimConfig& config);

void write_topology(std::ostream& os, const LinkModel& model);
LinkModel read_topology(std::istream& is);
LinkModel load_topology_file(const std::string& path);
void save_topology_file(const std::string& path, const LinkModel& model);

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace acdmcp::sim
