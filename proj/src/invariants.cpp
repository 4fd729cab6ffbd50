#include "acdmcp/invariants.hpp"

#include <sstream>

namespace acdmcp::sim {

namespace {

using protocol::NodeStatus;

bool alive(const NetworkSnapshot& s, NodeId id) { return id < s.energy.size() && s.energy[id].alive(); }

void add(InvariantReport& out, NodeId node, std::string what) { out.violations.push_back({node, std::move(what)}); }

std::string id_str(NodeId id) { return std::to_string(id); }

}  // namespace

std::string InvariantReport::summary(std::size_t max_lines) const {
  std::ostringstream os;
  os << violations.size() << " violation(s)";
  for (std::size_t i = 0; i < violations.size() && i < max_lines; ++i) {
    os << "\n  node " << violations[i].node << ": " << violations[i].what;
  }
  if (violations.size() > max_lines) os << "\n  ...";
  return os.str();
}

void check_terminal_status(const NetworkSnapshot& snap, InvariantReport& out) {
  for (NodeId i = 1; i < snap.nodes.size(); ++i) {
    if (!alive(snap, i)) continue;
    if (!protocol::is_terminal(snap.nodes[i].status)) {
      add(out, i, "non-terminal status " + std::string(protocol::to_string(snap.nodes[i].status)));
    }
  }
}

void check_membership(const NetworkSnapshot& snap, InvariantReport& out) {
  const auto& nodes = snap.nodes;
  out.alive_sensors = 0;
  out.consistent_members = 0;
  for (NodeId i = 1; i < nodes.size(); ++i) {
    if (!alive(snap, i)) continue;
    ++out.alive_sensors;
    const auto& s = nodes[i];
    bool ok = true;
    switch (s.status) {
      case NodeStatus::cm: {
        const auto ch = s.cluster.my_ch;
        ok = ch && *ch < nodes.size() && nodes[*ch].status == NodeStatus::ch && nodes[*ch].cluster.members.count(i);
        break;
      }
      case NodeStatus::tcm: {
        const auto tch = s.cluster.my_tch;
        ok = tch && *tch < nodes.size() && nodes[*tch].is_tch && nodes[*tch].cluster.sub_neighbors.count(i);
        break;
      }
      case NodeStatus::ch:
        for (NodeId m : s.cluster.members) {
          if (!alive(snap, m)) continue;
          const auto& ms = nodes[m];
          if (ms.status != NodeStatus::cm || ms.cluster.my_ch != i) ok = false;
        }
        break;
      default:
        break;
    }
    if (ok && s.is_tch) {
      for (NodeId m : s.cluster.sub_neighbors) {
        if (!alive(snap, m)) continue;
        const auto& ms = nodes[m];
        if (ms.status != NodeStatus::tcm || ms.cluster.my_tch != i) ok = false;
      }
    }
    if (ok) ++out.consistent_members;
  }
}

void check_transitive_chains(const NetworkSnapshot& snap, InvariantReport& out, bool check_depth) {
  const auto& nodes = snap.nodes;
  for (NodeId i = 1; i < nodes.size(); ++i) {
    if (!alive(snap, i) || nodes[i].status != NodeStatus::tcm) continue;
    std::vector<bool> seen(nodes.size(), false);
    NodeId u = i;
    std::uint32_t length = 0;
    bool done = false;
    while (!done) {
      if (seen[u]) {
        add(out, i, "transitive chain revisits node " + id_str(u));
        break;
      }
      seen[u] = true;
      const auto& s = nodes[u];
      std::optional<NodeId> next;
      if (s.status == NodeStatus::tcm) {
        next = s.cluster.my_tch;
      } else if (s.status == NodeStatus::cm) {
        next = s.cluster.my_ch;
      } else if (s.status == NodeStatus::ch) {
        done = true;
        continue;
      }
      if (!next || *next >= nodes.size()) {
        add(out, i, "transitive chain breaks at node " + id_str(u));
        break;
      }
      u = *next;
      ++length;
    }
    if (check_depth && done && length != nodes[i].cluster.depth) {
      add(out, i, "chain length " + std::to_string(length) + " but depth " + std::to_string(nodes[i].cluster.depth));
    }
  }
}

void check_routing_forest(const NetworkSnapshot& snap, InvariantReport& out) {
  const auto& nodes = snap.nodes;
  for (NodeId i = 1; i < nodes.size(); ++i) {
    if (!alive(snap, i)) continue;
    const auto& r = nodes[i].routing;
    if (r.dsn_high) {
      const NodeId d = *r.dsn_high;
      const std::uint32_t dh = d == kSinkId ? 0 : nodes[d].routing.hts_high;
      if (r.hts_high == 0) add(out, i, "high-power DSN set without a hop count");
      if (d != kSinkId && dh == 0) add(out, i, "high-power DSN " + id_str(d) + " has no route");
      if (r.hts_high != 0 && dh >= r.hts_high) {
        add(out, i, "high-power hop count " + std::to_string(r.hts_high) + " not above DSN's " + std::to_string(dh));
      }
    }
    if (r.dsn_low) {
      const NodeId d = *r.dsn_low;
      const std::uint32_t dh = d == kSinkId ? 0 : nodes[d].routing.hts_low;
      if (r.hts_low == 0) add(out, i, "low-power DSN set without a hop count");
      if (d != kSinkId && dh == 0) add(out, i, "low-power DSN " + id_str(d) + " has no route");
      if (r.hts_low != 0 && dh >= r.hts_low) {
        add(out, i, "low-power hop count " + std::to_string(r.hts_low) + " not above DSN's " + std::to_string(dh));
      }
    }
  }
}

void check_tch_flags(const NetworkSnapshot& snap, InvariantReport& out) {
  for (NodeId i = 1; i < snap.nodes.size(); ++i) {
    if (!alive(snap, i)) continue;
    const auto& s = snap.nodes[i];
    if (s.is_tch && s.status != NodeStatus::cm && s.status != NodeStatus::tcm) {
      add(out, i, "transitive head with status " + std::string(protocol::to_string(s.status)));
    }
  }
}

void check_energy(const NetworkSnapshot& snap, InvariantReport& out) {
  for (NodeId i = 0; i < snap.energy.size(); ++i) {
    const auto& a = snap.energy[i];
    if (a.unlimited) continue;
    if (a.residual < 0) add(out, i, "negative residual energy");
    if (a.residual != a.initial - a.spent()) add(out, i, "energy breakdown does not sum to the spent total");
    if (a.initial > 0 && (a.residual == 0) != a.death.has_value()) add(out, i, "death flag disagrees with residual");
  }
}

InvariantReport check_all(const NetworkSnapshot& snap, bool strict) {
  InvariantReport out;
  check_terminal_status(snap, out);
  InvariantReport membership;
  check_membership(snap, membership);
  out.alive_sensors = membership.alive_sensors;
  out.consistent_members = membership.consistent_members;
  if (strict && membership.consistent_members != membership.alive_sensors) {
    add(out, 0,
        std::to_string(membership.alive_sensors - membership.consistent_members) + " node(s) with one-sided membership");
  }
  check_transitive_chains(snap, out, strict);
  check_routing_forest(snap, out);
  check_tch_flags(snap, out);
  check_energy(snap, out);
  return out;
}

}  // namespace acdmcp::sim
