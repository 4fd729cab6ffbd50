#pragma once
// Shared fixtures: hand-built link models and small drivers for pure stepping.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "acdmcp/link_model.hpp"
#include "acdmcp/protocol.hpp"
#include "acdmcp/simulator.hpp"

namespace testsupport {

using namespace acdmcp;

struct Edge {
  NodeId a = 0;
  NodeId b = 0;
  double ab = 1.0;  // lambda a -> b
  double ba = 1.0;  // lambda b -> a
};

// Sensors 1..energies.size(); node 0 is the sink. Every edge is added in both
// directions. Positions are placeholders: the model is used as given.
inline sim::LinkModel make_model(const std::vector<double>& energies, const std::vector<Edge>& low,
                                 const std::vector<Edge>& high) {
  sim::LinkModel m;
  m.range_low = 30;
  m.range_high = 90;
  const std::size_t n = energies.size() + 1;
  m.nodes.resize(n);
  for (NodeId i = 0; i < n; ++i) {
    m.nodes[i].id = i;
    m.nodes[i].pos = {static_cast<double>(i), 0.0};
    m.nodes[i].e_initial = i == 0 ? 0.0 : energies[i - 1];
  }
  m.low.assign(n, {});
  m.high.assign(n, {});
  auto add = [](std::vector<std::vector<sim::Link>>& adj, const Edge& e) {
    adj[e.a].push_back({e.b, e.ab});
    adj[e.b].push_back({e.a, e.ba});
  };
  for (const auto& e : low) add(m.low, e);
  for (const auto& e : high) add(m.high, e);
  for (auto* adj : {&m.low, &m.high}) {
    for (auto& out : *adj) std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.dst < y.dst; });
  }
  m.refresh_connectivity();
  return m;
}

// Lossless control plane, free radio, a fixed number of report periods.
inline sim::SimConfig quiet_config(std::uint32_t sensors, std::uint32_t report_rounds = 1) {
  sim::SimConfig c;
  c.topology.node_count = sensors;
  c.reliable_control = true;
  c.report_rounds = report_rounds;
  c.energy.tx_low = 0;
  c.energy.tx_high = 0;
  c.energy.rx = 0;
  c.energy.idle_per_second = 0;
  return c;
}

inline sim::RunResult run_model(const sim::SimConfig& cfg, const sim::LinkModel& model) { return sim::run(cfg, model); }

// Pure-step driver for one node.
struct Stepper {
  protocol::ProtocolConfig cfg;
  protocol::NodeState state;
  std::vector<protocol::Action> last;

  const std::vector<protocol::Action>& feed(SimTime now, decltype(protocol::Event::body) body) {
    auto r = protocol::step(cfg, state, protocol::Event{now, std::move(body)});
    state = std::move(r.state);
    last = std::move(r.actions);
    return last;
  }

  void timer(SimTime now, protocol::TimerKind kind, std::uint32_t arg = 0) {
    feed(now, protocol::event::Timer{kind, state.epoch, arg});
  }

  void receive(SimTime now, NodeId src, Payload body, Power p = Power::low, std::optional<NodeId> dst = std::nullopt) {
    feed(now, protocol::event::MsgIn{Message{src, dst, state.round, std::move(body)}, p});
  }

  template <typename T>
  [[nodiscard]] std::vector<T> of() const {
    std::vector<T> out;
    for (const auto& a : last) {
      if (const auto* x = std::get_if<T>(&a)) out.push_back(*x);
    }
    return out;
  }

  [[nodiscard]] std::vector<protocol::action::Send> sends(MsgKind kind) const {
    std::vector<protocol::action::Send> out;
    for (const auto& s : of<protocol::action::Send>()) {
      if (s.msg.kind() == kind) out.push_back(s);
    }
    return out;
  }

  [[nodiscard]] std::optional<protocol::NodeStatus> new_status() const {
    std::optional<protocol::NodeStatus> st;
    for (const auto& c : of<protocol::action::StatusChange>()) st = c.to;
    return st;
  }
};

}  // namespace testsupport
