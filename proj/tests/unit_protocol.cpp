#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "acdmcp/invariants.hpp"
#include "acdmcp/metric.hpp"
#include "acdmcp/protocol.hpp"
#include "acdmcp/simulator.hpp"
#include "support.hpp"

using namespace acdmcp;
using namespace acdmcp::protocol;
using testsupport::Edge;
using testsupport::Stepper;

namespace {

Stepper started_node(NodeId id, double e_re = 10.0, double e_th = 2.0) {
  Stepper s;
  s.state = make_node(id, e_re, e_th, 1);
  s.feed(0, event::Start{});
  return s;
}

// A fresh node that heard every discovery repeat from `neighbors`, stepped up
// to the close of discovery.
Stepper discovered_node(NodeId id, const std::vector<NodeId>& neighbors, double e_re = 10.0, double e_th = 2.0) {
  Stepper s = started_node(id, e_re, e_th);
  for (std::uint32_t k = 0; k < s.cfg.repeats; ++k) {
    for (NodeId j : neighbors) s.receive(1000, j, msg::Ndm{k});
  }
  s.timer(s.state.scratch.timeline.discovery, TimerKind::discovery_close);
  return s;
}

// Election value from first principles with (rei, ndi, link) weights.
double eq_score(double e_re, double e_th, std::uint32_t degree, std::uint32_t ideg, double mlr, double w_rei,
                double w_ndi, double w_link) {
  double rei = 0.001;
  if (e_re > e_th) rei = std::min(1.0, (e_re - e_th) / e_th);
  double ndi = 0.0;
  if (degree == ideg) {
    ndi = 1.0;
  } else if (degree > ideg) {
    ndi = static_cast<double>(ideg) / degree;
  } else if (degree > 0) {
    ndi = static_cast<double>(degree) / ideg;
  }
  return rei * w_rei + ndi * w_ndi + mlr * w_link;
}

// A node that has already shared its triple and waits for the election timer.
Stepper contender(NodeId id, double e_re, double mlr, std::uint32_t degree, const std::map<NodeId, msg::Share>& shares) {
  Stepper s = started_node(id, e_re);
  auto& st = s.state;
  st.status = NodeStatus::chc;
  st.scratch.own_e_re = e_re;
  st.scratch.own_mlr_in = mlr;
  st.scratch.own_degree = degree;
  st.scratch.own_score = metric::score_for_election({id, e_re, degree, mlr, 1}, st.energy.e_th, s.cfg.ideg, s.cfg.ifs);
  st.scratch.shares = shares;
  return s;
}

std::vector<NodeStatus> statuses(const sim::NetworkSnapshot& snap) {
  std::vector<NodeStatus> out;
  for (const auto& n : snap.nodes) out.push_back(n.status);
  return out;
}

}  // namespace

TEST_SUITE("discovery") {
  TEST_CASE("start broadcasts the discovery message n times at low power") {
    const auto s = started_node(3);
    const auto ndms = s.sends(MsgKind::ndm);
    CHECK(ndms.size() == s.cfg.repeats);
    for (const auto& a : ndms) {
      CHECK(a.power == Power::low);
      CHECK(a.msg.is_broadcast());
      CHECK(a.msg.src == 3);
    }
  }

  TEST_CASE("a discovery message adds the sender and is counted") {
    auto s = started_node(3);
    s.receive(10, 7, msg::Ndm{0});
    s.receive(20, 7, msg::Ndm{1});
    REQUIRE(s.state.neighbors.count(7) == 1);
    CHECK(s.state.neighbors.at(7).link_stats_low.heard == 2);
    CHECK(s.state.degree() == 1);
  }

  TEST_CASE("no neighbors at discovery close makes the node a single-node head") {
    auto s = started_node(3);
    s.timer(s.state.scratch.timeline.discovery, TimerKind::discovery_close);
    CHECK(s.new_status() == NodeStatus::snch);
    CHECK(s.state.status == NodeStatus::snch);
  }

  TEST_CASE("with neighbors the node shares its reception counts") {
    auto s = discovered_node(3, {4, 5});
    CHECK(s.sends(MsgKind::stats).size() == 1);
    CHECK(s.state.status == NodeStatus::uc);
  }
}

TEST_SUITE("transition function") {
  TEST_CASE("step never mutates its input and is deterministic") {
    auto s = discovered_node(3, {4, 5});
    const NodeState before = s.state;
    const Event ev{s.state.scratch.timeline.stats_close, event::Timer{TimerKind::stats_close, s.state.epoch, 0}};
    const auto a = step(s.cfg, before, ev);
    const auto b = step(s.cfg, before, ev);
    CHECK(before == s.state);
    CHECK(a.state == b.state);
    CHECK(a.actions.size() == b.actions.size());
    NodeState in_place = before;
    std::vector<Action> out;
    step_in_place(s.cfg, in_place, ev, out);
    CHECK(in_place == a.state);
    CHECK(out.size() == a.actions.size());
  }

  TEST_CASE("an unknown message is dropped with a diagnostic") {
    auto s = started_node(3);
    const NodeState before = s.state;
    s.receive(10, 9, msg::Unknown{77});
    const auto metrics = s.of<action::EmitMetric>();
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0].kind == MetricKind::dropped_message);
    CHECK(s.of<action::Send>().empty());
    CHECK(s.state.status == before.status);
  }

  TEST_CASE("stale timers from an earlier epoch are ignored") {
    auto s = started_node(3);
    s.feed(5, event::Timer{TimerKind::discovery_close, s.state.epoch + 7, 0});
    CHECK(s.last.empty());
  }
}

TEST_SUITE("election") {
  TEST_CASE("two contenders: the better link average wins") {
    // Equal energy and degree; mean in-link 0.9 against 0.8.
    const auto ifs = metric::ImpactFactors::from_percent(20, 60, 20);
    const double a_score = eq_score(10, 2, 1, 4, 0.9, ifs.rei, ifs.ndi, ifs.link);
    const double b_score = eq_score(10, 2, 1, 4, 0.8, ifs.rei, ifs.ndi, ifs.link);
    REQUIRE(a_score > b_score);

    auto a = contender(1, 10, 0.9, 1, {{2, msg::Share{0.8, 10, 1}}});
    CHECK(a.state.scratch.own_score == doctest::Approx(a_score).epsilon(1e-12));
    a.timer(a.state.scratch.timeline.election, TimerKind::election);
    CHECK(a.state.status == NodeStatus::ch);
    CHECK(a.sends(MsgKind::ich).size() == 1);

    auto b = contender(2, 10, 0.8, 1, {{1, msg::Share{0.9, 10, 1}}});
    b.timer(b.state.scratch.timeline.election, TimerKind::election);
    CHECK(b.state.status == NodeStatus::uc);
    CHECK(b.sends(MsgKind::ich).empty());
  }

  TEST_CASE("a node at or below the threshold never contests") {
    for (double e : {2.0, 1.5}) {
      auto s = discovered_node(3, {4}, e, 2.0);
      s.timer(s.state.scratch.timeline.stats_close, TimerKind::stats_close);
      CHECK(s.state.status == NodeStatus::uc);
      CHECK(s.sends(MsgKind::share).empty());
    }
    auto s = discovered_node(3, {4}, 2.5, 2.0);
    s.timer(s.state.scratch.timeline.stats_close, TimerKind::stats_close);
    CHECK(s.state.status == NodeStatus::chc);
    CHECK(s.sends(MsgKind::share).size() == 1);
  }

  TEST_CASE("all nodes below the threshold: no heads and a degenerate round") {
    auto cfg = testsupport::quiet_config(4, 2);
    cfg.energy.e_th_initial = 20.0;
    const auto model = testsupport::make_model({10, 10, 10, 10}, {{1, 2}, {2, 3}, {3, 4}}, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
    const auto r = testsupport::run_model(cfg, model);
    CHECK(r.metrics.final_ch == 0);
    CHECK(r.metrics.degenerate_rounds >= 1);
    for (NodeId i = 1; i <= 4; ++i) CHECK(r.snapshot.nodes[i].status != NodeStatus::ch);
  }

  TEST_CASE("star whose center has the best value: one head, four members") {
    // Center 1 sits at the ideal degree; leaves have degree one.
    const auto model = testsupport::make_model({10, 10, 10, 10, 10}, {{1, 2}, {1, 3}, {1, 4}, {1, 5}},
                                               {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
    const auto r = testsupport::run_model(testsupport::quiet_config(5), model);
    const auto st = statuses(r.snapshot);
    CHECK(st[1] == NodeStatus::ch);
    for (NodeId i = 2; i <= 5; ++i) {
      CHECK(st[i] == NodeStatus::cm);
      CHECK(r.snapshot.nodes[i].cluster.my_ch == std::optional<NodeId>(1));
    }
    CHECK(r.snapshot.nodes[1].cluster.members == std::set<NodeId>{2, 3, 4, 5});
    // Oracle: the center's value beats every leaf.
    const auto f = metric::ImpactFactors::from_percent(20, 60, 20);
    CHECK(eq_score(10, 2, 4, 4, 1.0, f.rei, f.ndi, f.link) > eq_score(10, 2, 1, 4, 1.0, f.rei, f.ndi, f.link));
  }

  TEST_CASE("a head that hears a better head steps down and joins it") {
    auto s = contender(2, 10, 0.8, 1, {});
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    REQUIRE(s.state.status == NodeStatus::ch);
    s.state.neighbors[5].estimated = true;
    s.state.neighbors[5].estimated_out_lr = 0.9;
    const auto ifs = s.cfg.ifs;
    const double better = eq_score(10, 2, 1, 4, 0.95, ifs.rei, ifs.ndi, ifs.link);
    s.receive(s.state.scratch.timeline.election + 10, 5, msg::Ich{10, 1, 0.95, better, false});
    CHECK(s.state.status == NodeStatus::uc);
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    CHECK(s.state.status == NodeStatus::cm);
    CHECK(s.state.cluster.my_ch == std::optional<NodeId>(5));
  }
}

TEST_SUITE("joining") {
  Stepper waiting_node() {
    auto s = discovered_node(3, {4, 5});
    s.timer(s.state.scratch.timeline.stats_close, TimerKind::stats_close);
    s.state.status = NodeStatus::uc;
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    return s;
  }

  TEST_CASE("a single offer is accepted") {
    auto s = waiting_node();
    s.receive(s.state.scratch.timeline.election + 5, 4, msg::Ich{10, 2, 1.0, 0.9, false});
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    CHECK(s.state.status == NodeStatus::cm);
    CHECK(s.state.cluster.my_ch == std::optional<NodeId>(4));
    REQUIRE(s.sends(MsgKind::cjn).size() == 1);
    CHECK(std::get<msg::Cjn>(s.sends(MsgKind::cjn)[0].msg.body).ch == 4);
  }

  TEST_CASE("equal offers: the better outgoing link wins") {
    auto s = waiting_node();
    // Identical advertised values; the link term alone separates them.
    s.state.neighbors.at(4).estimated_out_lr = 0.8;
    s.state.neighbors.at(5).estimated_out_lr = 0.9;
    const auto t = s.state.scratch.timeline.election + 5;
    s.receive(t, 4, msg::Ich{10, 2, 1.0, 0.9, false});
    s.receive(t, 5, msg::Ich{10, 2, 1.0, 0.9, false});
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    CHECK(s.state.cluster.my_ch == std::optional<NodeId>(5));
  }

  TEST_CASE("a member switches on a strictly better late offer") {
    auto s = waiting_node();
    s.state.neighbors.at(4).estimated_out_lr = 0.6;
    s.state.neighbors.at(5).estimated_out_lr = 0.95;
    const auto t = s.state.scratch.timeline.election + 5;
    s.receive(t, 4, msg::Ich{10, 2, 1.0, 0.9, false});
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    REQUIRE(s.state.cluster.my_ch == std::optional<NodeId>(4));
    s.receive(s.state.scratch.timeline.offer_close + 5, 5, msg::Ich{10, 2, 1.0, 0.9, false});
    CHECK(s.state.cluster.my_ch == std::optional<NodeId>(5));
    REQUIRE(s.sends(MsgKind::cjn).size() == 1);
    CHECK(std::get<msg::Cjn>(s.sends(MsgKind::cjn)[0].msg.body).ch == 5);
    // A worse late offer changes nothing.
    s.receive(s.state.scratch.timeline.offer_close + 6, 4, msg::Ich{10, 2, 1.0, 0.9, false});
    CHECK(s.state.cluster.my_ch == std::optional<NodeId>(5));
    CHECK(s.sends(MsgKind::cjn).empty());
  }

  TEST_CASE("the old head unmarks a member that joined elsewhere") {
    auto s = contender(4, 10, 1.0, 2, {});
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    REQUIRE(s.state.status == NodeStatus::ch);
    s.receive(s.state.scratch.timeline.election + 1, 3, msg::Cjn{4});
    CHECK(s.state.cluster.members.count(3) == 1);
    s.receive(s.state.scratch.timeline.election + 2, 3, msg::Cjn{5});
    CHECK(s.state.cluster.members.count(3) == 0);
  }
}

TEST_SUITE("transitive membership") {
  // Line 1 - 2 - 3 where 1 wins, 2 joins it and 3 hears no head.
  sim::LinkModel chain_model() {
    return testsupport::make_model({10, 6, 6}, {{1, 2}, {2, 3}}, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}, {1, 3}});
  }

  sim::SimConfig chain_config() {
    auto cfg = testsupport::quiet_config(3);
    cfg.energy.e_th_initial = 5.0;
    return cfg;
  }

  TEST_CASE("a node that hears no head becomes a second-level member through a member") {
    const auto r = testsupport::run_model(chain_config(), chain_model());
    const auto& n = r.snapshot.nodes;
    REQUIRE(n[1].status == NodeStatus::ch);
    REQUIRE(n[2].status == NodeStatus::cm);
    CHECK(n[3].status == NodeStatus::tcm);
    CHECK(n[3].cluster.depth == 2);
    CHECK(n[3].cluster.my_tch == std::optional<NodeId>(2));
    CHECK(n[2].is_tch);
    CHECK(n[2].cluster.sub_neighbors == std::set<NodeId>{3});
  }

  TEST_CASE("offer evaluation favours the shorter reliable chain") {
    // Via a member: 0.9 * 0.9 over two hops; via a deeper member: 0.95^3 over three hops.
    const double elr_a = 0.9 * 0.9;
    const double elr_b = 0.95 * 0.95 * 0.95;
    const double tail_a = elr_a * 0.25 + (1.0 / 2) * 0.25;
    const double tail_b = elr_b * 0.25 + (1.0 / 3) * 0.25;
    CHECK(tail_a == doctest::Approx(0.3275).epsilon(1e-4));
    CHECK(tail_b == doctest::Approx(0.2976).epsilon(1e-3));

    Stepper s = discovered_node(3, {6, 7});
    s.cfg.ifs = metric::ImpactFactors{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
    s.cfg.if_zeta = 0.25;  // multi-hop weights (0.25, 0.25, 0.25, 0.25)
    s.timer(s.state.scratch.timeline.stats_close, TimerKind::stats_close);
    s.state.status = NodeStatus::uc;
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    REQUIRE(s.state.scratch.searching);
    s.state.neighbors.at(6).estimated_out_lr = 0.9;
    s.state.neighbors.at(7).estimated_out_lr = 0.95;
    const SimTime t = s.state.scratch.timeline.offer_close + 10;
    // Equal energy and degree so only the last two terms differ.
    s.receive(t, 6, msg::Tcmo{1, 1, 0.9, 10, 4, {6, 1}}, Power::low, 3);
    s.receive(t, 7, msg::Tcmo{1, 2, 0.95 * 0.95, 10, 4, {7, 8, 1}}, Power::low, 3);
    s.timer(t + s.state.scratch.timeline.share_window, TimerKind::search_close, 0);
    CHECK(s.state.status == NodeStatus::tcm);
    CHECK(s.state.cluster.my_tch == std::optional<NodeId>(6));
    CHECK(s.state.cluster.depth == 2);
    CHECK(s.state.cluster.elr_to_ch == doctest::Approx(elr_a));
  }

  TEST_CASE("a former transitive head unmarks a node that chose another") {
    Stepper s = started_node(6);
    s.state.status = NodeStatus::cm;
    s.state.cluster.my_ch = 1;
    s.state.cluster.depth = 1;
    s.state.cluster.sub_neighbors = {3};
    s.state.is_tch = true;
    s.receive(100, 3, msg::Tcjn{7});
    CHECK(s.state.cluster.sub_neighbors.empty());
    CHECK_FALSE(s.state.is_tch);
  }

  TEST_CASE("search gives up after the retry budget") {
    Stepper s = discovered_node(3, {6});
    s.timer(s.state.scratch.timeline.stats_close, TimerKind::stats_close);
    s.state.status = NodeStatus::uc;
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    s.timer(s.state.scratch.timeline.offer_close, TimerKind::offer_close);
    std::uint32_t scj = static_cast<std::uint32_t>(s.sends(MsgKind::scj).size());
    for (std::uint32_t attempt = 0; attempt <= s.cfg.scj_retries; ++attempt) {
      s.timer(s.state.scratch.timeline.offer_close + (attempt + 1) * 1000000, TimerKind::search_close, attempt);
      scj += static_cast<std::uint32_t>(s.sends(MsgKind::scj).size());
    }
    CHECK(scj == s.cfg.scj_retries + 1);
    CHECK(s.state.status == NodeStatus::snch);
  }
}

TEST_SUITE("inter-cluster routes") {
  TEST_CASE("a head in high-power range of the sink routes to it in one hop") {
    const auto model = testsupport::make_model({10, 9}, {{1, 2}}, {{0, 1}, {1, 2}});
    const auto r = testsupport::run_model(testsupport::quiet_config(2), model);
    const auto& n = r.snapshot.nodes[1];
    REQUIRE(n.status == NodeStatus::ch);
    CHECK(n.routing.dsn_high == std::optional<NodeId>(0));
    CHECK(n.routing.hts_high == 1);
    const auto route = n.routing.effective_route(true);
    REQUIRE(route);
    CHECK(route->power == Power::high);
  }

  TEST_CASE("a line of heads counts hops away from the sink") {
    // Heads 1, 2, 3 each with a private member 4, 5, 6; only head 1 hears the sink.
    const auto model = testsupport::make_model({10, 10, 10, 9, 9, 9}, {{1, 4}, {2, 5}, {3, 6}},
                                               {{0, 1}, {1, 2}, {2, 3}, {1, 4}, {2, 5}, {3, 6}});
    const auto r = testsupport::run_model(testsupport::quiet_config(6), model);
    const auto& n = r.snapshot.nodes;
    for (NodeId h : {1u, 2u, 3u}) REQUIRE(n[h].status == NodeStatus::ch);
    CHECK(n[1].routing.hts_high == 1);
    CHECK(n[2].routing.dsn_high == std::optional<NodeId>(1));
    CHECK(n[2].routing.hts_high == 2);
    CHECK(n[3].routing.dsn_high == std::optional<NodeId>(2));
    CHECK(n[3].routing.hts_high == 3);
    CHECK(n[1].routing.usn.count(2) == 1);
  }

  TEST_CASE("a head hearing the sink at both powers uses low power") {
    const auto model = testsupport::make_model({10, 9}, {{1, 2}, {0, 1}}, {{0, 1}, {1, 2}});
    const auto r = testsupport::run_model(testsupport::quiet_config(2), model);
    const auto route = r.snapshot.nodes[1].routing.effective_route(true);
    REQUIRE(route);
    CHECK(route->next == kSinkId);
    CHECK(route->power == Power::low);
  }
}

TEST_SUITE("reporting") {
  TEST_CASE("a transitive head sends one upward message carrying its subtree") {
    // 1 heads; 2 joins it; 3 and 4 hear only 2 and chain through it.
    const auto model = testsupport::make_model({10, 6, 6, 6}, {{1, 2}, {2, 3}, {2, 4}},
                                               {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {2, 3}, {2, 4}});
    auto cfg = testsupport::quiet_config(4, 5);
    cfg.energy.e_th_initial = 5.0;
    cfg.protocol.ifs = metric::ImpactFactors::from_percent(60, 20, 20);
    const auto r = testsupport::run_model(cfg, model);
    const auto& n = r.snapshot.nodes;
    REQUIRE(n[1].status == NodeStatus::ch);
    REQUIRE(n[2].is_tch);
    REQUIRE(n[2].cluster.sub_neighbors == std::set<NodeId>{3, 4});
    std::size_t data_from_2 = 0;
    for (const auto& rec : r.log.records) {
      if (rec.kind != sim::LogKind::tx || rec.node != 2 || rec.msg != MsgKind::data) continue;
      ++data_from_2;
      CHECK(rec.reports.size() == 3);
    }
    CHECK(data_from_2 == 5);
    CHECK(r.metrics.dtsr == 1.0);
  }

  TEST_CASE("perfect links deliver every report") {
    const auto model =
        testsupport::make_model({10, 9, 9}, {{1, 2}, {1, 3}}, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}});
    const auto r = testsupport::run_model(testsupport::quiet_config(3, 20), model);
    REQUIRE(r.metrics.dtsr_defined);
    CHECK(r.metrics.msgs_generated == 60);
    CHECK(r.metrics.dtsr == 1.0);
    CHECK(r.metrics.rounds == 1);
  }

  TEST_CASE("members that stop hearing their head call for a new round") {
    // Members reach the head only at low power while it talks to the sink at high power.
    const auto model = testsupport::make_model({10, 9, 9}, {{1, 2}, {1, 3}}, {{0, 1}, {0, 2}, {0, 3}});
    auto cfg = testsupport::quiet_config(3, 20);
    const auto r = testsupport::run_model(cfg, model);
    CHECK(r.metrics.rounds >= 2);
    CHECK(r.metrics.reclusters_called >= 1);
    std::size_t calls = 0;
    for (const auto& rec : r.log.records) {
      if (rec.kind == sim::LogKind::metric && rec.code == static_cast<std::uint32_t>(MetricKind::recluster_called)) {
        ++calls;
        CHECK((rec.node == 2 || rec.node == 3));
        // The call comes only after silence_periods report periods of quiet.
        CHECK(rec.time > cfg.protocol.silence_periods * cfg.protocol.report_period);
      }
    }
    CHECK(calls >= 1);
  }

  TEST_CASE("a half-reliable member link delivers about half of that member's reports") {
    // Member 2 reaches head 1 with probability 0.5; everything else is perfect.
    const auto model = testsupport::make_model({10, 9}, {{1, 2, 1.0, 0.5}, {0, 1}}, {{0, 1}, {0, 2}, {1, 2}});
    auto cfg = testsupport::quiet_config(2, 1000);
    cfg.protocol.silence_periods = 1000000;  // keep one clustering for the whole run
    const auto r = testsupport::run_model(cfg, model);
    std::uint64_t generated = 0, delivered = 0;
    for (const auto& rec : r.log.records) {
      if (rec.kind != sim::LogKind::metric) continue;
      for (const auto& id : rec.reports) {
        if (id.origin != 2) continue;
        if (rec.code == static_cast<std::uint32_t>(MetricKind::report_generated)) ++generated;
        if (rec.code == static_cast<std::uint32_t>(MetricKind::report_delivered) && rec.node == kSinkId) ++delivered;
      }
    }
    REQUIRE(generated >= 990);
    const double sigma = std::sqrt(generated * 0.25);
    CHECK(std::abs(static_cast<double>(delivered) - 0.5 * generated) <= 5 * sigma);
  }
}

TEST_SUITE("reclustering") {
  TEST_CASE("threshold decays by the configured fraction each round") {
    ProtocolConfig cfg;
    cfg.e_th_initial = 2.0;
    cfg.e_th_decay = 0.1;
    CHECK(cfg.e_th_for_round(1) == doctest::Approx(2.0));
    CHECK(cfg.e_th_for_round(2) == doctest::Approx(1.8));
    CHECK(cfg.e_th_for_round(3) == doctest::Approx(1.62));
    for (std::uint32_t r = 1; r < 200; ++r) CHECK(cfg.e_th_for_round(r) > 0.0);
  }

  TEST_CASE("a head below threshold calls for reclustering and the new round uses the decayed threshold") {
    auto s = contender(4, 10, 1.0, 2, {});
    s.cfg.e_th_initial = 2.0;
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    REQUIRE(s.state.status == NodeStatus::ch);
    s.state.energy.e_re = 1.5;
    s.feed(100 * kSecond, event::EnergyBelowThreshold{});
    const auto rc = s.sends(MsgKind::recluster);
    REQUIRE(rc.size() == 1);
    CHECK(rc[0].power == Power::high);
    CHECK(std::get<msg::Recluster>(rc[0].msg.body).round == 2);
    const auto timers = s.of<action::SetTimer>();
    REQUIRE(timers.size() == 1);
    s.feed(100 * kSecond + timers[0].delay, event::Timer{TimerKind::round_start, s.state.epoch, 2});
    CHECK(s.state.round == 2);
    CHECK(s.state.energy.e_th == doctest::Approx(2.0 * 0.9));
    // A second alarm in the same round does nothing.
    s.state.status = NodeStatus::ch;
    s.state.threshold_alarm = true;
    s.feed(101 * kSecond, event::EnergyBelowThreshold{});
    CHECK(s.sends(MsgKind::recluster).empty());
  }

  TEST_CASE("a head above threshold ignores the alarm") {
    auto s = contender(4, 10, 1.0, 2, {});
    s.timer(s.state.scratch.timeline.election, TimerKind::election);
    s.feed(100 * kSecond, event::EnergyBelowThreshold{});
    CHECK(s.sends(MsgKind::recluster).empty());
  }
}

TEST_SUITE("protocol properties") {
  TEST_CASE("reliable control: quiescent structure holds on random topologies") {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
      CAPTURE(seed);
      sim::SimConfig cfg;
      cfg.seed = seed;
      cfg.topology.node_count = 8 + static_cast<std::uint32_t>(seed % 25);
      cfg.reliable_control = true;
      cfg.report_rounds = 2;
      const auto r = sim::run(cfg);
      const auto report = sim::check_all(r.snapshot, true);
      CHECK_MESSAGE(report.ok(), report.summary());
      // No two low-power neighbors both remain heads.
      const auto model = sim::resolve_topology(cfg);
      for (NodeId i = 1; i < model.size(); ++i) {
        if (r.snapshot.nodes[i].status != NodeStatus::ch) continue;
        for (const auto& l : model.low[i]) {
          if (l.dst != kSinkId) CHECK(r.snapshot.nodes[l.dst].status != NodeStatus::ch);
        }
      }
      CHECK(r.metrics.ch_below_threshold == 0);
    }
  }

  TEST_CASE("replaying a run reproduces the final state exactly") {
    sim::SimConfig cfg;
    cfg.seed = 5;
    cfg.report_rounds = 10;
    const auto a = sim::run(cfg);
    const auto b = sim::run(cfg);
    CHECK(a.snapshot.nodes == b.snapshot.nodes);
    CHECK(a.log == b.log);
  }
}
