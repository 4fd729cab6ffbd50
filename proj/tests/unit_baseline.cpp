#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <vector>

#include "acdmcp/baseline.hpp"
#include "acdmcp/invariants.hpp"
#include "acdmcp/rng.hpp"
#include "acdmcp/simulator.hpp"
#include "support.hpp"

using namespace acdmcp;
using protocol::NodeStatus;

namespace {

std::vector<NodeId> ids(std::initializer_list<NodeId> l) { return l; }

std::map<NodeId, std::set<NodeId>> sensor_adjacency(const sim::LinkModel& model) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (NodeId i = 1; i < model.size(); ++i) {
    adj[i];
    for (const auto& l : model.low[i]) {
      if (l.dst != kSinkId) adj[i].insert(l.dst);
    }
  }
  return adj;
}

// Nodes that out-number every sensor neighbor; these must head clusters.
std::set<NodeId> local_maxima(const std::map<NodeId, std::set<NodeId>>& adj) {
  std::set<NodeId> out;
  for (const auto& [v, nbrs] : adj) {
    if (!nbrs.empty() && *nbrs.rbegin() < v) out.insert(v);
  }
  return out;
}

sim::SimConfig baseline_config(std::uint64_t seed, std::uint32_t sensors) {
  sim::SimConfig cfg;
  cfg.seed = seed;
  cfg.topology.node_count = sensors;
  cfg.reliable_control = true;
  cfg.report_rounds = 1;
  cfg.protocol.variant = protocol::Variant::id_baseline;
  return cfg;
}

std::vector<NodeStatus> statuses(const sim::RunResult& r) {
  std::vector<NodeStatus> out;
  for (const auto& n : r.snapshot.nodes) out.push_back(n.status);
  return out;
}

std::vector<std::optional<NodeId>> heads_of(const sim::RunResult& r) {
  std::vector<std::optional<NodeId>> out;
  for (const auto& n : r.snapshot.nodes) out.push_back(n.cluster.my_ch);
  return out;
}

}  // namespace

TEST_SUITE("baseline decisions") {
  TEST_CASE("election: highest id among neighbors") {
    CHECK(baseline::baseline_elect(5, ids({1, 2, 4})));
    CHECK_FALSE(baseline::baseline_elect(5, ids({1, 7})));
    CHECK(baseline::baseline_elect(1, {}));
  }

  TEST_CASE("join: highest advertising id") {
    CHECK(baseline::baseline_choose_ch(ids({3, 9, 4})) == std::optional<NodeId>(9));
    CHECK_FALSE(baseline::baseline_choose_ch({}).has_value());
  }

  TEST_CASE("orphan fallback mirrors the election rule") {
    CHECK(baseline::baseline_orphan_resolve(4, ids({2, 3})));
    CHECK_FALSE(baseline::baseline_orphan_resolve(4, ids({6})));
    CHECK(baseline::baseline_orphan_resolve(4, {}));
  }

  TEST_CASE("route: fewest hops then highest id, unreachable skipped") {
    const std::vector<baseline::RouteCandidate> c{{3, 2}, {8, 3}, {5, 2}, {9, 0}};
    const auto pick = baseline::baseline_choose_route(c);
    REQUIRE(pick);
    CHECK(pick->id == 5);
    CHECK(pick->hts == 2);
    const std::vector<baseline::RouteCandidate> none{{1, 0}};
    CHECK_FALSE(baseline::baseline_choose_route(none).has_value());
  }

  TEST_CASE("route choice matches a brute-force minimum") {
    Rng rng(77);
    for (int trial = 0; trial < 2000; ++trial) {
      std::vector<baseline::RouteCandidate> c;
      const auto k = rng.below(6);
      std::set<NodeId> used;
      for (std::uint64_t i = 0; i < k; ++i) {
        const auto id = static_cast<NodeId>(1 + rng.below(20));
        if (!used.insert(id).second) continue;
        c.push_back({id, static_cast<std::uint32_t>(rng.below(4))});
      }
      std::optional<std::pair<std::uint32_t, NodeId>> best;  // (hts, -id) minimum
      for (const auto& x : c) {
        if (x.hts == 0) continue;
        if (!best || x.hts < best->first || (x.hts == best->first && x.id > best->second)) best = {{x.hts, x.id}};
      }
      const auto pick = baseline::baseline_choose_route(c);
      REQUIRE(pick.has_value() == best.has_value());
      if (pick) {
        CHECK(pick->id == best->second);
        CHECK(pick->hts == best->first);
      }
    }
  }
}

TEST_SUITE("baseline clustering") {
  TEST_CASE("line 1-2-3-4: the top end heads first and orphans fall back") {
    const auto model = testsupport::make_model({10, 10, 10, 10}, {{1, 2}, {2, 3}, {3, 4}},
                                               {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}, {2, 3}, {3, 4}});
    auto cfg = testsupport::quiet_config(4);
    cfg.protocol.variant = protocol::Variant::id_baseline;
    const auto r = testsupport::run_model(cfg, model);
    const auto& n = r.snapshot.nodes;
    CHECK(n[4].status == NodeStatus::ch);
    CHECK(n[3].status == NodeStatus::cm);
    CHECK(n[3].cluster.my_ch == std::optional<NodeId>(4));
    CHECK(n[2].status == NodeStatus::ch);
    CHECK(n[1].status == NodeStatus::cm);
    CHECK(n[1].cluster.my_ch == std::optional<NodeId>(2));
    CHECK(r.metrics.final_tcm == 0);
  }

  TEST_CASE("route formation prefers the higher id among equal hop counts") {
    // Heads 4, 5, 6 with private members 1, 2, 3; 6 reaches the sink only through 4 or 5.
    const auto model = testsupport::make_model(
        {10, 10, 10, 10, 10, 10}, {{1, 4}, {2, 5}, {3, 6}},
        {{0, 4}, {0, 5}, {4, 6}, {5, 6}, {1, 4}, {2, 5}, {3, 6}});
    auto cfg = testsupport::quiet_config(6);
    cfg.protocol.variant = protocol::Variant::id_baseline;
    const auto r = testsupport::run_model(cfg, model);
    const auto& n = r.snapshot.nodes;
    for (NodeId h : {4u, 5u, 6u}) REQUIRE(n[h].status == NodeStatus::ch);
    CHECK(n[6].routing.dsn_high == std::optional<NodeId>(5));
    CHECK(n[6].routing.hts_high == 2);
  }

  TEST_CASE("local id maxima always head and their neighbors join the highest one") {
    for (std::uint64_t seed = 1; seed <= 80; ++seed) {
      CAPTURE(seed);
      const auto cfg = baseline_config(seed, 6 + static_cast<std::uint32_t>(seed % 20));
      const auto model = sim::resolve_topology(cfg);
      const auto adj = sensor_adjacency(model);
      const auto maxima = local_maxima(adj);
      const auto r = sim::run(cfg, model);
      const auto& n = r.snapshot.nodes;
      for (NodeId v : maxima) CHECK(n[v].status == NodeStatus::ch);
      for (const auto& [v, nbrs] : adj) {
        if (maxima.count(v)) continue;
        std::optional<NodeId> best;
        for (NodeId u : nbrs) {
          if (maxima.count(u)) best = std::max(best.value_or(0), u);
        }
        if (!best) continue;
        CHECK(n[v].status == NodeStatus::cm);
        CHECK(n[v].cluster.my_ch == best);
      }
      const auto report = sim::check_all(r.snapshot, true);
      CHECK_MESSAGE(report.ok(), report.summary());
    }
  }

  TEST_CASE("clustering ignores energy and weights entirely") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
      CAPTURE(seed);
      auto cfg = baseline_config(seed, 15);
      const auto model = sim::resolve_topology(cfg);
      const auto reference = sim::run(cfg, model);

      Rng rng(seed * 31 + 7);
      auto energies = sim::LinkModel(model);
      std::vector<double> pool(model.sensor_count());
      std::iota(pool.begin(), pool.end(), 3.0);
      for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
      for (NodeId i = 1; i < energies.size(); ++i) energies.nodes[i].e_initial = pool[i - 1];
      auto shuffled_cfg = cfg;
      shuffled_cfg.protocol.ifs = metric::ImpactFactors::from_percent(60, 20, 20);
      const auto shuffled = sim::run(shuffled_cfg, energies);

      CHECK(statuses(shuffled) == statuses(reference));
      CHECK(heads_of(shuffled) == heads_of(reference));
    }
  }

  TEST_CASE("the proposed protocol does react to energy") {
    // Sanity check on the previous case: the same shuffles move ACDMCP heads.
    std::size_t changed = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      auto cfg = baseline_config(seed, 15);
      cfg.protocol.variant = protocol::Variant::acdmcp;
      cfg.protocol.ifs = metric::ImpactFactors::from_percent(60, 20, 20);
      cfg.energy.e_th_initial = 2.0;
      const auto model = sim::resolve_topology(cfg);
      const auto a = sim::run(cfg, model);
      auto m2 = model;
      std::vector<double> pool(model.sensor_count());
      std::iota(pool.begin(), pool.end(), 2.5);
      Rng rng(seed);
      for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);
      for (NodeId i = 1; i < m2.size(); ++i) m2.nodes[i].e_initial = pool[i - 1];
      const auto b = sim::run(cfg, m2);
      if (statuses(a) != statuses(b)) ++changed;
    }
    CHECK(changed > 0);
  }
}
