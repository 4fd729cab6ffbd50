#include "acdmcp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <stdexcept>
#include <thread>
#include <tuple>
#include <unordered_set>

#include "acdmcp/invariants.hpp"
#include "acdmcp/link_model.hpp"
#include "acdmcp/stats.hpp"

namespace acdmcp::harness {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) { throw std::invalid_argument(key + ": " + why); }

std::uint64_t report_key(const ReportId& r) { return (static_cast<std::uint64_t>(r.origin) << 32) | r.seq; }

double seconds(SimTime t) { return static_cast<double>(t) / static_cast<double>(kSecond); }

using Extractor = double (*)(const CellResult&);

struct Column {
  const char* name;
  Extractor get;
};

// Metric columns, in CSV order.
const std::vector<Column>& columns() {
  static const std::vector<Column> cols = {
      {"dtsr", [](const CellResult& r) { return r.metrics.dtsr; }},
      {"msgs_generated", [](const CellResult& r) { return static_cast<double>(r.metrics.msgs_generated); }},
      {"msgs_at_sink", [](const CellResult& r) { return static_cast<double>(r.metrics.msgs_at_sink); }},
      {"lifetime_ms",
       [](const CellResult& r) {
         return r.metrics.lifetime ? static_cast<double>(*r.metrics.lifetime / kMillisecond) : -1.0;
       }},
      {"msgs_at_sink_before_disconnect",
       [](const CellResult& r) { return static_cast<double>(r.metrics.msgs_at_sink_before_disconnect); }},
      {"rounds", [](const CellResult& r) { return static_cast<double>(r.metrics.rounds); }},
      {"round1_control_tx_per_node", [](const CellResult& r) { return r.metrics.control_tx_per_node(1); }},
      {"round2_control_tx_per_node", [](const CellResult& r) { return r.metrics.control_tx_per_node(2); }},
      {"round1_control_energy_per_node", [](const CellResult& r) { return r.metrics.control_energy_per_node(1); }},
      {"round2_control_energy_per_node", [](const CellResult& r) { return r.metrics.control_energy_per_node(2); }},
      {"control_tx", [](const CellResult& r) { return static_cast<double>(r.metrics.control_tx); }},
      {"data_tx", [](const CellResult& r) { return static_cast<double>(r.metrics.data_tx); }},
      {"degenerate_rounds", [](const CellResult& r) { return static_cast<double>(r.metrics.degenerate_rounds); }},
      {"reclusters", [](const CellResult& r) { return static_cast<double>(r.metrics.reclusters_called); }},
      {"unreachable_heads", [](const CellResult& r) { return static_cast<double>(r.metrics.unreachable_heads); }},
      {"final_ch", [](const CellResult& r) { return static_cast<double>(r.metrics.final_ch); }},
      {"final_cm", [](const CellResult& r) { return static_cast<double>(r.metrics.final_cm); }},
      {"final_tcm", [](const CellResult& r) { return static_cast<double>(r.metrics.final_tcm); }},
      {"final_snch", [](const CellResult& r) { return static_cast<double>(r.metrics.final_snch); }},
      {"dead_nodes", [](const CellResult& r) { return static_cast<double>(r.metrics.dead_nodes); }},
      {"consistency_ratio", [](const CellResult& r) { return r.consistency_ratio; }},
  };
  return cols;
}

const Column& column(const std::string& name) {
  for (const auto& c : columns()) {
    if (name == c.name) return c;
  }
  fail("experiment.metrics", "unknown metric '" + name + "'");
}

std::vector<std::string> selected(const std::vector<std::string>& metrics) {
  return metrics.empty() ? metric_columns() : metrics;
}

std::string csv_ifs(const metric::ImpactFactors& f) { return f.label(); }

void write_value(std::ostream& os, double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
    os << static_cast<long long>(v);
  } else {
    os << sim::format_double(v);
  }
}

}  // namespace

std::vector<metric::ImpactFactors> default_if_combos() {
  return {metric::ImpactFactors::from_percent(20, 60, 20), metric::ImpactFactors::from_percent(33, 34, 33),
          metric::ImpactFactors::from_percent(60, 20, 20), metric::ImpactFactors::from_percent(20, 20, 60)};
}

void ExperimentSpec::validate() const {
  if (protocols.empty()) fail("experiment.protocols", "must not be empty");
  if (sizes.empty()) fail("experiment.sizes", "must not be empty");
  if (ifs.empty()) fail("experiment.ifs", "must not be empty");
  if (seeds.empty()) fail("experiment.seeds", "must not be empty");
  for (auto n : sizes) {
    if (n == 0) fail("experiment.sizes", "sizes must be at least 1");
  }
  for (const auto& f : ifs) {
    if (!f.valid_three_term()) fail("experiment.ifs", "weights " + f.label() + " must sum to 100");
  }
  for (const auto& m : metrics) column(m);
  base.validate();
}

std::size_t ExperimentSpec::cell_count() const { return protocols.size() * sizes.size() * ifs.size() * seeds.size(); }

std::vector<Cell> expand(const ExperimentSpec& spec) {
  std::vector<Cell> cells;
  cells.reserve(spec.cell_count());
  for (auto p : spec.protocols) {
    for (auto n : spec.sizes) {
      for (const auto& f : spec.ifs) {
        for (auto s : spec.seeds) cells.push_back(Cell{cells.size(), p, n, f, s});
      }
    }
  }
  return cells;
}

sim::SimConfig cell_config(const ExperimentSpec& spec, const Cell& cell) {
  sim::SimConfig c = spec.base;
  c.seed = cell.seed;
  c.topology.node_count = cell.size;
  c.protocol.variant = cell.protocol;
  c.protocol.ifs = cell.ifs;
  c.record_log = false;
  return c;
}

CellResult run_cell(const ExperimentSpec& spec, const Cell& cell) {
  CellResult r;
  r.cell = cell;
  try {
    const auto cfg = cell_config(spec, cell);
    sim::Simulator simulator(cfg);
    simulator.run();
    r.metrics = simulator.metrics();
    r.consistency_ratio = sim::check_all(simulator.snapshot(), false).consistency_ratio();
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned jobs, const CellCallback& on_commit) {
  spec.validate();
  const auto cells = expand(spec);
  ExperimentResult out;
  out.cells.resize(cells.size());
  std::vector<bool> done(cells.size(), false);
  std::size_t next_commit = 0;
  std::mutex mu;
  std::atomic<std::size_t> next_cell{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next_cell.fetch_add(1);
      if (i >= cells.size()) return;
      CellResult r = run_cell(spec, cells[i]);
      std::lock_guard lock(mu);
      out.cells[i] = std::move(r);
      done[i] = true;
      while (next_commit < cells.size() && done[next_commit]) {
        if (on_commit) on_commit(out.cells[next_commit]);
        ++next_commit;
      }
    }
  };

  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(cells.size(), 1))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  out.aggregates = aggregate(out.cells);
  return out;
}

std::vector<Aggregate> aggregate(const std::vector<CellResult>& cells) {
  // Groups keep first-appearance order.
  std::vector<Aggregate> groups;
  std::vector<std::vector<const CellResult*>> members;
  for (const auto& r : cells) {
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (groups[g].protocol == r.cell.protocol && groups[g].size == r.cell.size && groups[g].ifs == r.cell.ifs) break;
    }
    if (g == groups.size()) {
      Aggregate a;
      a.protocol = r.cell.protocol;
      a.size = r.cell.size;
      a.ifs = r.cell.ifs;
      groups.push_back(a);
      members.emplace_back();
    }
    members[g].push_back(&r);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& a = groups[g];
    std::vector<double> dtsr, life, before, r1, r2, e1, e2;
    // Seed order must not matter: sort by seed before reducing.
    auto rows = members[g];
    std::sort(rows.begin(), rows.end(), [](const CellResult* x, const CellResult* y) { return x->cell.seed < y->cell.seed; });
    for (const auto* r : rows) {
      ++a.runs;
      if (!r->ok) {
        ++a.failures;
        continue;
      }
      const auto& m = r->metrics;
      if (m.dtsr_defined) dtsr.push_back(m.dtsr);
      if (m.lifetime) {
        life.push_back(seconds(*m.lifetime));
      } else {
        ++a.censored;
      }
      before.push_back(static_cast<double>(m.msgs_at_sink_before_disconnect));
      r1.push_back(m.control_tx_per_node(1));
      r2.push_back(m.control_tx_per_node(2));
      e1.push_back(m.control_energy_per_node(1));
      e2.push_back(m.control_energy_per_node(2));
    }
    const auto sd = stats::summarize(dtsr);
    a.dtsr_mean = sd.mean;
    a.dtsr_stddev = sd.stddev;
    const auto sl = stats::summarize(life);
    a.lifetime_s_mean = sl.mean;
    a.lifetime_s_stddev = sl.stddev;
    a.msgs_before_disconnect_mean = stats::summarize(before).mean;
    a.round1_control_tx_mean = stats::summarize(r1).mean;
    a.round2_control_tx_mean = stats::summarize(r2).mean;
    a.round1_control_energy_mean = stats::summarize(e1).mean;
    a.round2_control_energy_mean = stats::summarize(e2).mean;
  }
  return groups;
}

// ---- log analyses ----

DtsrResult compute_dtsr(const sim::EventLog& log) {
  std::unordered_set<std::uint64_t> generated;
  std::unordered_set<std::uint64_t> delivered;
  for (const auto& r : log.records) {
    if (r.kind != sim::LogKind::metric) continue;
    const auto kind = static_cast<protocol::MetricKind>(r.code);
    if (kind == protocol::MetricKind::report_generated) {
      for (const auto& id : r.reports) generated.insert(report_key(id));
    } else if (kind == protocol::MetricKind::report_delivered && r.node == kSinkId) {
      for (const auto& id : r.reports) delivered.insert(report_key(id));
    }
  }
  DtsrResult out;
  out.generated = generated.size();
  for (auto k : delivered) {
    if (generated.count(k)) ++out.delivered;
  }
  out.defined = out.generated > 0;
  out.dtsr = out.defined ? static_cast<double>(out.delivered) / static_cast<double>(out.generated) : 0.0;
  return out;
}

LifetimeResult compute_lifetime(const sim::EventLog& log, const sim::NetworkSnapshot& snapshot) {
  LifetimeResult out;
  for (const auto& r : log.records) {
    if (r.kind == sim::LogKind::disconnect) {
      out.lifetime = r.time;
      out.censored = false;
      break;
    }
  }
  const SimTime cutoff = out.lifetime.value_or(snapshot.time);
  std::unordered_set<std::uint64_t> generated;
  std::unordered_set<std::uint64_t> delivered;
  for (const auto& r : log.records) {
    if (r.kind != sim::LogKind::metric || r.time > cutoff) continue;
    const auto kind = static_cast<protocol::MetricKind>(r.code);
    if (kind == protocol::MetricKind::report_generated) {
      for (const auto& id : r.reports) generated.insert(report_key(id));
    } else if (kind == protocol::MetricKind::report_delivered && r.node == kSinkId) {
      for (const auto& id : r.reports) {
        if (generated.count(report_key(id))) delivered.insert(report_key(id));
      }
    }
  }
  out.msgs_at_sink_before_disconnect = delivered.size();
  return out;
}

const RoundOverhead* Overhead::round(std::uint32_t r) const {
  for (const auto& x : rounds) {
    if (x.round == r) return &x;
  }
  return nullptr;
}

Overhead compute_overhead(const sim::EventLog& log, std::uint32_t sensor_count) {
  std::map<std::uint32_t, RoundOverhead> by_round;
  Overhead out;
  for (const auto& r : log.records) {
    if (r.kind != sim::LogKind::tx && r.kind != sim::LogKind::rx) continue;
    if (r.msg == MsgKind::data) continue;
    if (r.kind == sim::LogKind::tx) {
      if (r.node == kSinkId) continue;
      auto& o = by_round[r.round];
      o.round = r.round;
      o.messages += 1;
      o.energy += r.energy;
    } else {
      if (r.peer == kSinkId) continue;
      auto& o = by_round[r.round];
      o.round = r.round;
      o.energy += r.energy;
    }
  }
  const double n = sensor_count ? static_cast<double>(sensor_count) : 1.0;
  for (auto& [round, o] : by_round) {
    o.messages_per_node = static_cast<double>(o.messages) / n;
    o.energy_per_node = sim::from_nano(o.energy) / n;
    out.rounds.push_back(o);
  }
  return out;
}

// ---- output ----

std::vector<std::string> metric_columns() {
  std::vector<std::string> names;
  for (const auto& c : columns()) names.emplace_back(c.name);
  return names;
}

void write_cells_header(std::ostream& os, const std::vector<std::string>& metrics) {
  os << "protocol,size,ifs,seed,ok";
  for (const auto& m : selected(metrics)) os << ',' << m;
  os << ",error\n";
}

void write_cell_row(std::ostream& os, const CellResult& r, const std::vector<std::string>& metrics) {
  os << protocol::to_string(r.cell.protocol) << ',' << r.cell.size << ',' << csv_ifs(r.cell.ifs) << ',' << r.cell.seed
     << ',' << (r.ok ? 1 : 0);
  for (const auto& m : selected(metrics)) {
    os << ',';
    if (r.ok) write_value(os, column(m).get(r));
  }
  os << ',';
  if (!r.ok) {
    std::string e = r.error;
    std::replace(e.begin(), e.end(), ',', ';');
    std::replace(e.begin(), e.end(), '\n', ' ');
    os << e;
  }
  os << '\n';
}

void write_cells_csv(std::ostream& os, const std::vector<CellResult>& cells, const std::vector<std::string>& metrics) {
  write_cells_header(os, metrics);
  for (const auto& r : cells) write_cell_row(os, r, metrics);
}

void write_aggregates_csv(std::ostream& os, const std::vector<Aggregate>& aggregates) {
  os << "protocol,size,ifs,runs,failures,censored,dtsr_mean,dtsr_stddev,lifetime_s_mean,lifetime_s_stddev,"
        "msgs_before_disconnect_mean,round1_control_tx_mean,round2_control_tx_mean,round1_control_energy_mean,"
        "round2_control_energy_mean\n";
  for (const auto& a : aggregates) {
    os << protocol::to_string(a.protocol) << ',' << a.size << ',' << csv_ifs(a.ifs) << ',' << a.runs << ','
       << a.failures << ',' << a.censored;
    for (double v : {a.dtsr_mean, a.dtsr_stddev, a.lifetime_s_mean, a.lifetime_s_stddev, a.msgs_before_disconnect_mean,
                     a.round1_control_tx_mean, a.round2_control_tx_mean, a.round1_control_energy_mean,
                     a.round2_control_energy_mean}) {
      os << ',';
      write_value(os, v);
    }
    os << '\n';
  }
}

void write_long_csv(std::ostream& os, const std::vector<CellResult>& cells, const std::vector<std::string>& metrics) {
  os << "protocol,size,ifs,seed,metric,value\n";
  for (const auto& r : cells) {
    if (!r.ok) continue;
    for (const auto& m : selected(metrics)) {
      os << protocol::to_string(r.cell.protocol) << ',' << r.cell.size << ',' << csv_ifs(r.cell.ifs) << ','
         << r.cell.seed << ',' << m << ',';
      write_value(os, column(m).get(r));
      os << '\n';
    }
  }
}

void write_summary(std::ostream& os, const ExperimentResult& result) {
  std::size_t failed = 0;
  for (const auto& c : result.cells) failed += c.ok ? 0 : 1;
  os << result.cells.size() << " cell(s), " << failed << " failed\n";
  for (const auto& a : result.aggregates) {
    os << protocol::to_string(a.protocol) << " N=" << a.size << " IF=" << a.ifs.label() << ": dtsr "
       << sim::format_double(std::round(a.dtsr_mean * 1e4) / 1e4) << " +/- "
       << sim::format_double(std::round(a.dtsr_stddev * 1e4) / 1e4) << " over " << (a.runs - a.failures) << " run(s)";
    if (a.censored < a.runs - a.failures) {
      os << ", lifetime " << sim::format_double(std::round(a.lifetime_s_mean * 10) / 10) << " s";
    }
    os << ", round-1 control msgs/node " << sim::format_double(std::round(a.round1_control_tx_mean * 100) / 100) << '\n';
  }
  // Paired comparison when two protocols share every other coordinate.
  std::map<std::tuple<std::uint32_t, std::string, std::uint64_t>, std::pair<std::optional<double>, std::optional<double>>> pairs;
  for (const auto& c : result.cells) {
    if (!c.ok || !c.metrics.dtsr_defined) continue;
    auto& slot = pairs[{c.cell.size, c.cell.ifs.label(), c.cell.seed}];
    (c.cell.protocol == protocol::Variant::acdmcp ? slot.first : slot.second) = c.metrics.dtsr;
  }
  std::map<std::pair<std::uint32_t, std::string>, std::pair<std::vector<double>, std::vector<double>>> by_size;
  for (const auto& [k, v] : pairs) {
    if (!v.first || !v.second) continue;
    auto& b = by_size[{std::get<0>(k), std::get<1>(k)}];
    b.first.push_back(*v.first);
    b.second.push_back(*v.second);
  }
  for (const auto& [k, v] : by_size) {
    const auto w = stats::wilcoxon_signed_rank_greater(v.first, v.second);
    os << "paired dtsr N=" << k.first << " IF=" << k.second << ": acdmcp > id_baseline, n=" << w.n
       << ", W+=" << sim::format_double(w.w_plus) << ", p=" << sim::format_double(w.p_value) << '\n';
  }
}

}  // namespace acdmcp::harness
