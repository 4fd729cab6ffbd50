#include "acdmcp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "acdmcp/config_io.hpp"
#include "acdmcp/harness.hpp"
#include "acdmcp/invariants.hpp"
#include "acdmcp/link_model.hpp"
#include "acdmcp/simulator.hpp"

namespace acdmcp::cli {

namespace fs = std::filesystem;

namespace {

struct ConfigArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

struct OutArgs {
  std::string out;
  bool force = false;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file; every key is optional (see configs/reference.json)");
  cmd->add_option("--set", a.sets, "Override a config key, e.g. --set topology.node_count=50 (repeatable)");
  cmd->add_option("--seed", a.seed, "Seed for single runs; for sweeps, replaces experiment.seeds with this one seed");
}

harness::ExperimentSpec load_spec(const ConfigArgs& a) {
  auto overrides = a.sets;
  if (a.seed) {
    overrides.push_back("seed=" + std::to_string(*a.seed));
    overrides.push_back("experiment.seeds=[" + std::to_string(*a.seed) + "]");
  }
  return a.config.empty() ? config::from_overrides(overrides) : config::load(a.config, overrides);
}

// Creates the output directory, refusing an existing one unless forced.
void prepare_dir(const OutArgs& o) {
  if (o.out.empty()) throw std::invalid_argument("--out: an output directory is required");
  if (fs::exists(o.out) && !o.force) {
    throw std::invalid_argument(o.out + ": output path exists (use --force to overwrite)");
  }
  fs::create_directories(o.out);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error(p.string() + ": cannot open for writing");
  return os;
}

void write_json(const fs::path& p, const config::Json& j) {
  auto os = open_out(p);
  os << j.dump(2) << '\n';
}

// Cluster sizes (head included) keyed by head id, from the final state.
std::map<std::size_t, std::size_t> cluster_size_histogram(const sim::NetworkSnapshot& snap) {
  std::map<NodeId, std::size_t> size;
  for (const auto& n : snap.nodes) {
    if (n.is_sink || !snap.energy[n.id].alive()) continue;
    if (protocol::is_head(n.status)) {
      size[n.id] += 1;
    } else if (n.status == protocol::NodeStatus::cm && n.cluster.my_ch) {
      size[*n.cluster.my_ch] += 1;
    } else if (n.status == protocol::NodeStatus::tcm && n.cluster.cluster_ch) {
      size[*n.cluster.cluster_ch] += 1;
    }
  }
  std::map<std::size_t, std::size_t> hist;
  for (const auto& [head, s] : size) hist[s] += 1;
  return hist;
}

void print_run_summary(std::ostream& out, const sim::SimConfig& cfg, const sim::RunResult& r) {
  const auto& m = r.metrics;
  out << "protocol " << protocol::to_string(cfg.protocol.variant) << ", " << m.node_count << " sensors, seed "
      << cfg.seed << ", IF " << cfg.protocol.ifs.label() << '\n';
  out << "simulated " << sim::format_double(static_cast<double>(m.end_time) / kSecond) << " s, " << m.rounds
      << " clustering round(s)\n";
  out << "DTSR ";
  if (m.dtsr_defined) {
    out << sim::format_double(m.dtsr) << " (" << m.msgs_at_sink << "/" << m.msgs_generated << ")\n";
  } else {
    out << "undefined (no reports generated)\n";
  }
  out << "CH " << m.final_ch << ", CM " << m.final_cm << ", TCM " << m.final_tcm << ", SNCH " << m.final_snch
      << ", dead " << m.dead_nodes << '\n';
  out << "cluster sizes:";
  for (const auto& [s, count] : cluster_size_histogram(r.snapshot)) out << ' ' << s << "x" << count;
  out << '\n';
  out << "round-1 control messages per node " << sim::format_double(m.control_tx_per_node(1)) << '\n';
  if (m.lifetime) {
    out << "lifetime " << sim::format_double(static_cast<double>(*m.lifetime) / kSecond) << " s, "
        << m.msgs_at_sink_before_disconnect << " report(s) at sink before disconnect\n";
  } else if (cfg.until_disconnect) {
    out << "no disconnect before the end of the run (censored)\n";
  }
}

int cmd_run(const ConfigArgs& ca, const OutArgs& oa, std::ostream& out) {
  const auto spec = load_spec(ca);
  if (spec.cell_count() != 1) {
    throw std::invalid_argument("experiment: run takes a single configuration; use sweep for " +
                                std::to_string(spec.cell_count()) + " cells");
  }
  prepare_dir(oa);
  const auto cell = harness::expand(spec).front();
  auto cfg = harness::cell_config(spec, cell);
  cfg.record_log = spec.base.record_log;
  const fs::path dir(oa.out);

  const auto model = sim::resolve_topology(cfg);
  const auto result = sim::run(cfg, model);

  harness::CellResult row;
  row.cell = cell;
  row.ok = true;
  row.metrics = result.metrics;
  row.consistency_ratio = sim::check_all(result.snapshot, false).consistency_ratio();
  {
    auto os = open_out(dir / "metrics.csv");
    harness::write_cells_csv(os, {row}, spec.metrics);
  }
  {
    auto os = open_out(dir / "events.log");
    sim::write_event_log(os, result.log);
  }
  {
    auto os = open_out(dir / "snapshot.txt");
    sim::write_snapshot(os, result.snapshot);
  }
  {
    auto os = open_out(dir / "topology.txt");
    sim::write_topology(os, model);
  }
  write_json(dir / "config.json", config::encode(spec));
  std::ostringstream summary;
  print_run_summary(summary, cfg, result);
  {
    auto os = open_out(dir / "summary.txt");
    os << summary.str();
  }
  out << summary.str();
  return kOk;
}

int cmd_sweep(harness::ExperimentSpec spec, const OutArgs& oa, unsigned jobs, std::ostream& out, std::ostream& err) {
  prepare_dir(oa);
  const fs::path dir(oa.out);
  write_json(dir / "config.json", config::encode(spec));
  auto cells_os = open_out(dir / "cells.csv");
  harness::write_cells_header(cells_os, spec.metrics);
  cells_os.flush();
  const std::size_t total = spec.cell_count();
  std::size_t committed = 0;
  std::size_t failed = 0;
  // Each committed row is flushed so an interrupted sweep leaves a valid prefix.
  const auto result = harness::run_experiment(spec, jobs, [&](const harness::CellResult& r) {
    harness::write_cell_row(cells_os, r, spec.metrics);
    cells_os.flush();
    ++committed;
    if (!r.ok) ++failed;
    err << "[" << committed << "/" << total << "] " << protocol::to_string(r.cell.protocol) << " N=" << r.cell.size
        << " IF=" << r.cell.ifs.label() << " seed=" << r.cell.seed << (r.ok ? " ok" : " FAILED: " + r.error) << '\n';
  });
  cells_os.close();
  {
    auto os = open_out(dir / "aggregates.csv");
    harness::write_aggregates_csv(os, result.aggregates);
  }
  {
    auto os = open_out(dir / "long.csv");
    harness::write_long_csv(os, result.cells, spec.metrics);
  }
  std::ostringstream summary;
  harness::write_summary(summary, result);
  {
    auto os = open_out(dir / "summary.txt");
    os << summary.str();
  }
  out << summary.str();
  return failed == 0 ? kOk : kFailure;
}

int cmd_topology_generate(const ConfigArgs& ca, const std::string& file, bool force, std::ostream& out) {
  const auto spec = load_spec(ca);
  if (file.empty()) throw std::invalid_argument("--out: a topology file path is required");
  if (fs::exists(file) && !force) throw std::invalid_argument(file + ": output path exists (use --force to overwrite)");
  const auto parent = fs::path(file).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  const auto model = sim::generate_topology(spec.base);
  sim::save_topology_file(file, model);
  out << "wrote " << file << ": " << model.sensor_count() << " sensors, " << model.edge_count(Power::low)
      << " low-power and " << model.edge_count(Power::high) << " high-power edges"
      << (model.disconnected ? " (some sensor cannot reach the sink)" : "") << '\n';
  return kOk;
}

int cmd_topology_export(const std::string& in, const OutArgs& oa, std::ostream& out) {
  const auto model = sim::load_topology_file(in);
  prepare_dir(oa);
  const fs::path dir(oa.out);
  {
    auto os = open_out(dir / "nodes.csv");
    os << "id,x,y,e_initial\n";
    for (const auto& n : model.nodes) {
      os << n.id << ',' << sim::format_double(n.pos.x) << ',' << sim::format_double(n.pos.y) << ','
         << sim::format_double(n.e_initial) << '\n';
    }
  }
  {
    auto os = open_out(dir / "edges.csv");
    os << "src,dst,power,lambda\n";
    for (auto p : {Power::low, Power::high}) {
      for (NodeId s = 0; s < model.size(); ++s) {
        for (const auto& l : model.out(s, p)) {
          os << s << ',' << l.dst << ',' << to_string(p) << ',' << sim::format_double(l.lambda) << '\n';
        }
      }
    }
  }
  out << "exported " << in << " to " << oa.out << '\n';
  return kOk;
}

int cmd_topology_import(const std::string& in, std::ostream& out) {
  const auto model = sim::load_topology_file(in);
  out << in << ": " << model.sensor_count() << " sensors, " << model.edge_count(Power::low) << " low-power and "
      << model.edge_count(Power::high) << " high-power edges, fingerprint " << model.fingerprint()
      << (model.disconnected ? ", some sensor cannot reach the sink" : "") << '\n';
  out << "use it with --set topology.file=" << in << '\n';
  return kOk;
}

int cmd_validate(const ConfigArgs& ca, bool dump, std::ostream& out) {
  const auto spec = load_spec(ca);
  if (dump) {
    out << config::encode(spec).dump(2) << '\n';
  } else {
    out << "ok: " << spec.cell_count() << " cell(s)\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Link-reliability-aware clustering simulator and experiment harness"};
  app.require_subcommand(1);

  ConfigArgs ca;
  OutArgs oa;
  unsigned jobs = 1;
  bool dump = false;
  std::string in_file;
  std::string topo_out;

  auto* run_cmd = app.add_subcommand("run", "Run one simulation and write metrics, event log and snapshot");
  add_config_flags(run_cmd, ca);
  run_cmd->add_option("--out", oa.out, "Output directory")->required();
  run_cmd->add_flag("--force", oa.force, "Write into an existing output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run the experiment cross product described by the config");
  auto* compare_cmd = app.add_subcommand("compare", "Paired sweep of acdmcp against id_baseline");
  for (auto* c : {sweep_cmd, compare_cmd}) {
    add_config_flags(c, ca);
    c->add_option("--out", oa.out, "Output directory")->required();
    c->add_flag("--force", oa.force, "Write into an existing output directory");
    c->add_option("--jobs", jobs, "Worker threads; output does not depend on it")->check(CLI::Range(1u, 1024u));
  }

  auto* topo_cmd = app.add_subcommand("topology", "Generate, export or import topology files");
  topo_cmd->require_subcommand(1);
  auto* gen_cmd = topo_cmd->add_subcommand("generate", "Generate a topology from the config");
  add_config_flags(gen_cmd, ca);
  gen_cmd->add_option("--out", topo_out, "Topology file to write")->required();
  gen_cmd->add_flag("--force", oa.force, "Overwrite an existing file");
  auto* export_cmd = topo_cmd->add_subcommand("export", "Write a topology file as nodes.csv and edges.csv");
  export_cmd->add_option("--in", in_file, "Topology file")->required();
  export_cmd->add_option("--out", oa.out, "Output directory")->required();
  export_cmd->add_flag("--force", oa.force, "Write into an existing output directory");
  auto* import_cmd = topo_cmd->add_subcommand("import", "Check a topology file and print its summary");
  import_cmd->add_option("--in", in_file, "Topology file")->required();

  auto* validate_cmd = app.add_subcommand("validate", "Check a config and report the number of cells");
  add_config_flags(validate_cmd, ca);
  validate_cmd->add_flag("--dump", dump, "Print the fully resolved config as JSON");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(ca, oa, out);
    if (sweep_cmd->parsed()) return cmd_sweep(load_spec(ca), oa, jobs, out, err);
    if (compare_cmd->parsed()) {
      auto spec = load_spec(ca);
      spec.protocols = {protocol::Variant::acdmcp, protocol::Variant::id_baseline};
      return cmd_sweep(spec, oa, jobs, out, err);
    }
    if (gen_cmd->parsed()) return cmd_topology_generate(ca, topo_out, oa.force, out);
    if (export_cmd->parsed()) return cmd_topology_export(in_file, oa, out);
    if (import_cmd->parsed()) return cmd_topology_import(in_file, out);
    if (validate_cmd->parsed()) return cmd_validate(ca, dump, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace acdmcp::cli
