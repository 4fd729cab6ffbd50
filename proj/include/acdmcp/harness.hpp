#pragma once
/*
 * Experiment orchestration: cross-product sweeps over protocol, network size,
 * impact-factor mix and seed, plus log-level analyses and result tables.
 *
 * Cells run in parallel but are committed strictly in sweep order, so every
 * output is independent of the worker count.
 */

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "acdmcp/metric.hpp"
#include "acdmcp/protocol.hpp"
#include "acdmcp/sim_config.hpp"
#include "acdmcp/simulator.hpp"

namespace acdmcp::harness {

struct ExperimentSpec {
  std::vector<protocol::Variant> protocols{protocol::Variant::acdmcp};
  std::vector<std::uint32_t> sizes{25};
  std::vector<metric::ImpactFactors> ifs{metric::ImpactFactors::from_percent(20, 60, 20)};
  std::vector<std::uint64_t> seeds{1};
  sim::SimConfig base;
  std::vector<std::string> metrics;  // CSV metric columns; empty selects all

  // Throws std::invalid_argument naming the offending field.
  void validate() const;
  [[nodiscard]] std::size_t cell_count() const;
};

// The representative mixes swept by default, (REI, link, NDI) in percent.
std::vector<metric::ImpactFactors> default_if_combos();

struct Cell {
  std::size_t index = 0;
  protocol::Variant protocol = protocol::Variant::acdmcp;
  std::uint32_t size = 0;
  metric::ImpactFactors ifs;
  std::uint64_t seed = 0;
};

// Cells in sweep order: protocol, then size, then IF mix, then seed.
std::vector<Cell> expand(const ExperimentSpec& spec);

sim::SimConfig cell_config(const ExperimentSpec& spec, const Cell& cell);

struct CellResult {
  Cell cell;
  bool ok = false;
  std::string error;
  sim::MetricsRecord metrics;
  double consistency_ratio = 0.0;
};

CellResult run_cell(const ExperimentSpec& spec, const Cell& cell);

struct Aggregate {
  protocol::Variant protocol = protocol::Variant::acdmcp;
  std::uint32_t size = 0;
  metric::ImpactFactors ifs;
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::size_t censored = 0;
  double dtsr_mean = 0.0;
  double dtsr_stddev = 0.0;
  double lifetime_s_mean = 0.0;  // over uncensored runs
  double lifetime_s_stddev = 0.0;
  double msgs_before_disconnect_mean = 0.0;
  double round1_control_tx_mean = 0.0;
  double round2_control_tx_mean = 0.0;
  double round1_control_energy_mean = 0.0;
  double round2_control_energy_mean = 0.0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // sweep order
  std::vector<Aggregate> aggregates;
};

using CellCallback = std::function<void(const CellResult&)>;

// Runs every cell on `jobs` workers. `on_commit` is called once per cell in
// sweep order, from whichever thread completes the ordered prefix.
ExperimentResult run_experiment(const ExperimentSpec& spec, unsigned jobs = 1, const CellCallback& on_commit = {});

std::vector<Aggregate> aggregate(const std::vector<CellResult>& cells);

// ---- log analyses ----

struct DtsrResult {
  std::uint64_t generated = 0;
  std::uint64_t delivered = 0;
  bool defined = false;
  double dtsr = 0.0;
};

// Counts each report origination once and each report identity reaching the sink once.
DtsrResult compute_dtsr(const sim::EventLog& log);

struct LifetimeResult {
  bool censored = true;
  std::optional<SimTime> lifetime;
  std::uint64_t msgs_at_sink_before_disconnect = 0;  // or up to the end when censored
};

LifetimeResult compute_lifetime(const sim::EventLog& log, const sim::NetworkSnapshot& snapshot);

struct RoundOverhead {
  std::uint32_t round = 0;
  std::uint64_t messages = 0;       // sensor-originated control transmissions
  std::int64_t energy = 0;          // control tx + rx at sensors, nano-units
  double messages_per_node = 0.0;
  double energy_per_node = 0.0;     // units
};

struct Overhead {
  std::vector<RoundOverhead> rounds;
  std::uint64_t data_messages_counted = 0;  // always 0: data never enters the tally
  [[nodiscard]] const RoundOverhead* round(std::uint32_t r) const;
};

Overhead compute_overhead(const sim::EventLog& log, std::uint32_t sensor_count);

// ---- output ----

std::vector<std::string> metric_columns();

void write_cells_header(std::ostream& os, const std::vector<std::string>& metrics);
void write_cell_row(std::ostream& os, const CellResult& r, const std::vector<std::string>& metrics);
void write_cells_csv(std::ostream& os, const std::vector<CellResult>& cells, const std::vector<std::string>& metrics);
void write_aggregates_csv(std::ostream& os, const std::vector<Aggregate>& aggregates);
// One row per (cell, metric): protocol,size,ifs,seed,metric,value.
void write_long_csv(std::ostream& os, const std::vector<CellResult>& cells, const std::vector<std::string>& metrics);
void write_summary(std::ostream& os, const ExperimentResult& result);

}  // namespace acdmcp::harness
