#include "acdmcp/sim_config.hpp"

#include <cmath>
#include <stdexcept>

namespace acdmcp::sim {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) { throw std::invalid_argument(key + ": " + why); }

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void SimConfig::validate() const {
  const auto& t = topology;
  if (t.file.empty()) {
    if (t.node_count == 0) fail("topology.node_count", "must be at least 1");
    if (t.area_width < 0.0 || t.area_height < 0.0) fail("topology.area", "dimensions must be >= 0");
    if (!(t.target_degree > 0.0)) fail("topology.target_degree", "must be positive");
    if (t.placement == Placement::explicit_positions && t.positions.size() != t.node_count) {
      fail("topology.positions", "needs exactly node_count entries");
    }
    if (!(t.range_low > 0.0)) fail("topology.range_low", "must be positive");
    if (!(t.range_high >= t.range_low)) fail("topology.range_high", "must be >= range_low");
    if (!(t.lambda_min >= 0.0 && t.lambda_min <= 1.0)) fail("topology.lambda_min", "must lie in [0,1]");
    if (!(t.lambda_max >= t.lambda_min && t.lambda_max <= 1.0)) fail("topology.lambda_max", "must lie in [lambda_min,1]");
    if (!(t.lambda_constant >= 0.0 && t.lambda_constant <= 1.0)) fail("topology.lambda_constant", "must lie in [0,1]");
    if (!energy.per_node.empty() && energy.per_node.size() != t.node_count) {
      fail("energy.per_node", "needs exactly node_count entries");
    }
  }
  if (!(energy.initial > 0.0) || !std::isfinite(energy.initial)) fail("energy.initial", "must be positive");
  if (energy.initial_max != 0.0 && !(energy.initial_max >= energy.initial)) {
    fail("energy.initial_max", "must be 0 or >= initial");
  }
  for (double e : energy.per_node) {
    if (!finite_nonneg(e)) fail("energy.per_node", "entries must be >= 0");
  }
  if (!finite_nonneg(energy.tx_low)) fail("energy.tx_low", "must be >= 0");
  if (!finite_nonneg(energy.tx_high)) fail("energy.tx_high", "must be >= 0");
  if (!finite_nonneg(energy.rx)) fail("energy.rx", "must be >= 0");
  if (!finite_nonneg(energy.idle_per_second)) fail("energy.idle_per_second", "must be >= 0");
  if (!(energy.e_th_fraction > 0.0 && energy.e_th_fraction < 1.0)) fail("energy.e_th_fraction", "must lie in (0,1)");
  if (!(energy.e_th_initial >= 0.0)) fail("energy.e_th_initial", "must not be negative (0 selects the fraction)");
  if (duration <= 0) fail("duration_s", "must be positive");
  if (!(disconnect_fraction > 0.0 && disconnect_fraction <= 1.0)) fail("disconnect_fraction", "must lie in (0,1]");
  if (tx_delay < 0) fail("tx_delay_ms", "must be >= 0");
  for (SimTime t0 : forced_reclusters) {
    if (t0 < 0) fail("forced_reclusters_s", "times must be >= 0");
  }
  protocol.validate();
}

}  // namespace acdmcp::sim
