#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "acdmcp/protocol.hpp"
#include "acdmcp/types.hpp"

namespace acdmcp::sim {

struct Position {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Position&, const Position&) = default;
};

enum class Placement : std::uint8_t { uniform, explicit_positions };
enum class LambdaMode : std::uint8_t { uniform, constant, distance };

std::string_view to_string(Placement p);
std::string_view to_string(LambdaMode m);

struct TopologyConfig {
  std::uint32_t node_count = 25;  // sensors, sink excluded
  // Zero area: square side chosen so the expected low-power degree is target_degree.
  double area_width = 0.0;
  double area_height = 0.0;
  double target_degree = 8.0;
  Placement placement = Placement::uniform;
  std::vector<Position> positions;  // explicit placement, one per sensor
  std::optional<Position> sink_position;  // default: area center
  double range_low = 30.0;
  double range_high = 90.0;
  LambdaMode lambda_mode = LambdaMode::uniform;
  double lambda_min = 0.5;
  double lambda_max = 1.0;
  double lambda_constant = 1.0;
  std::string file;  // import instead of generating

  [[nodiscard]] double width() const;
  [[nodiscard]] double height() const;
};

struct EnergyConfig {
  double initial = 10.0;
  double initial_max = 0.0;      // > initial: per-node uniform draw in [initial, initial_max]
  std::vector<double> per_node;  // explicit initial energy, one per sensor
  double tx_low = 0.001;
  double tx_high = 0.004;
  double rx = 0.001;
  double idle_per_second = 1e-5;
  double e_th_fraction = 0.2;  // initial E_th as a fraction of the mean initial energy
  double e_th_initial = 0.0;   // > 0: absolute initial E_th, overriding the fraction
};

struct SimConfig {
  std::uint64_t seed = 1;
  TopologyConfig topology;
  EnergyConfig energy;
  protocol::ProtocolConfig protocol;

  SimTime duration = 3600 * kSecond;
  std::uint32_t report_rounds = 0;  // > 0: stop after this many report periods of the first round
  bool until_disconnect = false;
  double disconnect_fraction = 0.5;
  bool reliable_control = false;
  SimTime tx_delay = 1 * kMillisecond;
  std::vector<SimTime> forced_reclusters;
  bool record_log = true;

  // Throws std::invalid_argument naming the offending key.
  void validate() const;
};

}  // namespace acdmcp::sim
