#pragma once

#include <string>
#include <vector>

#include "acdmcp/simulator.hpp"

namespace acdmcp::sim {

struct Violation {
  NodeId node = 0;
  std::string what;
};

struct InvariantReport {
  std::vector<Violation> violations;
  std::size_t alive_sensors = 0;
  std::size_t consistent_members = 0;  // alive sensors whose membership is mutual

  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] double consistency_ratio() const {
    return alive_sensors == 0 ? 1.0 : static_cast<double>(consistent_members) / static_cast<double>(alive_sensors);
  }
  [[nodiscard]] std::string summary(std::size_t max_lines = 10) const;
};

// Each alive sensor is CM, TCM, CH or SNCH.
void check_terminal_status(const NetworkSnapshot& snap, InvariantReport& out);

// A CM is listed by its CH and a TCM by its TCH (and vice versa). Mismatches
// are violations; the ratio is always filled in.
void check_membership(const NetworkSnapshot& snap, InvariantReport& out);

// TCM chains are acyclic and end at a CH. With `check_depth` the chain length
// must also equal the recorded depth.
void check_transitive_chains(const NetworkSnapshot& snap, InvariantReport& out, bool check_depth = true);

// High- and low-power DSN pointers form sink-rooted forests with strictly
// decreasing hop counts.
void check_routing_forest(const NetworkSnapshot& snap, InvariantReport& out);

// Only CMs and TCMs act as transitive heads.
void check_tch_flags(const NetworkSnapshot& snap, InvariantReport& out);

// Exact per-category energy audit.
void check_energy(const NetworkSnapshot& snap, InvariantReport& out);

// All structural checks. With `strict` false (lossy control plane) mutual
// membership and chain depths are not enforced, but the ratio is still measured.
InvariantReport check_all(const NetworkSnapshot& snap, bool strict = true);

}  // namespace acdmcp::sim
