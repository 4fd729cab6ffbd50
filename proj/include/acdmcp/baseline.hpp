#pragma once
// Highest-ID clustering used as the comparison protocol. Every decision here
// takes node identifiers (and, for routing, hop counts) only; residual
// energy, degree and link estimates never enter.

#include <cstdint>
#include <optional>
#include <span>

#include "acdmcp/types.hpp"

namespace acdmcp::baseline {

// True when `self` has the highest id in its one-hop neighborhood.
bool baseline_elect(NodeId self, std::span<const NodeId> neighbor_ids);

// Cluster to join among the heard advertisers: the highest id.
std::optional<NodeId> baseline_choose_ch(std::span<const NodeId> advertisers);

// Orphan fallback: among orphans that hear each other, the highest id heads
// the orphan cluster. An orphan that heard nobody heads its own.
bool baseline_orphan_resolve(NodeId self, std::span<const NodeId> orphans_heard);

struct RouteCandidate {
  NodeId id = 0;
  std::uint32_t hts = 0;
};

// Fewest hops to the sink, then the highest id.
std::optional<RouteCandidate> baseline_choose_route(std::span<const RouteCandidate> candidates);

}  // namespace acdmcp::baseline
