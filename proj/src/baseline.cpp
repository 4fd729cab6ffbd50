#include "acdmcp/baseline.hpp"

#include <algorithm>

namespace acdmcp::baseline {

bool baseline_elect(NodeId self, std::span<const NodeId> neighbor_ids) {
  return std::all_of(neighbor_ids.begin(), neighbor_ids.end(), [self](NodeId n) { return n < self; });
}

std::optional<NodeId> baseline_choose_ch(std::span<const NodeId> advertisers) {
  if (advertisers.empty()) return std::nullopt;
  return *std::max_element(advertisers.begin(), advertisers.end());
}

bool baseline_orphan_resolve(NodeId self, std::span<const NodeId> orphans_heard) {
  return baseline_elect(self, orphans_heard);
}

std::optional<RouteCandidate> baseline_choose_route(std::span<const RouteCandidate> candidates) {
  std::optional<RouteCandidate> best;
  for (const auto& c : candidates) {
    if (c.hts == 0) continue;
    if (!best || c.hts < best->hts || (c.hts == best->hts && c.id > best->id)) best = c;
  }
  return best;
}

}  // namespace acdmcp::baseline
