#pragma once
/*
 * Per-node clustering state machine.
 *
 * step() is a pure transition function: it consumes one event (start signal,
 * received message, timer expiry, energy alarm) and returns the successor
 * state plus the actions the environment must carry out (send at a power
 * level, arm a timer, report a status change or a metric). It knows nothing
 * about the simulator; energy bookkeeping and message delivery are the
 * driver's job.
 *
 * Round timeline, relative to the round start T:
 *
 *   [T, T+D)          neighbor discovery (D = 0 on reclustering rounds)
 *   [T+D, T+D+S)      link-count share
 *   [T+D+S, T+D+2S)   CHCV share among candidates
 *   T+D+2S            election; CHs announce
 *   T+D+3S            joining offers evaluated; unclustered nodes search
 *   formation_end     inter-cluster route formation starts at the sink
 *   data_start        periodic reporting begins
 */

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "acdmcp/message.hpp"
#include "acdmcp/metric.hpp"
#include "acdmcp/rng.hpp"
#include "acdmcp/types.hpp"

namespace acdmcp::protocol {

enum class Variant : std::uint8_t { acdmcp, id_baseline };

std::string_view to_string(Variant v);
std::optional<Variant> variant_from_string(std::string_view name);

struct ProtocolConfig {
  Variant variant = Variant::acdmcp;

  metric::ImpactFactors ifs = metric::ImpactFactors::from_percent(20, 60, 20);
  double if_zeta = 0.1;
  std::uint32_t ideg = 4;
  bool higher_nid_wins = true;
  bool bidirectional_mlr = false;

  double e_th_initial = 2.0;
  double e_th_decay = 0.10;

  std::uint32_t repeats = 10;  // n: NDM and route-probe repeat count
  SimTime broadcast_slot = 20 * kMillisecond;
  SimTime single_span = 50 * kMillisecond;

  // Zero means "derive from the spans" (twice the span being waited on).
  SimTime discovery_window = 0;
  SimTime share_window = 0;
  SimTime iccom_hop_window = 0;
  SimTime iccom_duration = 20 * kSecond;

  std::uint32_t scj_retries = 3;
  std::uint32_t max_tcm_depth = 0;  // 0: unlimited

  SimTime report_period = 20 * kSecond;
  SimTime report_slot = 50 * kMillisecond;
  std::uint32_t depth_slots = 16;
  std::uint32_t hts_slots = 16;
  std::uint32_t silence_periods = 10;
  SimTime recluster_lead = 1 * kSecond;

  void validate() const;

  [[nodiscard]] metric::ImpactFactors multihop_ifs() const { return ifs.with_hop_weight(if_zeta); }
  [[nodiscard]] metric::TieBreakPolicy policy() const { return {ideg, higher_nid_wins}; }
  [[nodiscard]] double e_th_for_round(std::uint32_t round) const;
};

// Absolute offsets of one clustering round.
struct Timeline {
  SimTime discovery = 0;
  SimTime share_window = 0;
  SimTime stats_close = 0;
  SimTime election = 0;
  SimTime offer_close = 0;
  SimTime formation_end = 0;
  SimTime iccom_start = 0;
  SimTime data_start = 0;
  SimTime ndm_span = 0;
  SimTime hop_window = 0;
  friend bool operator==(const Timeline&, const Timeline&) = default;
};

Timeline make_timeline(const ProtocolConfig& cfg, bool first_round);

enum class NodeStatus : std::uint8_t { uc, chc, cm, tcm, ch, snch };
std::string_view to_string(NodeStatus s);
bool is_terminal(NodeStatus s);
bool is_head(NodeStatus s);  // CH or SNCH

struct Advertised {
  double e_re = 0.0;
  std::uint32_t degree = 0;
  double mlr_in = 0.0;
  friend bool operator==(const Advertised&, const Advertised&) = default;
};

struct NeighborEntry {
  metric::LinkStats link_stats_low;
  metric::LinkStats link_stats_high;
  std::optional<Advertised> last_advertised;
  double estimated_in_lr = 0.0;
  double estimated_out_lr = 0.0;
  bool estimated = false;

  // Bookkeeping for count-based estimation.
  std::optional<std::uint64_t> heard_snapshot;  // heard count when this round's snapshot was taken
  std::uint64_t heard_previous_snapshot = 0;
  std::uint64_t peer_tx_snapshot = 0;
  std::uint32_t stats_round = 0;

  friend bool operator==(const NeighborEntry&, const NeighborEntry&) = default;
};

struct ClusterPointers {
  std::optional<NodeId> my_ch;
  std::optional<NodeId> my_tch;
  std::set<NodeId> members;
  std::set<NodeId> sub_neighbors;
  std::uint32_t depth = 0;
  std::optional<NodeId> cluster_ch;  // CH at the end of a transitive chain
  double elr_to_ch = 1.0;
  std::vector<NodeId> path;  // parent, ..., CH
  std::optional<metric::ScoredCandidate> accepted_offer;

  friend bool operator==(const ClusterPointers&, const ClusterPointers&) = default;
};

struct RoutingPointers {
  std::optional<NodeId> dsn_high;
  std::optional<NodeId> dsn_low;
  std::set<NodeId> usn;
  std::uint32_t hts_high = 0;  // 0: no high-power route
  std::uint32_t hts_low = 0;   // 0: no low-power route
  double elr_to_sink_in = 0.0;
  double elr_to_sink_out = 0.0;
  double elr_low_out = 0.0;

  // Next hop, power and hop count actually used for data, if any.
  struct Route {
    NodeId next = 0;
    Power power = Power::low;
    std::uint32_t hts = 0;
  };
  [[nodiscard]] std::optional<Route> effective_route(bool head) const;

  friend bool operator==(const RoutingPointers&, const RoutingPointers&) = default;
};

// Per-round transient state.
struct RoundScratch {
  Timeline timeline;
  SimTime round_start = 0;

  std::uint64_t tx_snapshot = 0;
  double own_mlr_in = 0.0;
  double own_e_re = 0.0;
  std::uint32_t own_degree = 0;
  double own_score = 0.0;
  std::map<NodeId, msg::Share> shares;

  std::map<NodeId, msg::Ich> offers;
  bool offers_closed = false;

  bool searching = false;
  std::uint32_t search_attempt = 0;
  std::map<NodeId, msg::Ich> search_ich;
  std::map<NodeId, msg::Tcmo> search_tcmo;

  bool orphan = false;
  std::set<NodeId> orphans_heard;
  std::map<NodeId, msg::Ich> orphan_offers;

  struct HpCandidate {
    std::uint32_t heard = 0;
    msg::Fchicc last;
    std::optional<double> out_lr;  // from a block ACK
    std::optional<std::uint32_t> back_hts;
    std::optional<double> back_elr;
    friend bool operator==(const HpCandidate&, const HpCandidate&) = default;
  };
  std::uint32_t hp_sink_heard = 0;
  std::optional<double> hp_sink_out_lr;
  std::map<NodeId, HpCandidate> hp_candidates;
  bool hp_offer_armed = false;
  bool hp_forwarded = false;
  std::map<NodeId, std::uint32_t> back_high_pending;
  bool back_high_armed = false;

  struct LpCandidate {
    std::uint32_t heard = 0;
    msg::Flpnicc last;
    friend bool operator==(const LpCandidate&, const LpCandidate&) = default;
  };
  std::uint32_t lp_sink_heard = 0;
  std::uint32_t lp_acks_sent = 0;
  std::map<NodeId, LpCandidate> lp_candidates;
  bool lp_offer_armed = false;
  bool lp_forwarded = false;
  std::map<NodeId, std::uint32_t> lp_ack_counts;  // sink only
  bool back_low_armed = false;

  bool first_round = false;
  bool data_phase = false;
  bool aggregate_sent = false;
  std::vector<ReportId> pending;

  friend bool operator==(const RoundScratch&, const RoundScratch&) = default;
};

struct NodeState {
  NodeId id = 0;
  bool is_sink = false;
  NodeStatus status = NodeStatus::uc;
  bool is_tch = false;
  metric::EnergyState energy;

  std::uint32_t round = 0;
  std::uint32_t pending_round = 0;
  std::uint32_t epoch = 0;
  bool threshold_alarm = false;

  std::map<NodeId, NeighborEntry> neighbors;
  std::map<NodeId, std::uint64_t> heard_high;
  std::map<NodeId, SimTime> last_heard;  // any power
  std::uint64_t tx_low = 0;
  std::uint64_t tx_high = 0;

  ClusterPointers cluster;
  RoutingPointers routing;
  RoundScratch scratch;

  std::uint32_t report_seq = 0;
  Rng rng;

  [[nodiscard]] std::uint32_t degree() const { return static_cast<std::uint32_t>(neighbors.size()); }

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

NodeState make_node(NodeId id, double e_initial, double e_th, std::uint64_t seed);
NodeState make_sink(std::uint64_t seed);

enum class TimerKind : std::uint8_t {
  discovery_close,
  stats_close,
  election,
  offer_close,
  search_close,
  orphan_close,
  orphan_offer_close,
  iccom_start,
  hp_sink_close,
  hp_offer_close,
  back_high,
  lp_sink_close,
  lp_fallback,
  lp_offer_close,
  back_low,
  iccom_end,
  data_tick,
  aggregate_send,
  round_start,
};

std::string_view to_string(TimerKind k);

namespace event {
struct Start {};
struct Recluster {};
struct MsgIn {
  Message msg;
  Power power = Power::low;
};
struct Timer {
  TimerKind kind{};
  std::uint32_t epoch = 0;
  std::uint32_t arg = 0;
};
struct EnergyBelowThreshold {};
}  // namespace event

struct Event {
  SimTime now = 0;
  std::variant<event::Start, event::Recluster, event::MsgIn, event::Timer, event::EnergyBelowThreshold> body;
};

enum class MetricKind : std::uint8_t {
  report_generated,
  report_delivered,
  report_dropped,
  recluster_called,
  round_started,
  unreachable_head,
  dropped_message,
};

std::string_view to_string(MetricKind k);

namespace action {
struct Send {
  Message msg;
  Power power = Power::low;
  SimTime delay = 0;
};
struct SetTimer {
  TimerKind kind{};
  SimTime delay = 0;
  std::uint32_t epoch = 0;
  std::uint32_t arg = 0;
};
struct StatusChange {
  NodeStatus from{};
  NodeStatus to{};
};
struct EmitMetric {
  MetricKind kind{};
  double value = 0.0;
  std::vector<ReportId> reports;
  std::string note;
};
}  // namespace action

using Action = std::variant<action::Send, action::SetTimer, action::StatusChange, action::EmitMetric>;

struct StepResult {
  NodeState state;
  std::vector<Action> actions;
};

// Pure transition. Never mutates its inputs.
StepResult step(const ProtocolConfig& cfg, const NodeState& state, const Event& event);

// In-place variant used by the simulator; identical semantics.
void step_in_place(const ProtocolConfig& cfg, NodeState& state, const Event& event, std::vector<Action>& out);

}  // namespace acdmcp::protocol
