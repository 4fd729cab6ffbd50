#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "acdmcp/types.hpp"

namespace acdmcp {

enum class MsgKind : std::uint8_t {
  ndm,       // neighbor discovery
  stats,     // per-neighbor reception counts
  share,     // CHCV triple (MLR_in, E_re, degree)
  ich,       // "I am CH" announcement / direct membership offer
  cjn,       // cluster joining notification
  scj,       // searching cluster to join
  tcmo,      // transitive cluster membership offer
  tcjn,      // transitive cluster joining notification
  schicc,    // sink probe, high power
  fchicc,    // forwarded high-power probe
  backfshp,  // block ACK, high power
  slpnicc,   // sink probe, low power
  lpack,     // per-probe ACK back to the sink, low power
  flpnicc,   // forwarded low-power probe
  backfslp,  // block ACK, low power
  recluster,
  data,
  unknown,
};

std::string_view to_string(MsgKind kind);
std::optional<MsgKind> msg_kind_from_string(std::string_view name);

// Clustering-phase control traffic (election and formation).
bool is_clustering_kind(MsgKind kind);
// Route-formation control traffic between clusters.
bool is_iccom_kind(MsgKind kind);
inline bool is_control_kind(MsgKind kind) { return kind != MsgKind::data; }

using CountList = std::vector<std::pair<NodeId, std::uint32_t>>;

struct ReportId {
  NodeId origin = 0;
  std::uint32_t seq = 0;
  friend auto operator<=>(const ReportId&, const ReportId&) = default;
};

namespace msg {

struct Ndm {
  std::uint32_t seq = 0;
  friend bool operator==(const Ndm&, const Ndm&) = default;
};

// Cumulative low-power counters snapshotted at the start of the round.
struct Stats {
  std::uint64_t tx_low = 0;
  std::vector<std::pair<NodeId, std::uint64_t>> heard;
  friend bool operator==(const Stats&, const Stats&) = default;
};

struct Share {
  double mlr_in = 0.0;
  double e_re = 0.0;
  std::uint32_t degree = 0;
  friend bool operator==(const Share&, const Share&) = default;
};

struct Ich {
  double e_re = 0.0;
  std::uint32_t degree = 0;
  double mlr_in = 0.0;
  double score = 0.0;  // sender's election CHCV, for conflict resolution
  bool reply = false;  // unicast answer to an SCJ
  friend bool operator==(const Ich&, const Ich&) = default;
};

struct Cjn {
  NodeId ch = 0;
  friend bool operator==(const Cjn&, const Cjn&) = default;
};

struct Scj {
  friend bool operator==(const Scj&, const Scj&) = default;
};

struct Tcmo {
  NodeId ch = 0;
  std::uint32_t depth = 0;  // offerer's own depth; the joiner would sit at depth + 1
  double elr_out = 0.0;     // offerer's end-to-end reliability to its CH
  double e_re = 0.0;
  std::uint32_t degree = 0;
  std::vector<NodeId> path;  // offerer, its parent, ..., CH
  friend bool operator==(const Tcmo&, const Tcmo&) = default;
};

struct Tcjn {
  NodeId tch = 0;
  friend bool operator==(const Tcjn&, const Tcjn&) = default;
};

struct Schicc {
  std::uint32_t seq = 0;
  friend bool operator==(const Schicc&, const Schicc&) = default;
};

struct Fchicc {
  NodeId dsn = 0;
  std::uint32_t hts = 0;
  std::uint32_t heard_from_dsn = 0;
  double elr_in = 0.0;
  double elr_out = 0.0;
  double e_re = 0.0;
  std::uint32_t members = 0;
  friend bool operator==(const Fchicc&, const Fchicc&) = default;
};

struct BackHigh {
  std::uint32_t hts = 0;
  double elr_out = 1.0;  // sender's own end-to-end reliability to the sink
  CountList counts;
  friend bool operator==(const BackHigh&, const BackHigh&) = default;
};

struct Slpnicc {
  std::uint32_t seq = 0;
  friend bool operator==(const Slpnicc&, const Slpnicc&) = default;
};

struct LpAck {
  friend bool operator==(const LpAck&, const LpAck&) = default;
};

struct Flpnicc {
  NodeId dsn = 0;
  std::uint32_t hts = 0;
  double elr_out = 0.0;
  double e_re = 0.0;
  std::uint32_t members = 0;
  friend bool operator==(const Flpnicc&, const Flpnicc&) = default;
};

struct BackLow {
  CountList counts;
  friend bool operator==(const BackLow&, const BackLow&) = default;
};

struct Recluster {
  std::uint32_t round = 0;
  SimTime start = 0;
  friend bool operator==(const Recluster&, const Recluster&) = default;
};

struct Data {
  std::vector<ReportId> reports;
  bool inter_cluster = false;  // travelling along the route to the sink
  std::uint8_t ttl = 64;
  friend bool operator==(const Data&, const Data&) = default;
};

struct Unknown {
  std::uint16_t code = 0;
  friend bool operator==(const Unknown&, const Unknown&) = default;
};

}  // namespace msg

using Payload = std::variant<msg::Ndm, msg::Stats, msg::Share, msg::Ich, msg::Cjn, msg::Scj, msg::Tcmo,
                             msg::Tcjn, msg::Schicc, msg::Fchicc, msg::BackHigh, msg::Slpnicc, msg::LpAck,
                             msg::Flpnicc, msg::BackLow, msg::Recluster, msg::Data, msg::Unknown>;

struct Message {
  NodeId src = 0;
  std::optional<NodeId> dst;  // nullopt: broadcast
  std::uint32_t round = 0;
  Payload body;

  [[nodiscard]] MsgKind kind() const;
  [[nodiscard]] bool is_broadcast() const { return !dst.has_value(); }
  friend bool operator==(const Message&, const Message&) = default;
};

}  // namespace acdmcp
