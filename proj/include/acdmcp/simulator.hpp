#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <unordered_set>
#include <vector>

#include "acdmcp/link_model.hpp"
#include "acdmcp/message.hpp"
#include "acdmcp/protocol.hpp"
#include "acdmcp/sim_config.hpp"

namespace acdmcp::sim {

// Energy is kept in integer nano-units so the per-category audit is exact.
constexpr std::int64_t kNanoPerUnit = 1'000'000'000;
std::int64_t to_nano(double units);
double from_nano(std::int64_t nano);

enum class EnergyCategory : std::uint8_t { tx_low, tx_high, rx, idle };

struct EnergyAccount {
  std::int64_t initial = 0;
  std::int64_t residual = 0;
  std::int64_t tx_low = 0;
  std::int64_t tx_high = 0;
  std::int64_t rx = 0;
  std::int64_t idle = 0;
  SimTime idle_until = 0;
  std::int64_t idle_carry = 0;  // sub-nano idle remainder, in nano * microseconds
  std::optional<SimTime> death;
  bool unlimited = false;  // the sink

  [[nodiscard]] std::int64_t spent() const { return tx_low + tx_high + rx + idle; }
  [[nodiscard]] std::int64_t remaining() const { return residual; }
  [[nodiscard]] double e_re() const { return from_nano(remaining()); }
  [[nodiscard]] bool alive() const { return !death.has_value(); }
  friend bool operator==(const EnergyAccount&, const EnergyAccount&) = default;
};

class EnergyLedger {
 public:
  EnergyLedger() = default;
  EnergyLedger(const LinkModel& model, const EnergyConfig& cfg);

  // Charges up to `amount`; returns false if the node is (now) dead.
  bool charge(NodeId id, EnergyCategory cat, std::int64_t amount, SimTime now);
  // Applies idle drain up to `now`; returns false if the node is (now) dead.
  bool advance_idle(NodeId id, SimTime now);

  [[nodiscard]] const EnergyAccount& account(NodeId id) const { return accounts_[id]; }
  [[nodiscard]] const std::vector<EnergyAccount>& accounts() const { return accounts_; }
  [[nodiscard]] bool alive(NodeId id) const { return accounts_[id].alive(); }
  [[nodiscard]] std::int64_t cost_tx(Power p) const { return p == Power::low ? tx_low_ : tx_high_; }
  [[nodiscard]] std::int64_t cost_rx() const { return rx_; }

 private:
  std::vector<EnergyAccount> accounts_;
  std::int64_t tx_low_ = 0;
  std::int64_t tx_high_ = 0;
  std::int64_t rx_ = 0;
  std::int64_t idle_per_second_ = 0;
};

// Exact audit: remaining == initial - sum of categories, never negative.
bool audit_ledger(const EnergyLedger& ledger);

enum class LogKind : std::uint8_t { tx, rx, status, metric, death, disconnect, end };
std::string_view to_string(LogKind k);

inline constexpr NodeId kNoNode = 0xffffffffu;

struct LogRecord {
  SimTime time = 0;
  std::uint64_t seq = 0;
  LogKind kind = LogKind::tx;
  NodeId node = 0;        // sender for tx/rx, subject otherwise
  NodeId peer = kNoNode;  // tx: unicast target; rx: receiver
  MsgKind msg = MsgKind::unknown;
  Power power = Power::low;
  bool delivered = false;
  bool intended = false;  // rx: receiver is the addressee (or broadcast)
  std::uint32_t round = 0;
  std::int64_t energy = 0;  // nano-units charged by this record
  std::uint32_t code = 0;   // status: from << 8 | to; metric: MetricKind
  double value = 0.0;
  std::vector<ReportId> reports;
  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

struct EventLog {
  std::vector<LogRecord> records;
  friend bool operator==(const EventLog&, const EventLog&) = default;
};

void write_event_log(std::ostream& os, const EventLog& log);

struct RoundStats {
  std::uint32_t round = 0;
  SimTime start = 0;
  std::uint64_t control_tx = 0;      // sensor-originated control transmissions
  std::int64_t control_energy = 0;   // tx + rx of control traffic at sensors, nano
  std::uint32_t ch_elections = 0;
  friend bool operator==(const RoundStats&, const RoundStats&) = default;
};

struct MetricsRecord {
  std::string protocol;
  std::uint32_t node_count = 0;
  std::uint64_t seed = 0;
  std::string ifs;
  std::uint64_t topology_fingerprint = 0;

  std::uint64_t msgs_generated = 0;
  std::uint64_t msgs_at_sink = 0;
  std::uint64_t duplicate_deliveries = 0;
  std::uint64_t reports_dropped = 0;
  bool dtsr_defined = false;
  double dtsr = 0.0;

  std::optional<SimTime> lifetime;  // disconnect instant
  std::uint64_t msgs_at_sink_before_disconnect = 0;
  SimTime end_time = 0;

  std::uint32_t rounds = 0;
  std::vector<RoundStats> round_stats;
  std::uint32_t degenerate_rounds = 0;
  std::uint32_t reclusters_called = 0;
  std::uint32_t unreachable_heads = 0;
  std::uint32_t ch_below_threshold = 0;

  std::array<std::uint64_t, 18> tx_by_kind{};
  std::uint64_t data_tx = 0;
  std::uint64_t control_tx = 0;

  std::uint32_t final_ch = 0;
  std::uint32_t final_cm = 0;
  std::uint32_t final_tcm = 0;
  std::uint32_t final_snch = 0;
  std::uint32_t final_uc = 0;
  std::uint32_t dead_nodes = 0;

  [[nodiscard]] bool censored() const { return !lifetime.has_value(); }
  // Per-sensor control transmissions and energy for one round (0 if absent).
  [[nodiscard]] double control_tx_per_node(std::uint32_t round) const;
  [[nodiscard]] double control_energy_per_node(std::uint32_t round) const;

  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

struct NetworkSnapshot {
  SimTime time = 0;
  std::vector<protocol::NodeState> nodes;  // index == id; [0] is the sink
  std::vector<EnergyAccount> energy;
};

// Final per-node state, one line per node.
void write_snapshot(std::ostream& os, const NetworkSnapshot& snap);

class Simulator {
 public:
  explicit Simulator(SimConfig config);
  Simulator(SimConfig config, LinkModel model);

  // Processes every event strictly before `t` (or until the run stops).
  void run_until(SimTime t);
  void run();

  [[nodiscard]] bool stopped() const { return stopped_; }
  [[nodiscard]] SimTime now() const { return now_; }
  [[nodiscard]] SimTime end_time() const { return end_; }
  [[nodiscard]] const SimConfig& config() const { return cfg_; }
  [[nodiscard]] const LinkModel& model() const { return model_; }
  [[nodiscard]] const std::vector<protocol::NodeState>& nodes() const { return nodes_; }
  [[nodiscard]] const EnergyLedger& ledger() const { return ledger_; }
  [[nodiscard]] const EventLog& log() const { return log_; }
  [[nodiscard]] EventLog take_log() { return std::move(log_); }
  [[nodiscard]] MetricsRecord metrics() const;
  [[nodiscard]] NetworkSnapshot snapshot() const;

  // Sink reachability of every alive sensor through its current pointers.
  [[nodiscard]] std::vector<bool> reachable() const;

 private:
  enum class QType : std::uint8_t { start, tx, deliver, timer, alarm, check, forced_recluster };
  struct QItem {
    SimTime time = 0;
    std::uint64_t seq = 0;
    QType type = QType::start;
    NodeId node = 0;
    protocol::TimerKind timer{};
    std::uint32_t epoch = 0;
    std::uint32_t arg = 0;
    Power power = Power::low;
    std::shared_ptr<const Message> msg;
    bool operator>(const QItem& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  void init();
  static QItem make_item(SimTime time, QType type, NodeId node);
  void push(QItem item);
  void process(const QItem& item);
  void step_node(NodeId v, const protocol::Event& ev);
  void apply(NodeId v, std::vector<protocol::Action>& actions);
  void transmit(const QItem& item);
  void check();
  void kill(NodeId v);
  void sync_energy(NodeId v);
  void log_record(LogRecord r);
  std::uint32_t control_round(const Message& m) const;
  RoundStats& round_stats(std::uint32_t round);
  void finish();

  SimConfig cfg_;
  LinkModel model_;
  protocol::ProtocolConfig pcfg_;
  EnergyLedger ledger_;
  std::vector<protocol::NodeState> nodes_;
  std::vector<bool> alarm_pending_;
  std::vector<bool> death_logged_;
  std::priority_queue<QItem, std::vector<QItem>, std::greater<>> queue_;
  std::uint64_t qseq_ = 0;
  std::uint64_t lseq_ = 0;
  SimTime now_ = 0;
  SimTime end_ = 0;
  bool stopped_ = false;
  bool finished_ = false;

  // Per directed edge, per power, per traffic class (control, data) draw counters.
  std::array<std::vector<std::vector<std::array<std::uint64_t, 2>>>, 2> draw_counter_;

  EventLog log_;
  MetricsRecord m_;
  std::unordered_set<std::uint64_t> generated_;
  std::unordered_set<std::uint64_t> delivered_;
  std::uint32_t sink_round_ = 0;
  SimTime data_start_ = 0;
  std::vector<protocol::Action> scratch_;
};

struct RunResult {
  MetricsRecord metrics;
  EventLog log;
  NetworkSnapshot snapshot;
};

RunResult run(const SimConfig& config);
RunResult run(const SimConfig& config, const LinkModel& model);

// Resolves the model a config describes: imported from topology.file, else generated.
LinkModel resolve_topology(const SimConfig& config);

}  // namespace acdmcp::sim
