#include "acdmcp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "acdmcp/rng.hpp"

namespace acdmcp::sim {

namespace {

constexpr std::uint64_t kLossStream = 0x6c6f7373;
constexpr std::int64_t kMicrosPerSecond = 1'000'000;

std::uint64_t report_key(const ReportId& r) { return (static_cast<std::uint64_t>(r.origin) << 32) | r.seq; }

}  // namespace

std::int64_t to_nano(double units) { return std::llround(units * static_cast<double>(kNanoPerUnit)); }

double from_nano(std::int64_t nano) { return static_cast<double>(nano) / static_cast<double>(kNanoPerUnit); }

// ---- energy ledger ----

EnergyLedger::EnergyLedger(const LinkModel& model, const EnergyConfig& cfg)
    : tx_low_(to_nano(cfg.tx_low)),
      tx_high_(to_nano(cfg.tx_high)),
      rx_(to_nano(cfg.rx)),
      idle_per_second_(to_nano(cfg.idle_per_second)) {
  accounts_.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    auto& a = accounts_[i];
    if (i == kSinkId) {
      a.unlimited = true;
      continue;
    }
    a.initial = to_nano(model.nodes[i].e_initial);
    a.residual = a.initial;
    if (a.residual <= 0) a.death = 0;
  }
}

bool EnergyLedger::charge(NodeId id, EnergyCategory cat, std::int64_t amount, SimTime now) {
  auto& a = accounts_[id];
  if (a.unlimited) return true;
  if (a.death) return false;
  const std::int64_t take = std::min(amount, a.residual);
  switch (cat) {
    case EnergyCategory::tx_low: a.tx_low += take; break;
    case EnergyCategory::tx_high: a.tx_high += take; break;
    case EnergyCategory::rx: a.rx += take; break;
    case EnergyCategory::idle: a.idle += take; break;
  }
  a.residual -= take;
  if (a.residual <= 0) {
    a.death = now;
    return false;
  }
  return true;
}

bool EnergyLedger::advance_idle(NodeId id, SimTime now) {
  auto& a = accounts_[id];
  if (a.unlimited) return true;
  if (a.death) return false;
  if (now <= a.idle_until) return true;
  const std::int64_t total = idle_per_second_ * (now - a.idle_until) + a.idle_carry;
  a.idle_until = now;
  a.idle_carry = static_cast<std::int64_t>(total % kMicrosPerSecond);
  const auto amount = static_cast<std::int64_t>(total / kMicrosPerSecond);
  if (amount == 0) return true;
  return charge(id, EnergyCategory::idle, amount, now);
}

bool audit_ledger(const EnergyLedger& ledger) {
  for (const auto& a : ledger.accounts()) {
    if (a.unlimited) continue;
    if (a.tx_low < 0 || a.tx_high < 0 || a.rx < 0 || a.idle < 0) return false;
    if (a.residual < 0) return false;
    if (a.residual != a.initial - a.spent()) return false;
    if ((a.residual == 0) != a.death.has_value() && a.initial > 0) return false;
  }
  return true;
}

// ---- log ----

std::string_view to_string(LogKind k) {
  switch (k) {
    case LogKind::tx: return "tx";
    case LogKind::rx: return "rx";
    case LogKind::status: return "status";
    case LogKind::metric: return "metric";
    case LogKind::death: return "death";
    case LogKind::disconnect: return "disconnect";
    case LogKind::end: return "end";
  }
  return "?";
}

namespace {

void write_reports(std::ostream& os, const std::vector<ReportId>& reports) {
  if (reports.empty()) return;
  os << " reports=";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i) os << ',';
    os << reports[i].origin << ':' << reports[i].seq;
  }
}

}  // namespace

void write_event_log(std::ostream& os, const EventLog& log) {
  os << "# acdmcp event log v1\n";
  for (const auto& r : log.records) {
    os << r.time << ' ' << r.seq << ' ' << to_string(r.kind) << " node=" << r.node;
    switch (r.kind) {
      case LogKind::tx:
        os << " to=";
        if (r.peer == kNoNode) {
          os << '*';
        } else {
          os << r.peer;
        }
        os << " msg=" << to_string(r.msg) << " power=" << to_string(r.power) << " round=" << r.round
           << " energy=" << r.energy;
        write_reports(os, r.reports);
        break;
      case LogKind::rx:
        os << " peer=" << r.peer << " msg=" << to_string(r.msg) << " power=" << to_string(r.power)
           << " delivered=" << r.delivered << " intended=" << r.intended << " round=" << r.round
           << " energy=" << r.energy;
        break;
      case LogKind::status:
        os << " from=" << protocol::to_string(static_cast<protocol::NodeStatus>(r.code >> 8))
           << " to=" << protocol::to_string(static_cast<protocol::NodeStatus>(r.code & 0xff)) << " round=" << r.round;
        break;
      case LogKind::metric:
        os << " kind=" << protocol::to_string(static_cast<protocol::MetricKind>(r.code)) << " value=" << format_double(r.value)
           << " round=" << r.round;
        write_reports(os, r.reports);
        break;
      case LogKind::death:
      case LogKind::end:
        break;
      case LogKind::disconnect:
        os << " value=" << format_double(r.value);
        break;
    }
    os << '\n';
  }
}

void write_snapshot(std::ostream& os, const NetworkSnapshot& snap) {
  auto opt = [&os](const std::optional<NodeId>& v) {
    if (v) {
      os << *v;
    } else {
      os << '-';
    }
  };
  os << "# acdmcp snapshot v1\n";
  os << "time " << snap.time << '\n';
  for (const auto& n : snap.nodes) {
    const auto& a = snap.energy[n.id];
    os << "node " << n.id << " status=" << (n.is_sink ? std::string_view("sink") : protocol::to_string(n.status))
       << " alive=" << (a.alive() ? 1 : 0) << " tch=" << (n.is_tch ? 1 : 0) << " ch=";
    opt(n.cluster.my_ch);
    os << " parent=";
    opt(n.cluster.my_tch);
    os << " depth=" << n.cluster.depth << " members=" << n.cluster.members.size()
       << " sub=" << n.cluster.sub_neighbors.size() << " dsn_high=";
    opt(n.routing.dsn_high);
    os << " hts_high=" << n.routing.hts_high << " dsn_low=";
    opt(n.routing.dsn_low);
    os << " hts_low=" << n.routing.hts_low << " round=" << n.round << " e_re=";
    if (a.unlimited) {
      os << "inf";
    } else {
      os << format_double(from_nano(a.residual));
    }
    os << '\n';
  }
}

// ---- metrics ----

double MetricsRecord::control_tx_per_node(std::uint32_t round) const {
  for (const auto& r : round_stats) {
    if (r.round == round) return node_count ? static_cast<double>(r.control_tx) / node_count : 0.0;
  }
  return 0.0;
}

double MetricsRecord::control_energy_per_node(std::uint32_t round) const {
  for (const auto& r : round_stats) {
    if (r.round == round) return node_count ? from_nano(r.control_energy) / node_count : 0.0;
  }
  return 0.0;
}

// ---- simulator ----

LinkModel resolve_topology(const SimConfig& config) {
  if (!config.topology.file.empty()) return load_topology_file(config.topology.file);
  return generate_topology(config);
}

Simulator::Simulator(SimConfig config) : cfg_(std::move(config)) {
  model_ = resolve_topology(cfg_);
  init();
}

Simulator::Simulator(SimConfig config, LinkModel model) : cfg_(std::move(config)), model_(std::move(model)) { init(); }

void Simulator::init() {
  cfg_.validate();
  pcfg_ = cfg_.protocol;
  const std::uint32_t n = model_.sensor_count();
  double mean = 0.0;
  for (NodeId i = 1; i <= n; ++i) mean += model_.nodes[i].e_initial;
  mean = n ? mean / n : cfg_.energy.initial;
  if (!(mean > 0.0)) mean = cfg_.energy.initial;
  pcfg_.e_th_initial = cfg_.energy.e_th_initial > 0.0 ? cfg_.energy.e_th_initial : cfg_.energy.e_th_fraction * mean;

  ledger_ = EnergyLedger(model_, cfg_.energy);
  nodes_.reserve(model_.size());
  nodes_.push_back(protocol::make_sink(cfg_.seed));
  for (NodeId i = 1; i <= n; ++i) {
    nodes_.push_back(protocol::make_node(i, model_.nodes[i].e_initial, pcfg_.e_th_initial, cfg_.seed));
  }
  alarm_pending_.assign(model_.size(), false);
  death_logged_.assign(model_.size(), false);
  for (int p = 0; p < 2; ++p) {
    auto& counters = draw_counter_[p];
    counters.resize(model_.size());
    for (std::size_t s = 0; s < model_.size(); ++s) counters[s].assign(model_.out(static_cast<NodeId>(s), p == 0 ? Power::low : Power::high).size(), {0, 0});
  }

  const auto first = protocol::make_timeline(pcfg_, true);
  end_ = cfg_.report_rounds > 0 ? first.data_start + static_cast<SimTime>(cfg_.report_rounds) * pcfg_.report_period
                                : cfg_.duration;

  m_.protocol = std::string(protocol::to_string(pcfg_.variant));
  m_.node_count = n;
  m_.seed = cfg_.seed;
  m_.ifs = pcfg_.ifs.label();
  m_.topology_fingerprint = model_.fingerprint();

  for (NodeId i = 0; i < model_.size(); ++i) push(make_item(0, QType::start, i));
  push(make_item(first.data_start + pcfg_.report_period / 2, QType::check, kSinkId));
  for (SimTime t : cfg_.forced_reclusters) push(make_item(t, QType::forced_recluster, kSinkId));
  for (NodeId i = 1; i <= n; ++i) {
    if (!ledger_.alive(i)) kill(i);
  }
}

Simulator::QItem Simulator::make_item(SimTime time, QType type, NodeId node) {
  QItem q;
  q.time = time;
  q.type = type;
  q.node = node;
  return q;
}

void Simulator::push(QItem item) {
  item.seq = qseq_++;
  queue_.push(std::move(item));
}

void Simulator::run_until(SimTime t) {
  const SimTime limit = std::min(t, end_);
  while (!stopped_ && !queue_.empty() && queue_.top().time < limit) {
    QItem item = queue_.top();
    queue_.pop();
    process(item);
  }
  if (!stopped_ && t >= end_) stopped_ = true;
  if (stopped_) {
    finish();
  } else {
    now_ = std::max(now_, limit);
  }
}

void Simulator::run() { run_until(end_); }

void Simulator::process(const QItem& item) {
  now_ = item.time;
  switch (item.type) {
    case QType::start:
      step_node(item.node, protocol::Event{now_, protocol::event::Start{}});
      break;
    case QType::tx:
      transmit(item);
      break;
    case QType::deliver:
      step_node(item.node, protocol::Event{now_, protocol::event::MsgIn{*item.msg, item.power}});
      break;
    case QType::timer:
      step_node(item.node, protocol::Event{now_, protocol::event::Timer{item.timer, item.epoch, item.arg}});
      break;
    case QType::alarm:
      alarm_pending_[item.node] = false;
      step_node(item.node, protocol::Event{now_, protocol::event::EnergyBelowThreshold{}});
      break;
    case QType::check:
      check();
      if (!stopped_) push(make_item(now_ + pcfg_.report_period, QType::check, kSinkId));
      break;
    case QType::forced_recluster: {
      NodeId pick = kNoNode;
      for (NodeId i = 1; i < nodes_.size() && pick == kNoNode; ++i) {
        if (ledger_.alive(i) && nodes_[i].status == protocol::NodeStatus::ch) pick = i;
      }
      for (NodeId i = 1; i < nodes_.size() && pick == kNoNode; ++i) {
        if (ledger_.alive(i)) pick = i;
      }
      if (pick != kNoNode) step_node(pick, protocol::Event{now_, protocol::event::Recluster{}});
      break;
    }
  }
}

void Simulator::sync_energy(NodeId v) {
  if (v == kSinkId) return;
  auto& s = nodes_[v];
  s.energy.e_re = ledger_.account(v).e_re();
  if (pcfg_.variant == protocol::Variant::acdmcp && s.status == protocol::NodeStatus::ch && !s.threshold_alarm &&
      s.energy.e_re < s.energy.e_th && !alarm_pending_[v] && ledger_.alive(v)) {
    alarm_pending_[v] = true;
    push(make_item(now_, QType::alarm, v));
  }
}

void Simulator::step_node(NodeId v, const protocol::Event& ev) {
  if (v != kSinkId) {
    if (!ledger_.advance_idle(v, now_)) {
      kill(v);
      return;
    }
    nodes_[v].energy.e_re = ledger_.account(v).e_re();
  }
  scratch_.clear();
  protocol::step_in_place(pcfg_, nodes_[v], ev, scratch_);
  apply(v, scratch_);
  sync_energy(v);
}

void Simulator::apply(NodeId v, std::vector<protocol::Action>& actions) {
  for (auto& a : actions) {
    if (auto* send = std::get_if<protocol::action::Send>(&a)) {
      QItem q = make_item(now_ + send->delay, QType::tx, v);
      q.power = send->power;
      q.msg = std::make_shared<const Message>(std::move(send->msg));
      push(std::move(q));
    } else if (auto* t = std::get_if<protocol::action::SetTimer>(&a)) {
      QItem q = make_item(now_ + t->delay, QType::timer, v);
      q.timer = t->kind;
      q.epoch = t->epoch;
      q.arg = t->arg;
      push(std::move(q));
    } else if (auto* sc = std::get_if<protocol::action::StatusChange>(&a)) {
      const auto& s = nodes_[v];
      if (sc->to == protocol::NodeStatus::ch) {
        round_stats(s.round).ch_elections += 1;
        if (pcfg_.variant == protocol::Variant::acdmcp && !(s.energy.e_re > s.energy.e_th)) m_.ch_below_threshold += 1;
      }
      if (cfg_.record_log) {
        LogRecord r;
        r.time = now_;
        r.kind = LogKind::status;
        r.node = v;
        r.round = s.round;
        r.code = (static_cast<std::uint32_t>(sc->from) << 8) | static_cast<std::uint32_t>(sc->to);
        log_record(std::move(r));
      }
    } else if (auto* em = std::get_if<protocol::action::EmitMetric>(&a)) {
      using protocol::MetricKind;
      switch (em->kind) {
        case MetricKind::report_generated:
          for (const auto& r : em->reports) {
            if (generated_.insert(report_key(r)).second) m_.msgs_generated += 1;
          }
          break;
        case MetricKind::report_delivered:
          for (const auto& r : em->reports) {
            const auto k = report_key(r);
            if (generated_.count(k) && delivered_.insert(k).second) {
              m_.msgs_at_sink += 1;
            } else {
              m_.duplicate_deliveries += 1;
            }
          }
          break;
        case MetricKind::report_dropped:
          m_.reports_dropped += em->reports.size();
          break;
        case MetricKind::recluster_called:
          m_.reclusters_called += 1;
          break;
        case MetricKind::round_started:
          if (v == kSinkId) {
            sink_round_ = nodes_[kSinkId].round;
            round_stats(sink_round_).start = now_;
            data_start_ = now_ + nodes_[kSinkId].scratch.timeline.data_start;
          }
          break;
        case MetricKind::unreachable_head:
          m_.unreachable_heads += 1;
          break;
        case MetricKind::dropped_message:
          break;
      }
      if (cfg_.record_log && em->kind != MetricKind::round_started) {
        LogRecord r;
        r.time = now_;
        r.kind = LogKind::metric;
        r.node = v;
        r.round = nodes_[v].round;
        r.code = static_cast<std::uint32_t>(em->kind);
        r.value = em->value;
        r.reports = std::move(em->reports);
        log_record(std::move(r));
      }
    }
  }
}

std::uint32_t Simulator::control_round(const Message& m) const {
  if (const auto* rc = std::get_if<msg::Recluster>(&m.body)) return rc->round;
  return m.round;
}

RoundStats& Simulator::round_stats(std::uint32_t round) {
  for (auto& r : m_.round_stats) {
    if (r.round == round) return r;
  }
  m_.round_stats.push_back(RoundStats{round, 0, 0, 0, 0});
  std::sort(m_.round_stats.begin(), m_.round_stats.end(), [](const auto& a, const auto& b) { return a.round < b.round; });
  for (auto& r : m_.round_stats) {
    if (r.round == round) return r;
  }
  return m_.round_stats.back();
}

void Simulator::transmit(const QItem& item) {
  const NodeId v = item.node;
  const Message& m = *item.msg;
  const Power p = item.power;
  const std::int64_t tx_cost = ledger_.cost_tx(p);
  if (v != kSinkId) {
    if (!ledger_.advance_idle(v, now_) ||
        !ledger_.charge(v, p == Power::low ? EnergyCategory::tx_low : EnergyCategory::tx_high, tx_cost, now_)) {
      kill(v);
      return;
    }
    sync_energy(v);
  }
  const MsgKind kind = m.kind();
  const bool data = kind == MsgKind::data;
  m_.tx_by_kind[static_cast<std::size_t>(kind)] += 1;
  RoundStats* rs = nullptr;
  if (data) {
    m_.data_tx += 1;
  } else {
    m_.control_tx += 1;
    if (v != kSinkId) {
      rs = &round_stats(control_round(m));
      rs->control_tx += 1;
      rs->control_energy += tx_cost;
    }
  }
  if (cfg_.record_log) {
    LogRecord r;
    r.time = now_;
    r.kind = LogKind::tx;
    r.node = v;
    r.peer = m.dst.value_or(kNoNode);
    r.msg = kind;
    r.power = p;
    r.round = data ? m.round : control_round(m);
    r.energy = v == kSinkId ? 0 : tx_cost;
    if (const auto* d = std::get_if<msg::Data>(&m.body)) r.reports = d->reports;
    log_record(std::move(r));
  }

  const bool lossless = cfg_.reliable_control && !data;
  const std::size_t cls = data ? 1 : 0;
  const auto& links = model_.out(v, p);
  auto& counters = draw_counter_[p == Power::low ? 0 : 1][v];
  for (std::size_t i = 0; i < links.size(); ++i) {
    const NodeId d = links[i].dst;
    const std::uint64_t counter = counters[i][cls]++;
    const double u = to_unit(hash_combine({cfg_.seed, kLossStream, v, d, static_cast<std::uint64_t>(p), cls, counter}));
    bool delivered = lossless || u < links[i].lambda;
    if (!ledger_.alive(d)) continue;
    std::int64_t rx_cost = 0;
    if (delivered && d != kSinkId) {
      rx_cost = ledger_.cost_rx();
      if (!ledger_.advance_idle(d, now_) || !ledger_.charge(d, EnergyCategory::rx, rx_cost, now_)) {
        kill(d);
        delivered = false;
      } else {
        sync_energy(d);
      }
      if (!data && rs == nullptr) rs = &round_stats(control_round(m));
      if (!data) rs->control_energy += rx_cost;
    }
    if (cfg_.record_log) {
      LogRecord r;
      r.time = now_;
      r.kind = LogKind::rx;
      r.node = v;
      r.peer = d;
      r.msg = kind;
      r.power = p;
      r.delivered = delivered;
      r.intended = !m.dst || *m.dst == d;
      r.round = data ? m.round : control_round(m);
      r.energy = rx_cost;
      log_record(std::move(r));
    }
    if (delivered) {
      QItem q = make_item(now_ + cfg_.tx_delay, QType::deliver, d);
      q.power = p;
      q.msg = item.msg;
      push(std::move(q));
    }
  }
}

void Simulator::kill(NodeId v) {
  if (death_logged_[v]) return;
  death_logged_[v] = true;
  if (cfg_.record_log) {
    LogRecord r;
    r.time = now_;
    r.kind = LogKind::death;
    r.node = v;
    r.round = nodes_[v].round;
    log_record(std::move(r));
  }
}

std::vector<bool> Simulator::reachable() const {
  using protocol::NodeStatus;
  const std::size_t n = nodes_.size();
  std::vector<bool> ok(n, false);
  ok[kSinkId] = true;
  for (NodeId start = 1; start < n; ++start) {
    if (!ledger_.alive(start)) continue;
    NodeId u = start;
    bool inter = false;
    for (std::size_t hops = 0; hops <= 2 * n + 2; ++hops) {
      if (u == kSinkId) {
        ok[start] = true;
        break;
      }
      if (!ledger_.alive(u)) break;
      const auto& s = nodes_[u];
      std::optional<NodeId> next;
      if (s.status == NodeStatus::cm || s.status == NodeStatus::tcm) {
        next = inter ? s.routing.dsn_low : (s.status == NodeStatus::cm ? s.cluster.my_ch : s.cluster.my_tch);
      } else if (protocol::is_head(s.status)) {
        if (auto r = s.routing.effective_route(true)) next = r->next;
        inter = true;
      }
      if (!next) break;
      u = *next;
    }
  }
  return ok;
}

void Simulator::check() {
  const std::size_t n = nodes_.size();
  for (NodeId i = 1; i < n; ++i) {
    if (!ledger_.advance_idle(i, now_)) kill(i);
  }
  if (now_ < data_start_ || m_.lifetime) return;
  std::size_t alive = 0;
  std::size_t unreachable = 0;
  const auto ok = reachable();
  for (NodeId i = 1; i < n; ++i) {
    if (!ledger_.alive(i)) continue;
    ++alive;
    if (!ok[i]) ++unreachable;
  }
  const bool disconnected =
      alive == 0 || static_cast<double>(unreachable) >= cfg_.disconnect_fraction * static_cast<double>(alive);
  if (!disconnected) return;
  m_.lifetime = now_;
  m_.msgs_at_sink_before_disconnect = m_.msgs_at_sink;
  if (cfg_.record_log) {
    LogRecord r;
    r.time = now_;
    r.kind = LogKind::disconnect;
    r.node = kSinkId;
    r.value = alive == 0 ? 1.0 : static_cast<double>(unreachable) / static_cast<double>(alive);
    log_record(std::move(r));
  }
  if (cfg_.until_disconnect) stopped_ = true;
}

void Simulator::log_record(LogRecord r) {
  r.seq = lseq_++;
  log_.records.push_back(std::move(r));
}

void Simulator::finish() {
  if (finished_) return;
  finished_ = true;
  if (now_ < end_ && !m_.lifetime) now_ = end_;
  for (NodeId i = 1; i < nodes_.size(); ++i) {
    if (!ledger_.advance_idle(i, now_)) kill(i);
    nodes_[i].energy.e_re = ledger_.account(i).e_re();
  }
  m_.end_time = now_;
  if (cfg_.record_log) {
    LogRecord r;
    r.time = now_;
    r.kind = LogKind::end;
    r.node = kSinkId;
    log_record(std::move(r));
  }
}

MetricsRecord Simulator::metrics() const {
  MetricsRecord m = m_;
  m.dtsr_defined = m.msgs_generated > 0;
  m.dtsr = m.dtsr_defined ? static_cast<double>(m.msgs_at_sink) / static_cast<double>(m.msgs_generated) : 0.0;
  m.rounds = sink_round_;
  m.degenerate_rounds = 0;
  for (const auto& r : m.round_stats) {
    if (r.round >= 1 && r.round <= sink_round_ && r.ch_elections == 0) m.degenerate_rounds += 1;
  }
  for (NodeId i = 1; i < nodes_.size(); ++i) {
    if (!ledger_.alive(i)) {
      m.dead_nodes += 1;
      continue;
    }
    switch (nodes_[i].status) {
      case protocol::NodeStatus::ch: m.final_ch += 1; break;
      case protocol::NodeStatus::cm: m.final_cm += 1; break;
      case protocol::NodeStatus::tcm: m.final_tcm += 1; break;
      case protocol::NodeStatus::snch: m.final_snch += 1; break;
      default: m.final_uc += 1; break;
    }
  }
  return m;
}

NetworkSnapshot Simulator::snapshot() const { return NetworkSnapshot{now_, nodes_, ledger_.accounts()}; }

RunResult run(const SimConfig& config) {
  Simulator sim(config);
  sim.run();
  auto metrics = sim.metrics();
  auto snap = sim.snapshot();
  return RunResult{std::move(metrics), sim.take_log(), std::move(snap)};
}

RunResult run(const SimConfig& config, const LinkModel& model) {
  Simulator sim(config, model);
  sim.run();
  auto metrics = sim.metrics();
  auto snap = sim.snapshot();
  return RunResult{std::move(metrics), sim.take_log(), std::move(snap)};
}

}  // namespace acdmcp::sim
