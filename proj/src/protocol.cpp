#include "acdmcp/protocol.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "acdmcp/baseline.hpp"

namespace acdmcp::protocol {

std::string_view to_string(Variant v) { return v == Variant::acdmcp ? "acdmcp" : "id_baseline"; }

std::optional<Variant> variant_from_string(std::string_view name) {
  if (name == "acdmcp") return Variant::acdmcp;
  if (name == "id_baseline") return Variant::id_baseline;
  return std::nullopt;
}

std::string_view to_string(NodeStatus s) {
  static constexpr std::array<std::string_view, 6> names = {"UC", "CHC", "CM", "TCM", "CH", "SNCH"};
  return names[static_cast<std::size_t>(s)];
}

bool is_terminal(NodeStatus s) {
  return s == NodeStatus::cm || s == NodeStatus::tcm || s == NodeStatus::ch || s == NodeStatus::snch;
}

bool is_head(NodeStatus s) { return s == NodeStatus::ch || s == NodeStatus::snch; }

std::string_view to_string(TimerKind k) {
  static constexpr std::array<std::string_view, 19> names = {
      "discovery_close", "stats_close",    "election",      "offer_close",    "search_close",
      "orphan_close",    "orphan_offer_close", "iccom_start", "hp_sink_close", "hp_offer_close",
      "back_high",       "lp_sink_close",  "lp_fallback",   "lp_offer_close", "back_low",
      "iccom_end",       "data_tick",      "aggregate_send", "round_start",
  };
  return names[static_cast<std::size_t>(k)];
}

std::string_view to_string(MetricKind k) {
  static constexpr std::array<std::string_view, 7> names = {
      "report_generated", "report_delivered", "report_dropped",  "recluster_called",
      "round_started",    "unreachable_head", "dropped_message",
  };
  return names[static_cast<std::size_t>(k)];
}

void ProtocolConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("protocol." + key + ": " + why);
  };
  if (!ifs.valid_three_term()) fail("ifs", "weights must lie in [0,1] and sum to 1");
  if (!(if_zeta >= 0.0 && if_zeta < 1.0)) fail("if_zeta", "must lie in [0,1)");
  if (ideg == 0) fail("ideg", "must be at least 1");
  if (!(e_th_initial > 0.0)) fail("e_th_initial", "must be positive");
  if (!(e_th_decay >= 0.0 && e_th_decay < 1.0)) fail("e_th_decay", "must lie in [0,1)");
  if (repeats == 0) fail("repeats", "must be at least 1");
  if (broadcast_slot <= 0) fail("broadcast_slot_ms", "must be positive");
  if (single_span <= 0) fail("single_span_ms", "must be positive");
  if (discovery_window < 0) fail("discovery_window_ms", "must be >= 0");
  if (share_window < 0) fail("share_window_ms", "must be >= 0");
  if (iccom_hop_window < 0) fail("iccom_hop_window_ms", "must be >= 0");
  if (iccom_duration <= 0) fail("iccom_duration_ms", "must be positive");
  if (report_period <= 0) fail("report_period_ms", "must be positive");
  if (report_slot <= 0) fail("report_slot_ms", "must be positive");
  const SimTime slots = static_cast<SimTime>(depth_slots + hts_slots + 1) * report_slot;
  if (slots >= report_period) fail("report_slot_ms", "aggregation slots must fit inside one report period");
  if (silence_periods == 0) fail("silence_periods", "must be at least 1");
  if (recluster_lead < 0) fail("recluster_lead_ms", "must be >= 0");
}

double ProtocolConfig::e_th_for_round(std::uint32_t round) const {
  const std::uint32_t k = round > 0 ? round - 1 : 0;
  return e_th_initial * std::pow(1.0 - e_th_decay, static_cast<double>(k));
}

Timeline make_timeline(const ProtocolConfig& cfg, bool first_round) {
  Timeline t;
  t.ndm_span = static_cast<SimTime>(cfg.repeats) * cfg.broadcast_slot;
  t.share_window = cfg.share_window > 0 ? cfg.share_window : 2 * cfg.single_span;
  t.hop_window = cfg.iccom_hop_window > 0 ? cfg.iccom_hop_window : 2 * t.ndm_span;
  t.discovery = first_round ? (cfg.discovery_window > 0 ? cfg.discovery_window : 2 * t.ndm_span) : 0;
  const SimTime s = t.share_window;
  t.stats_close = t.discovery + s;
  t.election = t.discovery + 2 * s;
  t.offer_close = t.discovery + 3 * s;
  t.formation_end = t.offer_close + static_cast<SimTime>(cfg.scj_retries + 2) * s;
  t.iccom_start = t.formation_end;
  t.data_start = t.iccom_start + cfg.iccom_duration;
  return t;
}

std::optional<RoutingPointers::Route> RoutingPointers::effective_route(bool head) const {
  if (head) {
    if (hts_low == 1 && dsn_low) return Route{*dsn_low, Power::low, 1};
    if (dsn_high) return Route{*dsn_high, Power::high, hts_high};
  }
  if (dsn_low) return Route{*dsn_low, Power::low, hts_low};
  return std::nullopt;
}

NodeState make_node(NodeId id, double e_initial, double e_th, std::uint64_t seed) {
  NodeState s;
  s.id = id;
  s.energy = {e_initial, e_th};
  s.rng = Rng(hash_combine({seed, 0x6a17u, id}));
  return s;
}

NodeState make_sink(std::uint64_t seed) {
  NodeState s = make_node(kSinkId, 0.0, 1.0, seed);
  s.is_sink = true;
  return s;
}

namespace {

class Machine {
 public:
  Machine(const ProtocolConfig& cfg, NodeState& s, std::vector<Action>& out, SimTime now)
      : cfg_(cfg), s_(s), out_(out), now_(now), acd_(cfg.variant == Variant::acdmcp) {}

  void dispatch(const Event& ev) {
    std::visit([this](const auto& e) { on(e); }, ev.body);
  }

 private:
  const ProtocolConfig& cfg_;
  NodeState& s_;
  std::vector<Action>& out_;
  SimTime now_;
  bool acd_;

  RoundScratch& sc() { return s_.scratch; }
  const Timeline& tl() { return s_.scratch.timeline; }

  // ---- action helpers ----

  void send(Payload body, Power p, std::optional<NodeId> dst = std::nullopt, SimTime delay = 0) {
    if (p == Power::low) {
      ++s_.tx_low;
    } else {
      ++s_.tx_high;
    }
    out_.push_back(action::Send{Message{s_.id, dst, s_.round, std::move(body)}, p, delay});
  }

  void timer(TimerKind k, SimTime delay, std::uint32_t arg = 0) {
    out_.push_back(action::SetTimer{k, std::max<SimTime>(0, delay), s_.epoch, arg});
  }

  // Timer at an offset from the round start.
  void at(TimerKind k, SimTime offset, std::uint32_t arg = 0) { timer(k, sc().round_start + offset - now_, arg); }

  void emit(MetricKind k, double v, std::vector<ReportId> reports = {}, std::string note = {}) {
    out_.push_back(action::EmitMetric{k, v, std::move(reports), std::move(note)});
  }

  void set_status(NodeStatus st) {
    if (s_.status != st) {
      out_.push_back(action::StatusChange{s_.status, st});
      s_.status = st;
    }
    if (st != NodeStatus::cm && st != NodeStatus::tcm) s_.is_tch = false;
  }

  SimTime jitter(SimTime span) { return span > 0 ? static_cast<SimTime>(s_.rng.below(static_cast<std::uint64_t>(span))) : 0; }

  double e_th() const { return s_.energy.e_th; }
  std::uint32_t n() const { return cfg_.repeats; }

  double link_out(NodeId j) const {
    auto it = s_.neighbors.find(j);
    if (it == s_.neighbors.end()) return 0.0;
    if (it->second.estimated) return it->second.estimated_out_lr;
    return metric::packet_reception_ratio(it->second.link_stats_low.heard, n());
  }

  // ---- round lifecycle ----

  void on(const event::Start&) {
    s_.round = 1;
    s_.pending_round = 1;
    begin_round(true);
  }

  void begin_round(bool first) {
    ++s_.epoch;
    const bool discovery = first || !acd_;
    s_.scratch = RoundScratch{};
    sc().first_round = first;
    sc().timeline = make_timeline(cfg_, discovery);
    sc().round_start = now_;
    s_.threshold_alarm = false;
    emit(MetricKind::round_started, s_.round);
    if (s_.is_sink) {
      s_.routing = RoutingPointers{};
      at(TimerKind::iccom_start, tl().iccom_start);
      return;
    }
    s_.energy.e_th = cfg_.e_th_for_round(s_.round);
    s_.cluster = ClusterPointers{};
    s_.routing = RoutingPointers{};
    set_status(NodeStatus::uc);
    if (!acd_ && !first) {
      s_.neighbors.clear();
    }
    if (discovery) {
      for (std::uint32_t i = 0; i < n(); ++i) send(msg::Ndm{i}, Power::low, std::nullopt, jitter(tl().ndm_span));
    }
    at(TimerKind::discovery_close, tl().discovery);
    at(TimerKind::iccom_end, tl().data_start);
    at(TimerKind::data_tick, tl().data_start);
  }

  void call_recluster() {
    if (s_.pending_round > s_.round) return;
    const std::uint32_t r = s_.round + 1;
    s_.pending_round = r;
    send(msg::Recluster{r, now_ + cfg_.recluster_lead}, Power::high);
    timer(TimerKind::round_start, cfg_.recluster_lead, r);
    emit(MetricKind::recluster_called, r);
  }

  void on(const event::Recluster&) {
    if (!s_.is_sink) call_recluster();
  }

  void on(const event::EnergyBelowThreshold&) {
    if (!acd_ || s_.is_sink || s_.status != NodeStatus::ch || s_.threshold_alarm) return;
    if (!(s_.energy.e_re < s_.energy.e_th)) return;
    s_.threshold_alarm = true;
    call_recluster();
  }

  // ---- timers ----

  void on(const event::Timer& t) {
    if (t.kind == TimerKind::round_start) {
      if (t.arg > s_.round) {
        s_.round = t.arg;
        begin_round(false);
      }
      return;
    }
    if (t.epoch != s_.epoch) return;
    switch (t.kind) {
      case TimerKind::discovery_close: return discovery_close();
      case TimerKind::stats_close: return stats_close();
      case TimerKind::election: return election();
      case TimerKind::offer_close: return offer_close();
      case TimerKind::search_close: return search_close(t.arg);
      case TimerKind::orphan_close: return orphan_close();
      case TimerKind::orphan_offer_close: return orphan_offer_close();
      case TimerKind::iccom_start: return iccom_start();
      case TimerKind::hp_sink_close: return hp_sink_close();
      case TimerKind::hp_offer_close: return hp_offer_close();
      case TimerKind::back_high: return back_high();
      case TimerKind::lp_sink_close: return lp_sink_close();
      case TimerKind::lp_fallback: return lp_fallback();
      case TimerKind::lp_offer_close: return lp_offer_close();
      case TimerKind::back_low: return back_low();
      case TimerKind::iccom_end: return iccom_end();
      case TimerKind::data_tick: return data_tick(t.arg);
      case TimerKind::aggregate_send: return aggregate_send();
      case TimerKind::round_start: return;
    }
  }

  // ---- discovery and link estimation ----

  void become_snch() {
    s_.cluster = ClusterPointers{};
    sc().searching = false;
    set_status(NodeStatus::snch);
  }

  void become_ch() {
    s_.cluster = ClusterPointers{};
    set_status(NodeStatus::ch);
  }

  void discovery_close() {
    for (auto& [id, e] : s_.neighbors) {
      e.heard_previous_snapshot = e.heard_snapshot.value_or(0);
      e.heard_snapshot = e.link_stats_low.heard;
    }
    sc().tx_snapshot = s_.tx_low;
    if (s_.neighbors.empty()) {
      become_snch();
      return;
    }
    if (!acd_) {
      at(TimerKind::election, tl().election);
      return;
    }
    msg::Stats st;
    st.tx_low = sc().tx_snapshot;
    st.heard.reserve(s_.neighbors.size());
    for (const auto& [id, e] : s_.neighbors) st.heard.emplace_back(id, *e.heard_snapshot);
    send(std::move(st), Power::low, std::nullopt, jitter(cfg_.single_span));
    at(TimerKind::stats_close, tl().stats_close);
  }

  void on_stats(NodeId from, const msg::Stats& st) {
    auto it = s_.neighbors.find(from);
    if (it == s_.neighbors.end()) return;
    auto& e = it->second;
    e.stats_round = s_.round;
    e.peer_tx_snapshot = st.tx_low;
    e.link_stats_low.acked = 0;
    for (const auto& [id, count] : st.heard) {
      if (id == s_.id) e.link_stats_low.acked = count;
    }
  }

  void stats_close() {
    if (!sc().first_round) {
      // Drop neighbors that have been silent since the previous snapshot.
      std::erase_if(s_.neighbors, [this](const auto& kv) {
        const auto& e = kv.second;
        const bool heard_since = e.heard_snapshot && *e.heard_snapshot > e.heard_previous_snapshot;
        return e.stats_round != s_.round && !heard_since;
      });
    }
    if (s_.neighbors.empty()) {
      become_snch();
      return;
    }
    std::vector<double> lrs;
    lrs.reserve(2 * s_.neighbors.size());
    for (auto& [id, e] : s_.neighbors) {
      e.link_stats_low.sent = sc().tx_snapshot;
      if (e.stats_round == s_.round) {
        e.estimated_out_lr = metric::packet_reception_ratio(e.link_stats_low.acked, sc().tx_snapshot);
        e.estimated_in_lr = (e.heard_snapshot && e.peer_tx_snapshot > 0)
                                ? metric::packet_reception_ratio(*e.heard_snapshot, e.peer_tx_snapshot)
                                : e.estimated_out_lr;
        e.estimated = true;
      } else if (!e.estimated) {
        // No counts from the peer yet: in-LR from the discovery repeats, mirrored outward.
        e.estimated_in_lr = metric::packet_reception_ratio(e.heard_snapshot.value_or(e.link_stats_low.heard), n());
        e.estimated_out_lr = e.estimated_in_lr;
        e.estimated = true;
      }
      lrs.push_back(e.estimated_in_lr);
      if (cfg_.bidirectional_mlr) lrs.push_back(e.estimated_out_lr);
    }
    sc().own_degree = s_.degree();
    sc().own_mlr_in = metric::compute_mlr(lrs);
    sc().own_e_re = s_.energy.e_re;
    if (sc().own_e_re > e_th()) {
      sc().own_score = metric::chcv_election(metric::compute_rei(s_.energy),
                                             metric::compute_ndi(sc().own_degree, cfg_.ideg), sc().own_mlr_in, cfg_.ifs);
      set_status(NodeStatus::chc);
      send(msg::Share{sc().own_mlr_in, sc().own_e_re, sc().own_degree}, Power::low, std::nullopt,
           jitter(cfg_.single_span));
    }
    at(TimerKind::election, tl().election);
  }

  void on_share(NodeId from, const msg::Share& sh) {
    sc().shares[from] = sh;
    auto it = s_.neighbors.find(from);
    if (it != s_.neighbors.end()) it->second.last_advertised = Advertised{sh.e_re, sh.degree, sh.mlr_in};
  }

  // ---- election ----

  metric::ScoredCandidate own_candidate() const {
    metric::CandidateProfile p{s_.id, s_.scratch.own_e_re, s_.scratch.own_degree, s_.scratch.own_mlr_in, 1};
    return {p, s_.scratch.own_score};
  }

  metric::ScoredCandidate election_candidate(NodeId id, double e_re, std::uint32_t degree, double mlr) const {
    metric::CandidateProfile p{id, e_re, degree, mlr, 1};
    return {p, metric::score_for_election(p, e_th(), cfg_.ideg, cfg_.ifs)};
  }

  void announce_ch() {
    send(msg::Ich{sc().own_e_re, sc().own_degree, sc().own_mlr_in, sc().own_score, false}, Power::low);
  }

  void election() {
    if (acd_) {
      if (s_.status == NodeStatus::chc) {
        bool win = s_.energy.e_re > e_th();
        const auto me = own_candidate();
        for (const auto& [j, sh] : sc().shares) {
          if (!win) break;
          const auto them = election_candidate(j, sh.e_re, sh.degree, sh.mlr_in);
          if (metric::compare_election_candidates(them, me, cfg_.policy()) > 0) win = false;
        }
        if (win) {
          become_ch();
          announce_ch();
        } else {
          set_status(NodeStatus::uc);
        }
      }
    } else {
      std::vector<NodeId> ids;
      ids.reserve(s_.neighbors.size());
      for (const auto& [id, e] : s_.neighbors) ids.push_back(id);
      if (baseline::baseline_elect(s_.id, ids)) {
        become_ch();
        announce_ch();
      }
    }
    at(TimerKind::offer_close, tl().offer_close);
  }

  // ---- joining ----

  metric::ScoredCandidate join_candidate(NodeId c, const msg::Ich& ich) const {
    metric::CandidateProfile p{c, ich.e_re, ich.degree, link_out(c), 1};
    return {p, metric::score_for_join(p, e_th(), cfg_.ideg, cfg_.ifs)};
  }

  void join(NodeId c, const metric::ScoredCandidate& offer) {
    s_.cluster = ClusterPointers{};
    s_.cluster.my_ch = c;
    s_.cluster.cluster_ch = c;
    s_.cluster.depth = 1;
    s_.cluster.path = {c};
    s_.cluster.elr_to_ch = offer.profile.link_term;
    s_.cluster.accepted_offer = offer;
    sc().searching = false;
    sc().orphan = false;
    set_status(NodeStatus::cm);
    send(msg::Cjn{c}, Power::low);
  }

  void accept_best_offer(const std::map<NodeId, msg::Ich>& offers) {
    if (offers.empty()) return;
    if (acd_) {
      std::optional<metric::ScoredCandidate> best;
      for (const auto& [c, ich] : offers) {
        auto cand = join_candidate(c, ich);
        if (!best || metric::compare_join_offers(cand, *best, cfg_.policy()) > 0) best = cand;
      }
      join(best->profile.node_id, *best);
    } else {
      std::vector<NodeId> ids;
      for (const auto& [c, ich] : offers) ids.push_back(c);
      const NodeId c = *baseline::baseline_choose_ch(ids);
      join(c, join_candidate(c, offers.at(c)));
    }
  }

  void on_ich(NodeId c, const msg::Ich& ich) {
    if (acd_) {
      on_ich_acdmcp(c, ich);
    } else {
      on_ich_baseline(c, ich);
    }
  }

  void on_ich_acdmcp(NodeId c, const msg::Ich& ich) {
    switch (s_.status) {
      case NodeStatus::ch: {
        if (ich.reply) return;
        const auto them = election_candidate(c, ich.e_re, ich.degree, ich.mlr_in);
        if (metric::compare_election_candidates(them, own_candidate(), cfg_.policy()) > 0) {
          // Conflict lost: step down and join like any other node.
          s_.cluster = ClusterPointers{};
          set_status(NodeStatus::uc);
          sc().offers[c] = ich;
          if (sc().offers_closed) accept_best_offer(sc().offers);
        }
        return;
      }
      case NodeStatus::uc:
      case NodeStatus::chc:
        if (sc().searching) {
          sc().search_ich[c] = ich;
        } else if (!sc().offers_closed) {
          sc().offers[c] = ich;
        }
        return;
      case NodeStatus::cm: {
        if (!s_.cluster.accepted_offer || s_.cluster.my_ch == c) return;
        const auto cand = join_candidate(c, ich);
        if (metric::compare_join_offers(cand, *s_.cluster.accepted_offer, cfg_.policy()) > 0) {
          const auto sns = s_.cluster.sub_neighbors;
          const bool tch = s_.is_tch;
          join(c, cand);
          s_.cluster.sub_neighbors = sns;
          s_.is_tch = tch;
        }
        return;
      }
      default:
        return;
    }
  }

  void on_ich_baseline(NodeId c, const msg::Ich& ich) {
    switch (s_.status) {
      case NodeStatus::ch:
        if (!ich.reply && c > s_.id) {
          s_.cluster = ClusterPointers{};
          set_status(NodeStatus::uc);
          join(c, join_candidate(c, ich));
        }
        return;
      case NodeStatus::uc:
        if (sc().orphan) {
          sc().orphan_offers[c] = ich;
        } else if (!sc().offers_closed) {
          sc().offers[c] = ich;
        }
        return;
      default:
        return;
    }
  }

  void offer_close() {
    sc().offers_closed = true;
    if (s_.status != NodeStatus::uc && s_.status != NodeStatus::chc) return;
    if (!sc().offers.empty()) {
      accept_best_offer(sc().offers);
    } else if (acd_) {
      start_search();
    } else {
      start_orphan();
    }
  }

  // ---- transitive membership search ----

  void start_search() {
    if (!acd_) {
      start_orphan();
      return;
    }
    s_.cluster = ClusterPointers{};
    set_status(NodeStatus::uc);
    sc().searching = true;
    sc().search_attempt = 0;
    begin_attempt();
  }

  void begin_attempt() {
    sc().search_ich.clear();
    sc().search_tcmo.clear();
    send(msg::Scj{}, Power::low, std::nullopt, jitter(cfg_.single_span));
    timer(TimerKind::search_close, tl().share_window, sc().search_attempt);
  }

  bool accept_best_tcmo() {
    std::optional<metric::ScoredCandidate> best;
    const msg::Tcmo* best_offer = nullptr;
    const auto ifs = cfg_.multihop_ifs();
    for (const auto& [o, t] : sc().search_tcmo) {
      if (std::find(t.path.begin(), t.path.end(), s_.id) != t.path.end()) continue;
      const std::uint32_t hops = t.depth + 1;
      if (cfg_.max_tcm_depth != 0 && hops > cfg_.max_tcm_depth) continue;
      metric::CandidateProfile p{o, t.e_re, t.degree, link_out(o) * t.elr_out, hops};
      metric::ScoredCandidate cand{p, metric::score_for_multihop(p, e_th(), cfg_.ideg, ifs)};
      if (!best || metric::compare_transitive_offers(cand, *best, cfg_.policy()) > 0) {
        best = cand;
        best_offer = &t;
      }
    }
    if (!best) return false;
    const NodeId o = best->profile.node_id;
    s_.cluster = ClusterPointers{};
    s_.cluster.my_tch = o;
    s_.cluster.cluster_ch = best_offer->ch;
    s_.cluster.depth = best->profile.hops;
    s_.cluster.path = best_offer->path;
    s_.cluster.elr_to_ch = best->profile.link_term;
    s_.cluster.accepted_offer = best;
    sc().searching = false;
    set_status(NodeStatus::tcm);
    send(msg::Tcjn{o}, Power::low);
    return true;
  }

  void search_close(std::uint32_t attempt) {
    if (!sc().searching || attempt != sc().search_attempt || s_.status != NodeStatus::uc) return;
    if (!sc().search_ich.empty()) {
      accept_best_offer(sc().search_ich);
      return;
    }
    if (!sc().search_tcmo.empty() && accept_best_tcmo()) return;
    if (++sc().search_attempt <= cfg_.scj_retries) {
      begin_attempt();
      return;
    }
    become_snch();
  }

  void on_scj(NodeId x) {
    auto& cl = s_.cluster;
    if (acd_ && s_.status == NodeStatus::tcm && cl.my_tch == x) {
      start_search();
      return;
    }
    cl.members.erase(x);
    if (cl.sub_neighbors.erase(x) > 0) s_.is_tch = !cl.sub_neighbors.empty();

    if (!acd_) {
      if (sc().orphan && s_.status == NodeStatus::uc) sc().orphans_heard.insert(x);
      return;
    }
    if (s_.status == NodeStatus::ch) {
      send(msg::Ich{s_.energy.e_re, s_.degree(), sc().own_mlr_in, sc().own_score, true}, Power::low, x);
    } else if (s_.status == NodeStatus::cm || s_.status == NodeStatus::tcm) {
      if (cfg_.max_tcm_depth != 0 && cl.depth + 1 > cfg_.max_tcm_depth) return;
      if (std::find(cl.path.begin(), cl.path.end(), x) != cl.path.end()) return;
      msg::Tcmo t;
      t.ch = cl.cluster_ch.value_or(0);
      t.depth = cl.depth;
      t.elr_out = cl.elr_to_ch;
      t.e_re = s_.energy.e_re;
      t.degree = s_.degree();
      t.path.reserve(cl.path.size() + 1);
      t.path.push_back(s_.id);
      t.path.insert(t.path.end(), cl.path.begin(), cl.path.end());
      send(std::move(t), Power::low, x);
    }
  }

  void on_tcmo(NodeId o, const msg::Tcmo& t) {
    if (sc().searching && s_.status == NodeStatus::uc) sc().search_tcmo[o] = t;
  }

  void on_cjn(NodeId x, const msg::Cjn& cjn) {
    auto& cl = s_.cluster;
    switch (s_.status) {
      case NodeStatus::ch:
        if (cjn.ch == s_.id) {
          cl.members.insert(x);
        } else {
          cl.members.erase(x);
        }
        return;
      case NodeStatus::cm:
      case NodeStatus::tcm:
        if (cl.sub_neighbors.erase(x) > 0) s_.is_tch = !cl.sub_neighbors.empty();
        if ((s_.status == NodeStatus::cm && cl.my_ch == x) || (s_.status == NodeStatus::tcm && cl.my_tch == x)) {
          start_search();
        }
        return;
      default:
        return;
    }
  }

  void on_tcjn(NodeId x, const msg::Tcjn& tcjn) {
    auto& cl = s_.cluster;
    switch (s_.status) {
      case NodeStatus::ch:
        cl.members.erase(x);
        return;
      case NodeStatus::cm:
      case NodeStatus::tcm:
        if (tcjn.tch == s_.id) {
          cl.sub_neighbors.insert(x);
          s_.is_tch = true;
        } else if (cl.sub_neighbors.erase(x) > 0) {
          s_.is_tch = !cl.sub_neighbors.empty();
        }
        if (s_.status == NodeStatus::tcm && cl.my_tch == x) start_search();
        return;
      default:
        return;
    }
  }

  // ---- baseline orphan fallback ----

  void start_orphan() {
    s_.cluster = ClusterPointers{};
    set_status(NodeStatus::uc);
    sc().orphan = true;
    sc().orphans_heard.clear();
    sc().orphan_offers.clear();
    send(msg::Scj{}, Power::low, std::nullopt, jitter(cfg_.single_span));
    timer(TimerKind::orphan_close, tl().share_window);
  }

  void orphan_close() {
    if (!sc().orphan || s_.status != NodeStatus::uc) return;
    std::vector<NodeId> ids(sc().orphans_heard.begin(), sc().orphans_heard.end());
    if (baseline::baseline_orphan_resolve(s_.id, ids)) {
      sc().orphan = false;
      become_ch();
      announce_ch();
      return;
    }
    timer(TimerKind::orphan_offer_close, tl().share_window);
  }

  void orphan_offer_close() {
    if (!sc().orphan || s_.status != NodeStatus::uc) return;
    sc().orphan = false;
    if (!sc().orphan_offers.empty()) {
      accept_best_offer(sc().orphan_offers);
    } else {
      become_ch();
      announce_ch();
    }
  }

  // ---- inter-cluster route formation ----

  void iccom_start() {
    if (!s_.is_sink) return;
    for (std::uint32_t i = 0; i < n(); ++i) {
      send(msg::Schicc{i}, Power::high, std::nullopt, jitter(tl().ndm_span));
      send(msg::Slpnicc{i}, Power::low, std::nullopt, jitter(tl().ndm_span));
    }
  }

  bool head() const { return is_head(s_.status); }

  void on_schicc() {
    if (!head()) return;
    if (++sc().hp_sink_heard == 1) timer(TimerKind::hp_sink_close, tl().hop_window);
  }

  void hp_sink_close() {
    if (!head() || sc().hp_forwarded) return;
    auto& r = s_.routing;
    r.dsn_high = kSinkId;
    r.hts_high = 1;
    r.elr_to_sink_in = metric::packet_reception_ratio(sc().hp_sink_heard, n());
    r.elr_to_sink_out = r.elr_to_sink_in;
    start_fchicc();
  }

  void start_fchicc() {
    sc().hp_forwarded = true;
    const auto& r = s_.routing;
    const std::uint32_t heard =
        r.dsn_high == kSinkId ? sc().hp_sink_heard : sc().hp_candidates[*r.dsn_high].heard;
    msg::Fchicc f{*r.dsn_high, r.hts_high, heard, r.elr_to_sink_in, r.elr_to_sink_out, s_.energy.e_re,
                  static_cast<std::uint32_t>(s_.cluster.members.size())};
    for (std::uint32_t i = 0; i < n(); ++i) send(f, Power::high, std::nullopt, jitter(tl().ndm_span));
  }

  void arm_back_high() {
    if (sc().back_high_armed) return;
    sc().back_high_armed = true;
    timer(TimerKind::back_high, tl().hop_window);
  }

  void on_fchicc(NodeId x, const msg::Fchicc& f) {
    if (s_.is_sink) {
      if (f.dsn == kSinkId) {
        s_.routing.usn.insert(x);
        if (acd_) {
          sc().back_high_pending[x] += 1;
          arm_back_high();
        }
      }
      return;
    }
    if (!head()) return;
    auto& c = sc().hp_candidates[x];
    ++c.heard;
    c.last = f;
    const auto& r = s_.routing;
    if (f.dsn == s_.id) {
      s_.routing.usn.insert(x);
    }
    if (sc().hp_forwarded) {
      if (acd_ && (f.dsn == s_.id || f.hts == r.hts_high + 1)) {
        sc().back_high_pending[x] = c.heard;
        arm_back_high();
      }
    } else if (!sc().hp_offer_armed && f.hts >= 1 && f.dsn != s_.id) {
      sc().hp_offer_armed = true;
      timer(TimerKind::hp_offer_close, tl().hop_window);
    }
  }

  struct HpChoice {
    NodeId id = 0;
    double elr = 0.0;
    double elr_in = 0.0;
    std::uint32_t hts = 0;
  };

  // Best high-power DSN among candidates at `level` (0: any level).
  std::optional<HpChoice> best_hp(std::uint32_t level) {
    const auto ifs = cfg_.multihop_ifs();
    std::optional<metric::ScoredCandidate> best;
    std::optional<HpChoice> choice;
    std::vector<baseline::RouteCandidate> plain;
    for (const auto& [x, c] : sc().hp_candidates) {
      const std::uint32_t hts = c.back_hts.value_or(c.last.hts);
      if (hts == 0 || c.last.dsn == s_.id || c.heard == 0) continue;
      if (level != 0 && hts != level) continue;
      if (!acd_) {
        plain.push_back({x, hts});
        continue;
      }
      const double prior = metric::packet_reception_ratio(c.heard, n());
      const double lr = c.out_lr.value_or(prior);
      const double elr = lr * c.back_elr.value_or(c.last.elr_out);
      metric::CandidateProfile p{x, c.last.e_re, c.last.members, elr, hts + 1};
      metric::ScoredCandidate cand{p, metric::score_for_multihop(p, e_th(), cfg_.ideg, ifs)};
      if (!best || metric::compare_iccom_offers(cand, *best, cfg_.policy()) > 0) {
        best = cand;
        choice = HpChoice{x, elr, prior * c.last.elr_in, hts};
      }
    }
    if (!acd_) {
      auto pick = baseline::baseline_choose_route(plain);
      if (!pick) return std::nullopt;
      const auto& c = sc().hp_candidates[pick->id];
      const double prior = metric::packet_reception_ratio(c.heard, n());
      return HpChoice{pick->id, prior * c.last.elr_out, prior * c.last.elr_in, pick->hts};
    }
    return choice;
  }

  void hp_offer_close() {
    sc().hp_offer_armed = false;
    if (!head() || sc().hp_forwarded) return;
    auto choice = best_hp(0);
    if (!choice) return;
    auto& r = s_.routing;
    r.dsn_high = choice->id;
    r.hts_high = choice->hts + 1;
    r.elr_to_sink_out = choice->elr;
    r.elr_to_sink_in = choice->elr_in;
    start_fchicc();
  }

  void on_back_high(NodeId y, const msg::BackHigh& b) {
    if (!acd_ || s_.is_sink || !head() || s_.routing.hts_high == 0) return;
    std::optional<double> out;
    for (const auto& [id, count] : b.counts) {
      if (id == s_.id) out = metric::packet_reception_ratio(count, n());
    }
    if (!out) return;
    auto& r = s_.routing;
    if (y == kSinkId) {
      sc().hp_sink_out_lr = out;
      if (r.dsn_high == kSinkId) r.elr_to_sink_out = *out;
      return;
    }
    auto& c = sc().hp_candidates[y];
    c.out_lr = out;
    c.back_hts = b.hts;
    c.back_elr = b.elr_out;
    if (r.hts_high >= 2) {
      // Re-rank only among candidates one level down so hop counts stay fixed.
      if (auto choice = best_hp(r.hts_high - 1)) {
        r.dsn_high = choice->id;
        r.elr_to_sink_out = choice->elr;
      }
    }
  }

  void back_high() {
    sc().back_high_armed = false;
    if (sc().back_high_pending.empty()) return;
    msg::BackHigh b;
    b.hts = s_.is_sink ? 0 : s_.routing.hts_high;
    b.elr_out = s_.is_sink ? 1.0 : s_.routing.elr_to_sink_out;
    for (const auto& [id, count] : sc().back_high_pending) b.counts.emplace_back(id, count);
    sc().back_high_pending.clear();
    send(std::move(b), Power::high);
  }

  void on_slpnicc() {
    if (!is_terminal(s_.status)) return;
    ++sc().lp_sink_heard;
    if (acd_) {
      ++sc().lp_acks_sent;
      send(msg::LpAck{}, Power::low, kSinkId);
    }
    if (sc().lp_sink_heard == 1) timer(TimerKind::lp_sink_close, tl().hop_window);
  }

  void lp_sink_close() {
    if (!is_terminal(s_.status) || sc().lp_forwarded) return;
    auto& r = s_.routing;
    r.dsn_low = kSinkId;
    r.hts_low = 1;
    r.elr_low_out = metric::packet_reception_ratio(sc().lp_sink_heard, n());
    if (acd_) {
      timer(TimerKind::lp_fallback, tl().hop_window);
    } else {
      start_flpnicc();
    }
  }

  void on_back_low(const msg::BackLow& b) {
    if (!acd_ || s_.routing.hts_low != 1) return;
    for (const auto& [id, count] : b.counts) {
      if (id == s_.id) s_.routing.elr_low_out = metric::packet_reception_ratio(count, sc().lp_acks_sent);
    }
    if (!sc().lp_forwarded) start_flpnicc();
  }

  void lp_fallback() {
    if (s_.routing.hts_low == 1 && !sc().lp_forwarded) start_flpnicc();
  }

  void start_flpnicc() {
    sc().lp_forwarded = true;
    const auto& r = s_.routing;
    msg::Flpnicc f{*r.dsn_low, r.hts_low, r.elr_low_out, s_.energy.e_re,
                   static_cast<std::uint32_t>(s_.cluster.members.size())};
    for (std::uint32_t i = 0; i < n(); ++i) send(f, Power::low, std::nullopt, jitter(tl().ndm_span));
  }

  void on_flpnicc(NodeId x, const msg::Flpnicc& f) {
    if (s_.is_sink) {
      if (f.dsn == kSinkId) s_.routing.usn.insert(x);
      return;
    }
    if (!is_terminal(s_.status)) return;
    if (f.dsn == s_.id) {
      s_.routing.usn.insert(x);
      return;
    }
    if (s_.routing.hts_low != 0 || sc().lp_forwarded || f.hts == 0) return;
    auto& c = sc().lp_candidates[x];
    ++c.heard;
    c.last = f;
    if (!sc().lp_offer_armed) {
      sc().lp_offer_armed = true;
      timer(TimerKind::lp_offer_close, tl().hop_window);
    }
  }

  void lp_offer_close() {
    sc().lp_offer_armed = false;
    if (!is_terminal(s_.status) || s_.routing.hts_low != 0 || sc().lp_candidates.empty()) return;
    std::optional<std::pair<NodeId, double>> pick;
    std::uint32_t pick_hts = 0;
    if (acd_) {
      const auto ifs = cfg_.multihop_ifs();
      std::optional<metric::ScoredCandidate> best;
      for (const auto& [x, c] : sc().lp_candidates) {
        const double lr = s_.neighbors.count(x) ? link_out(x) : metric::packet_reception_ratio(c.heard, n());
        const double elr = lr * c.last.elr_out;
        metric::CandidateProfile p{x, c.last.e_re, c.last.members, elr, c.last.hts + 1};
        metric::ScoredCandidate cand{p, metric::score_for_multihop(p, e_th(), cfg_.ideg, ifs)};
        if (!best || metric::compare_iccom_offers(cand, *best, cfg_.policy()) > 0) {
          best = cand;
          pick = {x, elr};
          pick_hts = c.last.hts;
        }
      }
    } else {
      std::vector<baseline::RouteCandidate> plain;
      for (const auto& [x, c] : sc().lp_candidates) plain.push_back({x, c.last.hts});
      auto b = baseline::baseline_choose_route(plain);
      if (!b) return;
      const auto& c = sc().lp_candidates[b->id];
      pick = {b->id, metric::packet_reception_ratio(c.heard, n()) * c.last.elr_out};
      pick_hts = b->hts;
    }
    auto& r = s_.routing;
    r.dsn_low = pick->first;
    r.hts_low = pick_hts + 1;
    r.elr_low_out = pick->second;
    start_flpnicc();
  }

  void on_lpack(NodeId x) {
    if (!s_.is_sink || !acd_) return;
    sc().lp_ack_counts[x] += 1;
    if (!sc().back_low_armed) {
      sc().back_low_armed = true;
      timer(TimerKind::back_low, tl().hop_window);
    }
  }

  void back_low() {
    sc().back_low_armed = false;
    if (sc().lp_ack_counts.empty()) return;
    msg::BackLow b;
    for (const auto& [id, count] : sc().lp_ack_counts) b.counts.emplace_back(id, count);
    sc().lp_ack_counts.clear();
    send(std::move(b), Power::low);
  }

  void iccom_end() {
    if (head() && !s_.routing.effective_route(true)) emit(MetricKind::unreachable_head, 1.0);
  }

  // ---- periodic reporting ----

  std::optional<NodeId> next_hop() const {
    switch (s_.status) {
      case NodeStatus::cm: return s_.cluster.my_ch;
      case NodeStatus::tcm: return s_.cluster.my_tch;
      case NodeStatus::ch:
      case NodeStatus::snch:
        if (auto r = s_.routing.effective_route(true)) return r->next;
        return std::nullopt;
      default: return std::nullopt;
    }
  }

  void data_tick(std::uint32_t index) {
    timer(TimerKind::data_tick, cfg_.report_period, index + 1);
    sc().data_phase = true;
    sc().aggregate_sent = false;
    if (!is_terminal(s_.status)) return;

    const ReportId rid{s_.id, ++s_.report_seq};
    sc().pending.push_back(rid);
    emit(MetricKind::report_generated, 1.0, {rid});

    if (auto parent = next_hop(); parent && *parent != kSinkId) {
      const SimTime data_start = sc().round_start + tl().data_start;
      auto it = s_.last_heard.find(*parent);
      const SimTime last = std::max(data_start, it == s_.last_heard.end() ? data_start : it->second);
      if (now_ - last > static_cast<SimTime>(cfg_.silence_periods) * cfg_.report_period) {
        call_recluster();
      }
    }

    const SimTime slot = cfg_.report_slot;
    SimTime offset = 0;
    if (s_.status == NodeStatus::cm || s_.status == NodeStatus::tcm) {
      offset = static_cast<SimTime>(cfg_.depth_slots - std::min(s_.cluster.depth, cfg_.depth_slots)) * slot;
    } else {
      const auto r = s_.routing.effective_route(true);
      const std::uint32_t hts = r ? r->hts : 0;
      offset = static_cast<SimTime>(cfg_.depth_slots) * slot +
               static_cast<SimTime>(cfg_.hts_slots - std::min(hts, cfg_.hts_slots)) * slot;
    }
    timer(TimerKind::aggregate_send, offset);
  }

  void send_up(std::vector<ReportId> reports, std::uint8_t ttl) {
    if (reports.empty()) return;
    switch (s_.status) {
      case NodeStatus::cm:
      case NodeStatus::tcm: {
        const NodeId to = s_.status == NodeStatus::cm ? *s_.cluster.my_ch : *s_.cluster.my_tch;
        send(msg::Data{std::move(reports), false, ttl}, Power::low, to);
        return;
      }
      case NodeStatus::ch:
      case NodeStatus::snch:
        if (auto r = s_.routing.effective_route(true)) {
          send(msg::Data{std::move(reports), true, ttl}, r->power, r->next);
          return;
        }
        break;
      default:
        break;
    }
    const double count = static_cast<double>(reports.size());
    emit(MetricKind::report_dropped, count, std::move(reports), "no route");
  }

  void aggregate_send() {
    sc().aggregate_sent = true;
    auto reports = std::move(sc().pending);
    sc().pending.clear();
    send_up(std::move(reports), msg::Data{}.ttl);
  }

  void on_data(const msg::Data& d) {
    if (s_.is_sink) {
      emit(MetricKind::report_delivered, static_cast<double>(d.reports.size()), d.reports);
      return;
    }
    if (d.ttl <= 1) {
      emit(MetricKind::report_dropped, static_cast<double>(d.reports.size()), d.reports, "ttl expired");
      return;
    }
    const std::uint8_t ttl = static_cast<std::uint8_t>(d.ttl - 1);
    const bool member = s_.status == NodeStatus::cm || s_.status == NodeStatus::tcm;
    if (d.inter_cluster && member) {
      // Low-power gateway relay.
      if (s_.routing.dsn_low) {
        send(msg::Data{d.reports, true, ttl}, Power::low, *s_.routing.dsn_low);
      } else {
        emit(MetricKind::report_dropped, static_cast<double>(d.reports.size()), d.reports, "no gateway route");
      }
      return;
    }
    if (!member && !head()) {
      emit(MetricKind::report_dropped, static_cast<double>(d.reports.size()), d.reports, "not clustered");
      return;
    }
    if (sc().data_phase && !sc().aggregate_sent) {
      sc().pending.insert(sc().pending.end(), d.reports.begin(), d.reports.end());
    } else {
      send_up(d.reports, ttl);
    }
  }

  // ---- message dispatch ----

  void on(const event::MsgIn& in) {
    const Message& m = in.msg;
    const NodeId from = m.src;
    if (from == s_.id) return;
    s_.last_heard[from] = now_;
    if (!s_.is_sink && from != kSinkId) {
      if (in.power == Power::low) {
        s_.neighbors[from].link_stats_low.heard += 1;
      } else {
        s_.heard_high[from] += 1;
      }
    }
    if (m.dst && *m.dst != s_.id) return;  // overheard unicast: counted only

    if (m.kind() == MsgKind::recluster) return on_recluster(std::get<msg::Recluster>(m.body));
    if (m.kind() == MsgKind::data) return on_data(std::get<msg::Data>(m.body));
    if (m.kind() == MsgKind::unknown) {
      emit(MetricKind::dropped_message, 1.0, {}, "unknown message kind from " + std::to_string(from));
      return;
    }
    if (m.round != s_.round) return;  // stale control traffic from another round

    std::visit(
        [&](const auto& body) {
          using T = std::decay_t<decltype(body)>;
          if constexpr (std::is_same_v<T, msg::Stats>) {
            if (acd_ && !s_.is_sink) on_stats(from, body);
          } else if constexpr (std::is_same_v<T, msg::Share>) {
            if (!s_.is_sink) on_share(from, body);
          } else if constexpr (std::is_same_v<T, msg::Ich>) {
            if (!s_.is_sink) on_ich(from, body);
          } else if constexpr (std::is_same_v<T, msg::Cjn>) {
            if (!s_.is_sink) on_cjn(from, body);
          } else if constexpr (std::is_same_v<T, msg::Scj>) {
            if (!s_.is_sink) on_scj(from);
          } else if constexpr (std::is_same_v<T, msg::Tcmo>) {
            if (!s_.is_sink) on_tcmo(from, body);
          } else if constexpr (std::is_same_v<T, msg::Tcjn>) {
            if (!s_.is_sink) on_tcjn(from, body);
          } else if constexpr (std::is_same_v<T, msg::Schicc>) {
            if (!s_.is_sink) on_schicc();
          } else if constexpr (std::is_same_v<T, msg::Fchicc>) {
            on_fchicc(from, body);
          } else if constexpr (std::is_same_v<T, msg::BackHigh>) {
            on_back_high(from, body);
          } else if constexpr (std::is_same_v<T, msg::Slpnicc>) {
            if (!s_.is_sink) on_slpnicc();
          } else if constexpr (std::is_same_v<T, msg::LpAck>) {
            on_lpack(from);
          } else if constexpr (std::is_same_v<T, msg::Flpnicc>) {
            on_flpnicc(from, body);
          } else if constexpr (std::is_same_v<T, msg::BackLow>) {
            if (!s_.is_sink && from == kSinkId) on_back_low(body);
          }
        },
        m.body);
  }

  void on_recluster(const msg::Recluster& rc) {
    if (rc.round <= s_.round || rc.round <= s_.pending_round) return;
    s_.pending_round = rc.round;
    send(rc, Power::high);
    timer(TimerKind::round_start, rc.start - now_, rc.round);
  }
};

}  // namespace

void step_in_place(const ProtocolConfig& cfg, NodeState& state, const Event& event, std::vector<Action>& out) {
  Machine(cfg, state, out, event.now).dispatch(event);
}

StepResult step(const ProtocolConfig& cfg, const NodeState& state, const Event& event) {
  StepResult r{state, {}};
  step_in_place(cfg, r.state, event, r.actions);
  return r;
}

}  // namespace acdmcp::protocol
