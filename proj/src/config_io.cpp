#include "acdmcp/config_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace acdmcp::config {

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& why) { throw std::invalid_argument(key + ": " + why); }

std::string join(const std::string& prefix, const std::string& key) { return prefix.empty() ? key : prefix + "." + key; }

const char* type_name(const Json& j) { return j.type_name(); }

// Walks one JSON object, remembering which keys were consumed so the rest
// can be reported as unknown.
class Reader {
 public:
  Reader(const Json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) fail(prefix_.empty() ? "config" : prefix_, std::string("expected an object, got ") + type_name(obj_));
  }

  [[nodiscard]] const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  [[nodiscard]] std::string key(const std::string& k) const { return join(prefix_, k); }

  void number(const std::string& k, double& out) {
    if (const auto* j = find(k)) out = as_number(*j, key(k));
  }

  template <typename Int>
  void integer(const std::string& k, Int& out) {
    if (const auto* j = find(k)) out = as_integer<Int>(*j, key(k));
  }

  void boolean(const std::string& k, bool& out) {
    if (const auto* j = find(k)) {
      if (!j->is_boolean()) fail(key(k), std::string("expected a boolean, got ") + type_name(*j));
      out = j->get<bool>();
    }
  }

  void string(const std::string& k, std::string& out) {
    if (const auto* j = find(k)) {
      if (!j->is_string()) fail(key(k), std::string("expected a string, got ") + type_name(*j));
      out = j->get<std::string>();
    }
  }

  // Duration given in `scale` microseconds per unit.
  void duration(const std::string& k, SimTime& out, SimTime scale) {
    if (const auto* j = find(k)) {
      const double v = as_number(*j, key(k));
      const double us = v * static_cast<double>(scale);
      if (std::abs(us) > 9.0e15) fail(key(k), "out of range");
      out = static_cast<SimTime>(std::llround(us));
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
    }
  }

  static double as_number(const Json& j, const std::string& key) {
    if (!j.is_number()) fail(key, std::string("expected a number, got ") + type_name(j));
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(key, "must be finite");
    return v;
  }

  template <typename Int>
  static Int as_integer(const Json& j, const std::string& key) {
    if (j.is_number_unsigned()) {
      const auto v = j.get<std::uint64_t>();
      if (v > static_cast<std::uint64_t>(std::numeric_limits<Int>::max())) fail(key, "out of range");
      return static_cast<Int>(v);
    }
    if (j.is_number_integer()) {
      const auto v = j.get<std::int64_t>();
      if constexpr (std::is_unsigned_v<Int>) {
        if (v < 0) fail(key, "must not be negative");
      }
      if (v > static_cast<std::int64_t>(std::numeric_limits<Int>::max())) fail(key, "out of range");
      return static_cast<Int>(v);
    }
    fail(key, std::string("expected an integer, got ") + type_name(j));
  }

 private:
  const Json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

sim::Position as_position(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 2) fail(key, "expected [x, y]");
  return {Reader::as_number(j[0], key + "[0]"), Reader::as_number(j[1], key + "[1]")};
}

metric::ImpactFactors as_ifs(const Json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) fail(key, "expected [rei, link, ndi] in percent");
  const double rei = Reader::as_number(j[0], key + "[0]");
  const double link = Reader::as_number(j[1], key + "[1]");
  const double ndi = Reader::as_number(j[2], key + "[2]");
  if (rei < 0 || link < 0 || ndi < 0) fail(key, "weights must not be negative");
  if (std::abs(rei + link + ndi - 100.0) > 1e-6) fail(key, "weights must sum to 100");
  return metric::ImpactFactors::from_percent(rei, link, ndi);
}

protocol::Variant as_variant(const Json& j, const std::string& key) {
  if (!j.is_string()) fail(key, std::string("expected a protocol name, got ") + type_name(j));
  auto v = protocol::variant_from_string(j.get<std::string>());
  if (!v) fail(key, "unknown protocol '" + j.get<std::string>() + "' (acdmcp, id_baseline)");
  return *v;
}

void decode_topology(const Json& j, sim::TopologyConfig& t) {
  Reader r(j, "topology");
  r.integer("node_count", t.node_count);
  r.number("area_width", t.area_width);
  r.number("area_height", t.area_height);
  r.number("target_degree", t.target_degree);
  if (const auto* p = r.find("placement")) {
    const auto s = p->is_string() ? p->get<std::string>() : std::string();
    if (s == "uniform") {
      t.placement = sim::Placement::uniform;
    } else if (s == "explicit") {
      t.placement = sim::Placement::explicit_positions;
    } else {
      fail(r.key("placement"), "expected \"uniform\" or \"explicit\"");
    }
  }
  if (const auto* p = r.find("positions")) {
    if (!p->is_array()) fail(r.key("positions"), "expected an array of [x, y]");
    t.positions.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      t.positions.push_back(as_position((*p)[i], r.key("positions") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* p = r.find("sink_position")) {
    if (p->is_null()) {
      t.sink_position.reset();
    } else {
      t.sink_position = as_position(*p, r.key("sink_position"));
    }
  }
  r.number("range_low", t.range_low);
  r.number("range_high", t.range_high);
  if (const auto* l = r.find("lambda")) {
    Reader lr(*l, "topology.lambda");
    if (const auto* m = lr.find("mode")) {
      const auto s = m->is_string() ? m->get<std::string>() : std::string();
      if (s == "uniform") {
        t.lambda_mode = sim::LambdaMode::uniform;
      } else if (s == "constant") {
        t.lambda_mode = sim::LambdaMode::constant;
      } else if (s == "distance") {
        t.lambda_mode = sim::LambdaMode::distance;
      } else {
        fail(lr.key("mode"), "expected \"uniform\", \"constant\" or \"distance\"");
      }
    }
    lr.number("min", t.lambda_min);
    lr.number("max", t.lambda_max);
    lr.number("constant", t.lambda_constant);
    lr.finish();
  }
  r.string("file", t.file);
  r.finish();
}

void decode_energy(const Json& j, sim::EnergyConfig& e) {
  Reader r(j, "energy");
  r.number("initial", e.initial);
  r.number("initial_max", e.initial_max);
  if (const auto* p = r.find("per_node")) {
    if (!p->is_array()) fail(r.key("per_node"), "expected an array of numbers");
    e.per_node.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      e.per_node.push_back(Reader::as_number((*p)[i], r.key("per_node") + "[" + std::to_string(i) + "]"));
    }
  }
  r.number("tx_low", e.tx_low);
  r.number("tx_high", e.tx_high);
  r.number("rx", e.rx);
  r.number("idle_per_second", e.idle_per_second);
  r.number("e_th_fraction", e.e_th_fraction);
  r.number("e_th_initial", e.e_th_initial);
  r.finish();
}

void decode_params(const Json& j, protocol::ProtocolConfig& p) {
  Reader r(j, "params");
  if (const auto* f = r.find("ifs")) p.ifs = as_ifs(*f, r.key("ifs"));
  r.number("if_zeta", p.if_zeta);
  r.integer("ideg", p.ideg);
  r.boolean("higher_nid_wins", p.higher_nid_wins);
  r.boolean("bidirectional_mlr", p.bidirectional_mlr);
  r.number("e_th_decay", p.e_th_decay);
  r.integer("repeats", p.repeats);
  r.duration("broadcast_slot_ms", p.broadcast_slot, kMillisecond);
  r.duration("single_span_ms", p.single_span, kMillisecond);
  r.duration("discovery_window_ms", p.discovery_window, kMillisecond);
  r.duration("share_window_ms", p.share_window, kMillisecond);
  r.duration("iccom_hop_window_ms", p.iccom_hop_window, kMillisecond);
  r.duration("iccom_duration_s", p.iccom_duration, kSecond);
  r.integer("scj_retries", p.scj_retries);
  r.integer("max_tcm_depth", p.max_tcm_depth);
  r.duration("report_period_s", p.report_period, kSecond);
  r.duration("report_slot_ms", p.report_slot, kMillisecond);
  r.integer("depth_slots", p.depth_slots);
  r.integer("hts_slots", p.hts_slots);
  r.integer("silence_periods", p.silence_periods);
  r.duration("recluster_lead_ms", p.recluster_lead, kMillisecond);
  r.finish();
}

void decode_experiment(const Json& j, harness::ExperimentSpec& spec) {
  Reader r(j, "experiment");
  if (const auto* p = r.find("protocols")) {
    if (!p->is_array()) fail(r.key("protocols"), "expected an array of protocol names");
    spec.protocols.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      spec.protocols.push_back(as_variant((*p)[i], r.key("protocols") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* p = r.find("sizes")) {
    if (!p->is_array()) fail(r.key("sizes"), "expected an array of integers");
    spec.sizes.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      spec.sizes.push_back(Reader::as_integer<std::uint32_t>((*p)[i], r.key("sizes") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* p = r.find("ifs")) {
    if (!p->is_array()) fail(r.key("ifs"), "expected an array of [rei, link, ndi]");
    spec.ifs.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      spec.ifs.push_back(as_ifs((*p)[i], r.key("ifs") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* p = r.find("seeds")) {
    if (!p->is_array()) fail(r.key("seeds"), "expected an array of integers");
    spec.seeds.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      spec.seeds.push_back(Reader::as_integer<std::uint64_t>((*p)[i], r.key("seeds") + "[" + std::to_string(i) + "]"));
    }
  }
  if (const auto* p = r.find("metrics")) {
    if (!p->is_array()) fail(r.key("metrics"), "expected an array of metric names");
    spec.metrics.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (!(*p)[i].is_string()) fail(r.key("metrics") + "[" + std::to_string(i) + "]", "expected a string");
      spec.metrics.push_back((*p)[i].get<std::string>());
    }
  }
  r.finish();
}

Json number_out(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) return static_cast<std::int64_t>(v);
  return v;
}

Json ms(SimTime t) { return number_out(static_cast<double>(t) / static_cast<double>(kMillisecond)); }
Json secs(SimTime t) { return number_out(static_cast<double>(t) / static_cast<double>(kSecond)); }

Json ifs_out(const metric::ImpactFactors& f) {
  auto pct = [](double w) { return number_out(std::round(w * 100.0 * 1e9) / 1e9); };
  return Json::array({pct(f.rei), pct(f.link), pct(f.ndi)});
}

}  // namespace

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value = Json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  if (!doc.is_object()) doc = Json::object();
  Json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(path, "empty path component");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    Json& child = (*node)[part];
    if (child.is_null()) child = Json::object();
    if (!child.is_object()) fail(path.substr(0, dot), "cannot descend into a non-object");
    node = &child;
    start = dot + 1;
  }
}

harness::ExperimentSpec decode(const Json& doc) {
  harness::ExperimentSpec spec;
  auto& c = spec.base;
  Reader r(doc, "");
  r.integer("seed", c.seed);
  if (const auto* p = r.find("protocol")) c.protocol.variant = as_variant(*p, "protocol");
  r.duration("duration_s", c.duration, kSecond);
  r.integer("report_rounds", c.report_rounds);
  r.boolean("until_disconnect", c.until_disconnect);
  r.number("disconnect_fraction", c.disconnect_fraction);
  r.boolean("reliable_control", c.reliable_control);
  r.duration("tx_delay_ms", c.tx_delay, kMillisecond);
  if (const auto* p = r.find("forced_reclusters_s")) {
    if (!p->is_array()) fail("forced_reclusters_s", "expected an array of times in seconds");
    c.forced_reclusters.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double s = Reader::as_number((*p)[i], "forced_reclusters_s[" + std::to_string(i) + "]");
      c.forced_reclusters.push_back(static_cast<SimTime>(std::llround(s * static_cast<double>(kSecond))));
    }
  }
  r.boolean("record_log", c.record_log);
  if (const auto* p = r.find("topology")) decode_topology(*p, c.topology);
  if (const auto* p = r.find("energy")) decode_energy(*p, c.energy);
  if (const auto* p = r.find("params")) decode_params(*p, c.protocol);
  const Json* experiment = r.find("experiment");
  r.finish();

  // Sweep axes default to the single run described by the base config.
  spec.protocols = {c.protocol.variant};
  spec.sizes = {c.topology.node_count};
  spec.ifs = {c.protocol.ifs};
  spec.seeds = {c.seed};
  if (experiment) decode_experiment(*experiment, spec);
  spec.validate();
  return spec;
}

harness::ExperimentSpec load(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument(path + ": cannot open config file");
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw std::invalid_argument(path + ": not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  try {
    return decode(doc);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

harness::ExperimentSpec from_overrides(const std::vector<std::string>& overrides) {
  Json doc = Json::object();
  for (const auto& o : overrides) apply_override(doc, o);
  return decode(doc);
}

Json encode(const harness::ExperimentSpec& spec) {
  const auto& c = spec.base;
  const auto& t = c.topology;
  const auto& e = c.energy;
  const auto& p = c.protocol;
  Json doc = Json::object();
  doc["seed"] = c.seed;
  doc["protocol"] = std::string(protocol::to_string(p.variant));
  doc["duration_s"] = secs(c.duration);
  doc["report_rounds"] = c.report_rounds;
  doc["until_disconnect"] = c.until_disconnect;
  doc["disconnect_fraction"] = number_out(c.disconnect_fraction);
  doc["reliable_control"] = c.reliable_control;
  doc["tx_delay_ms"] = ms(c.tx_delay);
  doc["forced_reclusters_s"] = Json::array();
  for (auto f : c.forced_reclusters) doc["forced_reclusters_s"].push_back(secs(f));
  doc["record_log"] = c.record_log;

  Json topo = Json::object();
  topo["node_count"] = t.node_count;
  topo["area_width"] = number_out(t.area_width);
  topo["area_height"] = number_out(t.area_height);
  topo["target_degree"] = number_out(t.target_degree);
  topo["placement"] = std::string(sim::to_string(t.placement));
  topo["positions"] = Json::array();
  for (const auto& q : t.positions) topo["positions"].push_back(Json::array({number_out(q.x), number_out(q.y)}));
  topo["sink_position"] =
      t.sink_position ? Json::array({number_out(t.sink_position->x), number_out(t.sink_position->y)}) : Json();
  topo["range_low"] = number_out(t.range_low);
  topo["range_high"] = number_out(t.range_high);
  topo["lambda"] = Json{{"mode", std::string(sim::to_string(t.lambda_mode))},
                        {"min", number_out(t.lambda_min)},
                        {"max", number_out(t.lambda_max)},
                        {"constant", number_out(t.lambda_constant)}};
  topo["file"] = t.file;
  doc["topology"] = std::move(topo);

  Json en = Json::object();
  en["initial"] = number_out(e.initial);
  en["initial_max"] = number_out(e.initial_max);
  en["per_node"] = Json::array();
  for (double v : e.per_node) en["per_node"].push_back(number_out(v));
  en["tx_low"] = number_out(e.tx_low);
  en["tx_high"] = number_out(e.tx_high);
  en["rx"] = number_out(e.rx);
  en["idle_per_second"] = number_out(e.idle_per_second);
  en["e_th_fraction"] = number_out(e.e_th_fraction);
  en["e_th_initial"] = number_out(e.e_th_initial);
  doc["energy"] = std::move(en);

  Json pa = Json::object();
  pa["ifs"] = ifs_out(p.ifs);
  pa["if_zeta"] = number_out(p.if_zeta);
  pa["ideg"] = p.ideg;
  pa["higher_nid_wins"] = p.higher_nid_wins;
  pa["bidirectional_mlr"] = p.bidirectional_mlr;
  pa["e_th_decay"] = number_out(p.e_th_decay);
  pa["repeats"] = p.repeats;
  pa["broadcast_slot_ms"] = ms(p.broadcast_slot);
  pa["single_span_ms"] = ms(p.single_span);
  pa["discovery_window_ms"] = ms(p.discovery_window);
  pa["share_window_ms"] = ms(p.share_window);
  pa["iccom_hop_window_ms"] = ms(p.iccom_hop_window);
  pa["iccom_duration_s"] = secs(p.iccom_duration);
  pa["scj_retries"] = p.scj_retries;
  pa["max_tcm_depth"] = p.max_tcm_depth;
  pa["report_period_s"] = secs(p.report_period);
  pa["report_slot_ms"] = ms(p.report_slot);
  pa["depth_slots"] = p.depth_slots;
  pa["hts_slots"] = p.hts_slots;
  pa["silence_periods"] = p.silence_periods;
  pa["recluster_lead_ms"] = ms(p.recluster_lead);
  doc["params"] = std::move(pa);

  Json ex = Json::object();
  ex["protocols"] = Json::array();
  for (auto v : spec.protocols) ex["protocols"].push_back(std::string(protocol::to_string(v)));
  ex["sizes"] = spec.sizes;
  ex["ifs"] = Json::array();
  for (const auto& f : spec.ifs) ex["ifs"].push_back(ifs_out(f));
  ex["seeds"] = spec.seeds;
  ex["metrics"] = spec.metrics;
  doc["experiment"] = std::move(ex);
  return doc;
}

}  // namespace acdmcp::config
