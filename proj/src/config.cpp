#include "fwm/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "fwm/errors.hpp"

namespace fwm::config {

using nlohmann::json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const char* type_name(const json& j) { return j.type_name(); }

// Reads the keys of one object; finish() rejects whatever was not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(path(key), std::string("expected a number, got ") + type_name(v));
    out = v.get<double>();
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number_integer()) {
      throw ConfigError(path(key), std::string("expected an integer, got ") + type_name(v));
    }
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned() || v.get<std::int64_t>() >= 0) {
        const auto u = v.get<std::uint64_t>();
        if (u > std::numeric_limits<Int>::max()) throw ConfigError(path(key), "value out of range");
        out = static_cast<Int>(u);
        return;
      }
      throw ConfigError(path(key), "must be non-negative");
    } else {
      const auto s = v.get<std::int64_t>();
      if (s < std::numeric_limits<Int>::min() || s > std::numeric_limits<Int>::max()) {
        throw ConfigError(path(key), "value out of range");
      }
      out = static_cast<Int>(s);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(path(key), std::string("expected a boolean, got ") + type_name(v));
    out = v.get<bool>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(path(key), std::string("expected a string, got ") + type_name(v));
    out = v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError(path(key), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

// Wraps a module validate() so its message carries the section path.
template <class F>
void within(const std::string& path, F&& check) {
  try {
    check();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(path, e.what());
  }
}

void read_source(Section s, sim::SourceConfig& c) {
  s.number("pair_rate", c.pair_rate);
  s.number("tau_c", c.tau_c);
  s.number("chaotic_tau_s", c.chaotic_tau_s);
  s.number("chaotic_tau_i", c.chaotic_tau_i);
  s.number("uncorrelated_rate_s", c.uncorrelated_rate_s);
  s.number("uncorrelated_rate_i", c.uncorrelated_rate_i);
  s.finish();
}

void read_detector(Section s, sim::DetectorConfig& c) {
  s.number("quantum_efficiency", c.quantum_efficiency);
  s.number("dark_rate", c.dark_rate);
  s.number("jitter_sigma", c.jitter_sigma);
  s.number("dead_time", c.dead_time);
  s.integer("resolution_ps", c.resolution_ps);
  s.finish();
}

void read_hardware(Section s, seq::HardwareProfile& h) {
  s.integer("slot_duration_us", h.slot_duration_us);
  s.integer("ram_words", h.ram_words);
  s.integer("words_per_slot", h.words_per_slot);
  s.integer("digital_channels", h.digital_channels);
  s.integer("analog_channels", h.analog_channels);
  s.number("analog_full_scale_v", h.analog_full_scale_v);
  s.number("host_latency_ms", h.host_latency_ms);
  s.finish();
}

void read_duty(Section s, seq::DutyCycleSpec& d) {
  s.integer("load_us", d.load_us);
  s.integer("fwm_us", d.fwm_us);
  s.integer("cycles", d.cycles);
  s.integer("cooling_channel", d.cooling_channel);
  s.integer("pump_channel", d.pump_channel);
  s.integer("gate_channel", d.gate_channel);
  if (s.has("always_on")) {
    const json& v = s.raw("always_on");
    if (!v.is_array()) throw ConfigError(s.path("always_on"), "expected an array of channel indices");
    d.always_on.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number_integer()) {
        throw ConfigError(s.path("always_on") + "[" + std::to_string(i) + "]", "expected an integer");
      }
      d.always_on.push_back(v[i].get<int>());
    }
  }
  if (s.has("analog")) {
    const json& v = s.raw("analog");
    if (v.is_null()) {
      d.analog.reset();
    } else {
      Section a(v, s.path("analog"));
      seq::AnalogLevels lv;
      a.integer("channel", lv.channel);
      a.number("load_v", lv.load_v);
      a.number("fwm_v", lv.fwm_v);
      a.finish();
      d.analog = lv;
    }
  }
  s.finish();
}

void read_histogram(Section s, corr::HistogramConfig& h) {
  s.number("bin_width", h.bin_width);
  s.number("dt_min", h.dt_min);
  s.number("dt_max", h.dt_max);
  s.integer("channel_a", h.channel_a);
  s.integer("channel_b", h.channel_b);
  s.finish();
}

void read_od_context(Section s, metrics::ODContext& c) {
  s.number("sigma0_cm2", c.sigma0_cm2);
  s.number("area_cm2", c.area_cm2);
  s.number("intensity", c.intensity);
  s.number("saturation_intensity", c.saturation_intensity);
  s.number("gamma_mhz", c.gamma_mhz);
  s.number("detuning_mhz", c.detuning_mhz);
  s.finish();
}

json detector_json(const sim::DetectorConfig& d) {
  return {{"quantum_efficiency", d.quantum_efficiency},
          {"dark_rate", d.dark_rate},
          {"jitter_sigma", d.jitter_sigma},
          {"dead_time", d.dead_time},
          {"resolution_ps", d.resolution_ps}};
}

}  // namespace

std::string to_string(Layout layout) {
  switch (layout) {
    case Layout::direct: return "direct";
    case Layout::hbt_signal: return "hbt_signal";
    case Layout::hbt_idler: return "hbt_idler";
    case Layout::quad: return "quad";
  }
  return "direct";
}

sim::ChannelMap channel_map(Layout layout) {
  using sim::Species;
  switch (layout) {
    case Layout::direct: return sim::ChannelMap::direct();
    case Layout::hbt_signal: return sim::ChannelMap::hbt(Species::signal, 0, 1);
    case Layout::hbt_idler: return sim::ChannelMap::hbt(Species::idler, 0, 1);
    case Layout::quad: {
      sim::ChannelMap m;
      m.routes = {{Species::signal, 0, 0.5}, {Species::signal, 2, 0.5}, {Species::idler, 1, 0.5},
                  {Species::idler, 3, 0.5}};
      return m;
    }
  }
  return sim::ChannelMap::direct();
}

std::size_t detector_count(Layout layout) { return layout == Layout::quad ? 4 : 2; }

seq::DutyCycleSpec ExperimentConfig::reference_duty_cycle() {
  seq::DutyCycleSpec d;
  d.load_us = 500;
  d.fwm_us = 200;
  d.cycles = 85'000;
  return d;
}

void ExperimentConfig::validate() const {
  within("source", [&] { source.validate(); });
  if (detectors.size() != detector_count(layout)) {
    throw ConfigError("detectors", "layout " + to_string(layout) + " needs " +
                                       std::to_string(detector_count(layout)) + " detectors, got " +
                                       std::to_string(detectors.size()));
  }
  for (std::size_t i = 0; i < detectors.size(); ++i) {
    within("detectors[" + std::to_string(i) + "]", [&] { detectors[i].validate(); });
  }
  if (!(chaotic.steps_per_tau >= 10.0)) throw ConfigError("chaotic.steps_per_tau", "must be at least 10");
  if (!(chaotic.intensity_cap > 1.0)) throw ConfigError("chaotic.intensity_cap", "must exceed 1");
  within("hardware", [&] { hardware.validate(); });
  within("duty_cycle", [&] { duty_cycle.validate(); });
  within("histogram", [&] { histogram.validate(); });
  if (accidentals.source != "computed" && accidentals.source != "wings") {
    throw ConfigError("accidentals.source", "expected computed or wings");
  }
  if (!(accidentals.wing_hi > accidentals.wing_lo)) throw ConfigError("accidentals.wing_hi", "must exceed wing_lo");
  within("fit.model", [&] { (void)fit::model_kind_from_string(fit.model); });
  if (!(fit.window_hi > fit.window_lo)) throw ConfigError("fit.window_hi", "must exceed window_lo");
  if (!(fit.auto_window_hi > fit.auto_window_lo)) {
    throw ConfigError("fit.auto_window_hi", "must exceed auto_window_lo");
  }
  if (fit.starts < 1) throw ConfigError("fit.starts", "must be >= 1");
  if (fit.workers < 1) throw ConfigError("fit.workers", "must be >= 1");
  if (!(od_fit.sigma > 0.0)) throw ConfigError("od_fit.sigma", "must be positive");
  if (!(metrics.coincidence_window_ns > 0.0)) throw ConfigError("metrics.coincidence_window_ns", "must be positive");
  within("metrics.od", [&] { metrics.od.validate(); });
}

ExperimentConfig parse(const json& doc) {
  ExperimentConfig c;
  Section root(doc, "");
  root.integer("seed", c.seed);
  root.string("output_dir", c.output_dir);
  if (root.has("source")) read_source(Section(root.raw("source"), "source"), c.source);
  if (root.has("layout")) {
    std::string name;
    root.string("layout", name);
    if (name == "direct") c.layout = Layout::direct;
    else if (name == "hbt_signal") c.layout = Layout::hbt_signal;
    else if (name == "hbt_idler") c.layout = Layout::hbt_idler;
    else if (name == "quad") c.layout = Layout::quad;
    else throw ConfigError("layout", "expected direct, hbt_signal, hbt_idler or quad");
  }
  if (c.layout == Layout::quad) c.detectors.resize(4);
  if (root.has("detectors")) {
    const json& v = root.raw("detectors");
    if (!v.is_array()) throw ConfigError("detectors", "expected an array of detector objects");
    c.detectors.assign(v.size(), sim::DetectorConfig{});
    for (std::size_t i = 0; i < v.size(); ++i) {
      read_detector(Section(v[i], "detectors[" + std::to_string(i) + "]"), c.detectors[i]);
    }
  }
  if (root.has("chaotic")) {
    Section s(root.raw("chaotic"), "chaotic");
    s.number("steps_per_tau", c.chaotic.steps_per_tau);
    s.number("intensity_cap", c.chaotic.intensity_cap);
    s.finish();
  }
  if (root.has("hardware")) read_hardware(Section(root.raw("hardware"), "hardware"), c.hardware);
  if (root.has("duty_cycle")) read_duty(Section(root.raw("duty_cycle"), "duty_cycle"), c.duty_cycle);
  if (root.has("histogram")) read_histogram(Section(root.raw("histogram"), "histogram"), c.histogram);
  if (root.has("accidentals")) {
    Section s(root.raw("accidentals"), "accidentals");
    s.string("source", c.accidentals.source);
    s.number("wing_lo", c.accidentals.wing_lo);
    s.number("wing_hi", c.accidentals.wing_hi);
    s.finish();
  }
  if (root.has("fit")) {
    Section s(root.raw("fit"), "fit");
    s.string("model", c.fit.model);
    s.number("window_lo", c.fit.window_lo);
    s.number("window_hi", c.fit.window_hi);
    s.number("auto_window_lo", c.fit.auto_window_lo);
    s.number("auto_window_hi", c.fit.auto_window_hi);
    s.boolean("bin_averaged", c.fit.bin_averaged);
    s.integer("starts", c.fit.starts);
    s.integer("workers", c.fit.workers);
    s.boolean("use_raw_peak", c.fit.use_raw_peak);
    s.finish();
  }
  if (root.has("od_fit")) {
    Section s(root.raw("od_fit"), "od_fit");
    s.number("sigma", c.od_fit.sigma);
    s.boolean("gamma_free", c.od_fit.gamma_free);
    s.boolean("center_free", c.od_fit.center_free);
    s.finish();
  }
  if (root.has("metrics")) {
    Section s(root.raw("metrics"), "metrics");
    s.number("coincidence_window_ns", c.metrics.coincidence_window_ns);
    if (s.has("od")) read_od_context(Section(s.raw("od"), "metrics.od"), c.metrics.od);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return parse(doc);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["layout"] = to_string(c.layout);
  j["source"] = {{"pair_rate", c.source.pair_rate},
                 {"tau_c", c.source.tau_c},
                 {"chaotic_tau_s", c.source.chaotic_tau_s},
                 {"chaotic_tau_i", c.source.chaotic_tau_i},
                 {"uncorrelated_rate_s", c.source.uncorrelated_rate_s},
                 {"uncorrelated_rate_i", c.source.uncorrelated_rate_i}};
  j["detectors"] = json::array();
  for (const auto& d : c.detectors) j["detectors"].push_back(detector_json(d));
  j["chaotic"] = {{"steps_per_tau", c.chaotic.steps_per_tau}, {"intensity_cap", c.chaotic.intensity_cap}};
  const auto& h = c.hardware;
  j["hardware"] = {{"slot_duration_us", h.slot_duration_us}, {"ram_words", h.ram_words},
                   {"words_per_slot", h.words_per_slot},     {"digital_channels", h.digital_channels},
                   {"analog_channels", h.analog_channels},   {"analog_full_scale_v", h.analog_full_scale_v},
                   {"host_latency_ms", h.host_latency_ms}};
  const auto& d = c.duty_cycle;
  j["duty_cycle"] = {{"load_us", d.load_us},
                     {"fwm_us", d.fwm_us},
                     {"cycles", d.cycles},
                     {"cooling_channel", d.cooling_channel},
                     {"pump_channel", d.pump_channel},
                     {"gate_channel", d.gate_channel},
                     {"always_on", d.always_on},
                     {"analog", d.analog ? json{{"channel", d.analog->channel},
                                                {"load_v", d.analog->load_v},
                                                {"fwm_v", d.analog->fwm_v}}
                                         : json(nullptr)}};
  j["histogram"] = {{"bin_width", c.histogram.bin_width}, {"dt_min", c.histogram.dt_min},
                    {"dt_max", c.histogram.dt_max},       {"channel_a", c.histogram.channel_a},
                    {"channel_b", c.histogram.channel_b}};
  j["accidentals"] = {{"source", c.accidentals.source},
                      {"wing_lo", c.accidentals.wing_lo},
                      {"wing_hi", c.accidentals.wing_hi}};
  j["fit"] = {{"model", c.fit.model},     {"window_lo", c.fit.window_lo},        {"window_hi", c.fit.window_hi},
              {"auto_window_lo", c.fit.auto_window_lo}, {"auto_window_hi", c.fit.auto_window_hi},
              {"bin_averaged", c.fit.bin_averaged}, {"starts", c.fit.starts}, {"workers", c.fit.workers},
              {"use_raw_peak", c.fit.use_raw_peak}};
  j["od_fit"] = {{"sigma", c.od_fit.sigma}, {"gamma_free", c.od_fit.gamma_free},
                 {"center_free", c.od_fit.center_free}};
  const auto& od = c.metrics.od;
  j["metrics"] = {{"coincidence_window_ns", c.metrics.coincidence_window_ns},
                  {"od",
                   {{"sigma0_cm2", od.sigma0_cm2},
                    {"area_cm2", od.area_cm2},
                    {"intensity", od.intensity},
                    {"saturation_intensity", od.saturation_intensity},
                    {"gamma_mhz", od.gamma_mhz},
                    {"detuning_mhz", od.detuning_mhz}}}};
  return j;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(to_json(cfg).dump()); }

}  // namespace fwm::config
