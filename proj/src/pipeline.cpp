#include "fwm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fwm/errors.hpp"
#include "fwm/format.hpp"

namespace fwm::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

bool routes(const sim::ChannelMap& map, sim::Species species) {
  return std::any_of(map.routes.begin(), map.routes.end(),
                     [&](const sim::ChannelRoute& r) { return r.species == species && r.weight > 0.0; });
}

double number_at(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw FormatError(path + ": missing numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

}  // namespace

SimulationOutput simulate(const config::ExperimentConfig& cfg) {
  cfg.validate();
  SimulationOutput out;
  out.program = seq::compile(cfg.duty_cycle, cfg.hardware);
  const std::vector<GateWindow> gates = seq::emit_gates(out.program, cfg.duty_cycle.gate_channel);
  const sim::ChannelMap map = config::channel_map(cfg.layout);

  std::vector<sim::EmissionEvent> events = sim::generate_pairs(cfg.source, gates, cfg.seed);
  out.pairs = events.size() / 2;
  if (routes(map, sim::Species::signal) && cfg.source.uncorrelated_rate_s > 0.0) {
    const auto s = sim::generate_chaotic(cfg.source, sim::Species::signal, gates, cfg.seed, cfg.chaotic);
    out.chaotic_signal = s.size();
    events = sim::merge_events(events, s);
  }
  if (routes(map, sim::Species::idler) && cfg.source.uncorrelated_rate_i > 0.0) {
    const auto i = sim::generate_chaotic(cfg.source, sim::Species::idler, gates, cfg.seed, cfg.chaotic);
    out.chaotic_idler = i.size();
    events = sim::merge_events(events, i);
  }
  out.stream = sim::detect(events, cfg.detectors, map, gates, cfg.seed);
  return out;
}

corr::AccidentalEstimate estimate_accidentals(const corr::CorrelationHistogram& hist,
                                              const config::AccidentalSettings& settings) {
  if (settings.source == "wings") return corr::accidental_from_wings(hist, settings.wing_lo, settings.wing_hi);
  if (hist.acquisition_time_s <= 0.0) return {};
  return corr::accidental_rate(hist.rate_a(), hist.rate_b(), hist.config.bin_width * 1e-9,
                               hist.acquisition_time_s);
}

LoadedHistogram load_histogram(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw IoError("cannot open histogram '" + csv_path + "'");
  LoadedHistogram out;
  out.table = corr::read_histogram_csv(in);
  const auto& t = out.table;
  for (std::size_t i = 0; i < t.counts.size(); ++i) {
    if (t.g2[i] > 0.0 && t.counts[i] > 0.0) {
      out.g_acc = t.counts[i] / t.g2[i];
      break;
    }
  }

  std::ifstream side(csv_path + ".json");
  if (side) {
    json j;
    try {
      j = json::parse(side);
    } catch (const json::parse_error& e) {
      throw FormatError(csv_path + ".json: " + e.what());
    }
    const std::string where = csv_path + ".json";
    corr::CorrelationHistogram h;
    h.config.bin_width = number_at(j, "bin_width_ns", where);
    h.config.dt_min = number_at(j, "dt_min_ns", where);
    h.config.dt_max = number_at(j, "dt_max_ns", where);
    h.config.channel_a = static_cast<std::uint8_t>(number_at(j, "channel_a", where));
    h.config.channel_b = static_cast<std::uint8_t>(number_at(j, "channel_b", where));
    h.acquisition_time_s = number_at(j, "acquisition_time_s", where);
    h.singles_a = static_cast<std::uint64_t>(number_at(j, "singles_a", where));
    h.singles_b = static_cast<std::uint64_t>(number_at(j, "singles_b", where));
    if (h.config.bin_count() != t.counts.size()) {
      throw FormatError(where + ": bin count disagrees with the CSV");
    }
    h.counts.reserve(t.counts.size());
    for (double c : t.counts) h.counts.push_back(static_cast<std::uint64_t>(std::llround(c)));
    out.g_acc = number_at(j, "g_acc", where);
    out.histogram = std::move(h);
  }
  return out;
}

HistogramFit fit_histogram(const LoadedHistogram& hist, fit::ModelKind kind, const config::FitSettings& s,
                           double coincidence_window_ns) {
  if (kind == fit::ModelKind::AbsorptionOD) throw InvalidInput("use od-fit for absorption scans");
  if (!(hist.g_acc > 0.0)) {
    throw DomainError("accidental level is zero; the histogram cannot be normalised for fitting");
  }
  HistogramFit out;
  out.g_acc = hist.g_acc;
  const bool is_auto = kind == fit::ModelKind::AutoConvolved;
  out.window_lo = is_auto ? s.auto_window_lo : s.window_lo;
  out.window_hi = is_auto ? s.auto_window_hi : s.window_hi;
  const auto& x = hist.table.bin_center_ns;
  out.data = fit::poisson_fit_data(x, hist.table.counts, hist.g_acc, out.window_lo, out.window_hi);
  if (s.bin_averaged && x.size() > 1) out.bin_width = x[1] - x[0];

  fit::FitOptions opt;
  opt.bin_width = out.bin_width;
  const fit::InitialGuess guess = fit::initial_guess(out.data, kind);
  std::vector<double> start = guess.params;
  if (!fit::in_domain(kind, start)) start = {1.0, 5.0, 0.5, 1.0};
  if (start[0] <= 0.0) start[0] = 1e-3;  // multiplicative perturbations need a non-zero amplitude
  out.result = fit::fit_multistart(out.data, kind, start, opt, s.starts, 1, s.workers);
  out.g2_peak_model = fit::model_max(kind, out.result.params, out.bin_width);
  for (double y : out.data.y) out.g2_peak_raw = std::max(out.g2_peak_raw, y);
  if (hist.histogram && !is_auto && hist.histogram->acquisition_time_s > 0.0) {
    const corr::AccidentalEstimate acc{hist.g_acc, corr::AccidentalSource::computed, 0.0};
    out.coincidence_rate = corr::coincidence_rate(*hist.histogram, coincidence_window_ns, acc);
  }
  return out;
}

fit::FitData read_absorption_csv(std::istream& in, double default_sigma) {
  fit::FitData d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> cols;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        cols.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (d.size() == 0 && line_no == 1) continue;  // header
      throw FormatError("absorption scan line " + std::to_string(line_no) + " is not numeric");
    }
    if (cols.size() < 2 || cols.size() > 3) {
      throw FormatError("absorption scan line " + std::to_string(line_no) + " needs 2 or 3 columns");
    }
    d.x.push_back(cols[0]);
    d.y.push_back(cols[1]);
    d.sigma.push_back(cols.size() == 3 ? cols[2] : default_sigma);
  }
  return d;
}

fit::FitResult fit_absorption(const fit::FitData& data, const config::OdFitSettings& s) {
  const fit::InitialGuess g = fit::initial_guess(data, fit::ModelKind::AbsorptionOD);
  fit::FitOptions opt;
  opt.fixed = {false, !s.gamma_free, !s.center_free};
  std::vector<double> start = g.params;
  if (!s.center_free) start[2] = 0.0;
  if (start[0] <= 0.0) start[0] = 0.1;
  return fit::fit(data, fit::ModelKind::AbsorptionOD, start, opt);
}

namespace {

ordered_json params_json(const fit::FitResult& r, bool uncertainties) {
  ordered_json j = ordered_json::object();
  const auto names = fit::parameter_names(r.kind);
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = uncertainties ? r.uncertainties[i] : r.params[i];
  return j;
}

ordered_json common_json(const fit::FitResult& r) {
  ordered_json j;
  j["model"] = fit::to_string(r.kind);
  j["parameters"] = params_json(r, false);
  j["uncertainties"] = params_json(r, true);
  ordered_json fixed = ordered_json::array();
  const auto names = fit::parameter_names(r.kind);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (r.fixed[i]) fixed.push_back(names[i]);
  }
  j["fixed"] = fixed;
  j["chi2"] = r.chi2;
  j["reduced_chi2"] = r.reduced_chi2;
  j["dof"] = r.dof;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["message"] = r.message;
  return j;
}

}  // namespace

ordered_json fit_report_json(const HistogramFit& f) {
  ordered_json j = common_json(f.result);
  j["window_ns"] = {f.window_lo, f.window_hi};
  j["samples"] = f.data.size();
  j["bin_width_ns"] = f.bin_width;
  j["g_acc"] = f.g_acc;
  j["g2_peak_model"] = f.g2_peak_model;
  j["g2_peak_raw"] = f.g2_peak_raw;
  if (f.coincidence_rate) j["coincidence_rate"] = *f.coincidence_rate;
  return j;
}

ordered_json od_report_json(const fit::FitResult& r, const metrics::ODContext& ctx) {
  ordered_json j = common_json(r);
  j["atom_number"] = metrics::atom_number(std::max(0.0, r.params[0]), ctx);
  j["atom_number_uncertainty"] = r.uncertainties[0] * ctx.area_cm2 / ctx.sigma0_cm2;
  return j;
}

void write_residuals_csv(std::ostream& out, const fit::FitResult& r, const fit::FitData& d, double bin_width) {
  out << "x,y,sigma,model,residual\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double m = fit::model_eval_binned(r.kind, r.params, d.x[i], bin_width);
    out << format_double(d.x[i]) << ',' << format_double(d.y[i]) << ',' << format_double(d.sigma[i]) << ','
        << format_double(m) << ',' << format_double((d.y[i] - m) / d.sigma[i]) << '\n';
  }
}

FitReportSummary read_fit_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fit report '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  if (!j.contains("parameters") || !j["parameters"].is_object()) {
    throw FormatError(path + ": missing 'parameters' object");
  }
  FitReportSummary s;
  s.tau.tau_c = number_at(j["parameters"], "tau_c", path);
  s.tau.tau_d = number_at(j["parameters"], "tau_d", path);
  if (j.contains("uncertainties") && j["uncertainties"].is_object()) {
    const json& u = j["uncertainties"];
    if (u.contains("tau_c")) s.tau.tau_c_err = number_at(u, "tau_c", path);
    if (u.contains("tau_d")) s.tau.tau_d_err = number_at(u, "tau_d", path);
  }
  if (j.contains("g2_peak_model")) s.g2_peak_model = number_at(j, "g2_peak_model", path);
  if (j.contains("g2_peak_raw")) s.g2_peak_raw = number_at(j, "g2_peak_raw", path);
  if (j.contains("coincidence_rate")) s.coincidence_rate = number_at(j, "coincidence_rate", path);
  return s;
}

}  // namespace fwm::pipeline
