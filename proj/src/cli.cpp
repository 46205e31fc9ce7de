#include "fwm/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fwm/config.hpp"
#include "fwm/errors.hpp"
#include "fwm/format.hpp"
#include "fwm/pipeline.hpp"

#ifndef FWM_VERSION
#define FWM_VERSION "0.0.0"
#endif

namespace fwm::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
};

class NotConverged : public Error {
 public:
  using Error::Error;
};

std::shared_ptr<spdlog::logger> logger() {
  static std::shared_ptr<spdlog::logger> log = [] {
    auto l = std::make_shared<spdlog::logger>("fwmpair", std::make_shared<spdlog::sinks::stderr_sink_mt>());
    l->set_pattern("[%l] %v");
    l->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("FWM_LOG_LEVEL")) l->set_level(spdlog::level::from_str(env));
    return l;
  }();
  return log;
}

config::ExperimentConfig load_config(const CommonOptions& o) {
  config::ExperimentConfig cfg = o.config_path.empty() ? config::ExperimentConfig{} : config::load(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  return cfg;
}

std::string output_path(const config::ExperimentConfig& cfg, const CommonOptions& o, const std::string& fallback) {
  fs::path p = o.out.empty() ? fs::path(cfg.output_dir) / fallback : fs::path(o.out);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + p.parent_path().string() + "': " + ec.message());
  }
  return p.string();
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  return f;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw IoError("cannot open '" + path + "'");
  return f;
}

void close_checked(std::ofstream& f, const std::string& path) {
  f.close();
  if (!f) throw IoError("write to '" + path + "' failed");
}

ordered_json file_entry(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  return {{"path", path}, {"bytes", bytes.size()}, {"fnv1a64", config::hex64(config::fnv1a64(bytes))}};
}

void write_manifest(const std::string& out_path, const std::string& command, const config::ExperimentConfig& cfg,
                    const std::vector<std::string>& inputs, const std::vector<std::string>& outputs,
                    const ordered_json& summary) {
  ordered_json m;
  m["tool"] = "fwmpair";
  m["version"] = FWM_VERSION;
  m["command"] = command;
  m["config_hash"] = config::hex64(config::config_hash(cfg));
  m["seed"] = cfg.seed;
  m["seed_derivation"] =
      "splitmix64(root, stage, index); stages pairs=1 chaotic_signal=2 chaotic_idler=3 detect=4 dark=5; "
      "emission index = gate start (ps), dark index = channel";
  m["inputs"] = ordered_json::array();
  for (const auto& p : inputs) m["inputs"].push_back(file_entry(p));
  m["outputs"] = ordered_json::array();
  for (const auto& p : outputs) m["outputs"].push_back(file_entry(p));
  m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                    {"cli11", CLI11_VERSION},
                    {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                   std::to_string(SPDLOG_VER_PATCH)}};
  m["summary"] = summary;
  m["config"] = config::to_json(cfg);
  const std::string path = out_path + ".manifest.json";
  auto f = open_out(path);
  f << m.dump(2) << '\n';
  close_checked(f, path);
}

void check_format(const CommonOptions& o, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed) {
    if (o.format == a) return;
  }
  throw ConfigError("--format", "unsupported format '" + o.format + "'");
}

int cmd_simulate(const CommonOptions& o, std::ostream& out) {
  check_format(o, {"csv"});
  const auto cfg = load_config(o);
  const std::string path = output_path(cfg, o, "stream.tags");
  logger()->info("simulating {} cycles, seed {}", cfg.duty_cycle.cycles, cfg.seed);
  const pipeline::SimulationOutput sim = pipeline::simulate(cfg);
  {
    auto f = open_out(path, true);
    write_stream(sim.stream.records, sim.stream.header, f);
    close_checked(f, path);
  }
  std::vector<std::uint64_t> singles(sim.stream.header.channel_count, 0);
  for (const auto& r : sim.stream.records) ++singles[r.channel];
  const double t = sim.stream.header.acquisition_time_s;
  ordered_json summary;
  summary["records"] = sim.stream.records.size();
  summary["acquisition_time_s"] = t;
  summary["gates"] = sim.stream.header.gates.size();
  summary["pairs_emitted"] = sim.pairs;
  summary["chaotic_signal_emitted"] = sim.chaotic_signal;
  summary["chaotic_idler_emitted"] = sim.chaotic_idler;
  ordered_json rates = ordered_json::array();
  for (std::size_t c = 0; c < singles.size(); ++c) rates.push_back(t > 0 ? singles[c] / t : 0.0);
  summary["singles_rate"] = rates;
  write_manifest(path, "simulate", cfg, {}, {path}, summary);
  out << "wrote " << sim.stream.records.size() << " tags to " << path << " (T = " << format_double(t) << " s)\n";
  for (std::size_t c = 0; c < singles.size(); ++c) {
    out << "channel " << c << " singles rate " << format_fixed(t > 0 ? singles[c] / t : 0.0, 1) << " /s\n";
  }
  return kExitOk;
}

int cmd_correlate(const CommonOptions& o, const std::string& in_path, unsigned workers, std::ostream& out) {
  check_format(o, {"csv"});
  const auto cfg = load_config(o);
  const std::string path = output_path(cfg, o, "histogram.csv");
  corr::CorrelationHistogram hist;
  {
    auto in = open_in(in_path, true);
    if (workers <= 1) {
      hist = corr::correlate_stream(in, cfg.histogram);
    } else {
      TagStream s = read_stream(in);
      corr::to_picoseconds(s.records, s.header.tick_ps);
      hist = corr::cross_correlate_parallel(s.records, s.header.acquisition_time_s, cfg.histogram, workers);
    }
  }
  const corr::AccidentalEstimate acc = pipeline::estimate_accidentals(hist, cfg.accidentals);
  {
    auto f = open_out(path);
    corr::write_histogram_csv(f, hist, acc);
    close_checked(f, path);
    auto s = open_out(path + ".json");
    corr::write_histogram_sidecar(s, hist, acc);
    close_checked(s, path + ".json");
  }
  ordered_json summary{{"bins", hist.size()},
                       {"total_coincidences", hist.total()},
                       {"g_acc", acc.g_acc},
                       {"rate_a", hist.rate_a()},
                       {"rate_b", hist.rate_b()}};
  write_manifest(path, "correlate", cfg, {in_path}, {path, path + ".json"}, summary);
  out << "wrote " << hist.size() << " bins (" << hist.total() << " coincidences, G_acc "
      << format_fixed(acc.g_acc, 4) << ") to " << path << '\n';
  return kExitOk;
}

int cmd_fit(const CommonOptions& o, const std::string& in_path, std::string model, std::ostream& out) {
  check_format(o, {"csv"});
  const auto cfg = load_config(o);
  if (model.empty()) model = cfg.fit.model;
  const fit::ModelKind kind = fit::model_kind_from_string(model);
  const std::string path = output_path(cfg, o, "fit_" + model + ".json");
  const pipeline::LoadedHistogram hist = pipeline::load_histogram(in_path);
  const pipeline::HistogramFit f =
      pipeline::fit_histogram(hist, kind, cfg.fit, cfg.metrics.coincidence_window_ns);
  {
    auto j = open_out(path);
    j << pipeline::fit_report_json(f).dump(2) << '\n';
    close_checked(j, path);
    auto r = open_out(path + ".residuals.csv");
    pipeline::write_residuals_csv(r, f.result, f.data, f.bin_width);
    close_checked(r, path + ".residuals.csv");
  }
  write_manifest(path, "fit", cfg, {in_path}, {path, path + ".residuals.csv"}, pipeline::fit_report_json(f));
  const auto names = fit::parameter_names(kind);
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << names[i] << " = " << format_double(f.result.params[i]) << " +- "
        << format_double(f.result.uncertainties[i]) << '\n';
  }
  out << "reduced chi2 = " << format_fixed(f.result.reduced_chi2, 4) << " (" << f.result.message << ")\n";
  if (!f.result.converged) throw NotConverged("fit did not converge: " + f.result.message);
  return kExitOk;
}

int cmd_od_fit(const CommonOptions& o, const std::string& in_path, std::ostream& out) {
  check_format(o, {"csv"});
  const auto cfg = load_config(o);
  const std::string path = output_path(cfg, o, "od_fit.json");
  fit::FitData data;
  {
    auto in = open_in(in_path);
    data = pipeline::read_absorption_csv(in, cfg.od_fit.sigma);
  }
  const fit::FitResult r = pipeline::fit_absorption(data, cfg.od_fit);
  const ordered_json report = pipeline::od_report_json(r, cfg.metrics.od);
  {
    auto j = open_out(path);
    j << report.dump(2) << '\n';
    close_checked(j, path);
    auto res = open_out(path + ".residuals.csv");
    pipeline::write_residuals_csv(res, r, data, 0.0);
    close_checked(res, path + ".residuals.csv");
  }
  write_manifest(path, "od-fit", cfg, {in_path}, {path, path + ".residuals.csv"}, report);
  out << "OD = " << format_fixed(r.params[0], 3) << " +- " << format_fixed(r.uncertainties[0], 3) << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4e", report["atom_number"].get<double>());
  out << "atom number = " << buf << '\n';
  if (!r.converged) throw NotConverged("OD fit did not converge: " + r.message);
  return kExitOk;
}

struct MetricsArgs {
  std::optional<double> tau_c, rate, g2_si, g2_ss, g2_ii, od;
};

int cmd_metrics(const CommonOptions& o, const MetricsArgs& a, std::ostream& out) {
  check_format(o, {"csv", "text"});
  const auto cfg = load_config(o);
  std::vector<std::pair<std::string, double>> rows;
  if (a.tau_c) rows.emplace_back("bandwidth_mhz", metrics::bandwidth_from_tau(*a.tau_c));
  if (a.tau_c && a.rate) rows.emplace_back("brightness_per_mhz_s", metrics::spectral_brightness(*a.rate, *a.tau_c));
  if (a.g2_si && a.g2_ss && a.g2_ii) {
    const auto cs = metrics::cauchy_schwarz(*a.g2_si, *a.g2_ss, *a.g2_ii);
    rows.emplace_back("cauchy_schwarz_r", cs.ratio);
    rows.emplace_back("non_classical", cs.classical ? 0.0 : 1.0);
  }
  if (a.od) rows.emplace_back("atom_number", metrics::atom_number(*a.od, cfg.metrics.od));
  rows.emplace_back("scattering_rate_mhz", metrics::scattering_rate(cfg.metrics.od));
  rows.emplace_back("scattering_rate_low_saturation_mhz", metrics::scattering_rate_low_saturation(cfg.metrics.od));
  std::ostringstream text;
  text << "quantity,value\n";
  for (const auto& [k, v] : rows) text << k << ',' << format_double(v) << '\n';
  if (o.out.empty()) {
    out << text.str();
  } else {
    auto f = open_out(o.out);
    f << text.str();
    close_checked(f, o.out);
  }
  return kExitOk;
}

struct ReportArgs {
  std::string cross, signal_auto, idler_auto;
  std::optional<double> rate, g2_si, g2_ss, g2_ii;
};

int cmd_report(const CommonOptions& o, const ReportArgs& a, std::ostream& out) {
  check_format(o, {"csv", "text"});
  const auto cfg = load_config(o);
  metrics::SummaryInputs in;
  auto peak = [&](const pipeline::FitReportSummary& s) {
    return cfg.fit.use_raw_peak && s.g2_peak_raw ? s.g2_peak_raw : s.g2_peak_model;
  };
  if (!a.cross.empty()) {
    const auto s = pipeline::read_fit_report(a.cross);
    in.cross = s.tau;
    in.g2_si_max = peak(s);
    in.coincidence_rate = s.coincidence_rate;
  }
  if (!a.signal_auto.empty()) {
    const auto s = pipeline::read_fit_report(a.signal_auto);
    in.signal_auto = s.tau;
    in.g2_ss0 = peak(s);
  }
  if (!a.idler_auto.empty()) {
    const auto s = pipeline::read_fit_report(a.idler_auto);
    in.idler_auto = s.tau;
    in.g2_ii0 = peak(s);
  }
  if (a.rate) in.coincidence_rate = a.rate;
  if (a.g2_si) in.g2_si_max = a.g2_si;
  if (a.g2_ss) in.g2_ss0 = a.g2_ss;
  if (a.g2_ii) in.g2_ii0 = a.g2_ii;
  const metrics::Summary s = metrics::summarize(in);
  std::ostringstream text;
  if (o.format == "csv") {
    metrics::write_summary_csv(text, s);
  } else {
    metrics::write_summary_text(text, s);
  }
  if (o.out.empty()) {
    out << text.str();
  } else {
    auto f = open_out(o.out);
    f << text.str();
    close_checked(f, o.out);
  }
  return kExitOk;
}

int cmd_sequence(const CommonOptions& o, const std::string& gates_path, std::ostream& out) {
  check_format(o, {"csv"});
  const auto cfg = load_config(o);
  const seq::SequenceProgram p = seq::compile(cfg.duty_cycle, cfg.hardware);
  const auto diags = seq::validate(p, cfg.hardware);
  if (!o.out.empty()) {
    auto f = open_out(o.out);
    seq::write_program_csv(f, p);
    close_checked(f, o.out);
  }
  if (!gates_path.empty()) {
    auto f = open_out(gates_path);
    f << "start_ps,end_ps\n";
    for (const auto& g : seq::emit_gates(p, cfg.duty_cycle.gate_channel)) f << g.start << ',' << g.end << '\n';
    close_checked(f, gates_path);
  }
  out << "slots_per_cycle," << p.cycle.size() << '\n';
  out << "effective_slot_us," << p.effective_slot_us() << '\n';
  out << "word_count," << p.word_count << '\n';
  out << "duration_us," << p.duration_us << '\n';
  out << "hardware_looped," << (p.hardware_looped ? "true" : "false") << '\n';
  for (const auto& n : p.notes) out << "note," << n << '\n';
  for (const auto& d : diags) out << "diagnostic," << d.code << ": " << d.message << '\n';
  return diags.empty() ? kExitOk : kExitValidation;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate and analyse heralded photon-pair time-tag data", "fwmpair"};
  app.require_subcommand(1);
  app.set_version_flag("--version", FWM_VERSION);

  CommonOptions common;
  std::uint64_t seed_value = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "experiment configuration (JSON)");
    sub->add_option("--seed", seed_value, "override the root RNG seed");
    sub->add_option("--out", common.out, "output path");
    sub->add_option("--format", common.format, "output format (csv; report and metrics also take text)");
  };

  std::string in_path, model, gates_path;
  unsigned workers = 1;
  MetricsArgs margs;
  ReportArgs rargs;

  auto* simulate = app.add_subcommand("simulate", "generate a time-tag stream from the configured source");
  add_common(simulate);
  auto* correlate = app.add_subcommand("correlate", "build a coincidence histogram from a stream");
  add_common(correlate);
  correlate->add_option("--in", in_path, "time-tag stream")->required();
  correlate->add_option("--workers", workers, "correlator threads")->check(CLI::Range(1u, 256u));
  auto* fitcmd = app.add_subcommand("fit", "fit a correlation histogram");
  add_common(fitcmd);
  fitcmd->add_option("--in", in_path, "histogram CSV")->required();
  fitcmd->add_option("--model", model, "cross or auto (default from config)");
  auto* odfit = app.add_subcommand("od-fit", "fit an absorption scan for the optical depth");
  add_common(odfit);
  odfit->add_option("--in", in_path, "scan CSV: detuning_mhz,transmission[,sigma]")->required();
  auto* metricscmd = app.add_subcommand("metrics", "bandwidth, brightness, Cauchy-Schwarz ratio, atom number");
  add_common(metricscmd);
  metricscmd->add_option("--tau-c", margs.tau_c, "heralded coherence time (ns)");
  metricscmd->add_option("--rate", margs.rate, "coincidence rate (1/s)");
  metricscmd->add_option("--g2-si", margs.g2_si, "cross-correlation peak");
  metricscmd->add_option("--g2-ss", margs.g2_ss, "signal auto-correlation at zero delay");
  metricscmd->add_option("--g2-ii", margs.g2_ii, "idler auto-correlation at zero delay");
  metricscmd->add_option("--od", margs.od, "optical depth");
  auto* report = app.add_subcommand("report", "summary table from fit reports");
  add_common(report);
  report->add_option("--cross", rargs.cross, "cross-correlation fit report");
  report->add_option("--signal-auto", rargs.signal_auto, "signal auto-correlation fit report");
  report->add_option("--idler-auto", rargs.idler_auto, "idler auto-correlation fit report");
  report->add_option("--rate", rargs.rate, "coincidence rate override (1/s)");
  report->add_option("--g2-si", rargs.g2_si, "cross peak override");
  report->add_option("--g2-ss", rargs.g2_ss, "signal auto g2(0) override");
  report->add_option("--g2-ii", rargs.g2_ii, "idler auto g2(0) override");
  auto* sequence = app.add_subcommand("sequence", "compile the duty cycle into a DAQ program");
  add_common(sequence);
  sequence->add_option("--gates", gates_path, "also write the gate windows as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << FWM_VERSION << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) common.seed = seed_value;
  }
  if (report->parsed() && report->count("--format") == 0) common.format = "text";

  try {
    if (simulate->parsed()) return cmd_simulate(common, out);
    if (correlate->parsed()) return cmd_correlate(common, in_path, workers, out);
    if (fitcmd->parsed()) return cmd_fit(common, in_path, model, out);
    if (odfit->parsed()) return cmd_od_fit(common, in_path, out);
    if (metricscmd->parsed()) return cmd_metrics(common, margs, out);
    if (report->parsed()) return cmd_report(common, rargs, out);
    if (sequence->parsed()) return cmd_sequence(common, gates_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const InvalidInput& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "corrupt input: " << e.what() << '\n';
    return kExitCorrupt;
  } catch (const NotConverged& e) {
    err << "error: " << e.what() << '\n';
    return kExitNoConvergence;
  } catch (const RankDeficiencyError& e) {
    err << "fit failed: " << e.what() << '\n';
    return kExitNoConvergence;
  }
  return kExitValidation;
}

}  // namespace fwm::cli
