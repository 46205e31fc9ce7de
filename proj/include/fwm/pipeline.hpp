#pragma once

// End-to-end steps shared by the command-line tool and the acceptance runner.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "fwm/config.hpp"

namespace fwm::pipeline {

struct SimulationOutput {
  TagStream stream;
  seq::SequenceProgram program;
  std::size_t pairs = 0;
  std::size_t chaotic_signal = 0;
  std::size_t chaotic_idler = 0;
};

// Gates from the compiled duty cycle, emission from the source, detection.
// All randomness derives from cfg.seed.
SimulationOutput simulate(const config::ExperimentConfig& cfg);

corr::AccidentalEstimate estimate_accidentals(const corr::CorrelationHistogram& hist,
                                              const config::AccidentalSettings& settings);

// Histogram CSV plus the sidecar written next to it, reassembled.
struct LoadedHistogram {
  corr::HistogramTable table;
  std::optional<corr::CorrelationHistogram> histogram;  // when a sidecar is present
  double g_acc = 0.0;
};

LoadedHistogram load_histogram(const std::string& csv_path);

struct HistogramFit {
  fit::FitResult result;
  fit::FitData data;
  double window_lo = 0, window_hi = 0;
  double bin_width = 0;   // used for bin averaging, 0 when off
  double g_acc = 0;
  double g2_peak_model = 0;
  double g2_peak_raw = 0;
  std::optional<double> coincidence_rate;  // background-subtracted, 1/s
};

HistogramFit fit_histogram(const LoadedHistogram& hist, fit::ModelKind kind, const config::FitSettings& settings,
                           double coincidence_window_ns);

// Scan rows (detuning MHz, I/I0, optional sigma).
fit::FitData read_absorption_csv(std::istream& in, double default_sigma);
fit::FitResult fit_absorption(const fit::FitData& data, const config::OdFitSettings& settings);

nlohmann::ordered_json fit_report_json(const HistogramFit& fit);
nlohmann::ordered_json od_report_json(const fit::FitResult& fit, const metrics::ODContext& ctx);
void write_residuals_csv(std::ostream& out, const fit::FitResult& result, const fit::FitData& data,
                         double bin_width);

// Reads the tau pair, and optionally the g2 peak and coincidence rate, from a fit report.
struct FitReportSummary {
  metrics::TauEntry tau;
  std::optional<double> g2_peak_model, g2_peak_raw, coincidence_rate;
};
FitReportSummary read_fit_report(const std::string& path);

}  // namespace fwm::pipeline
