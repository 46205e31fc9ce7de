#pragma once

// Experiment configuration document (JSON). Every section is optional and
// defaults to the reference profile; unknown keys are rejected with their
// dotted path.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fwm/correlator.hpp"
#include "fwm/fitting.hpp"
#include "fwm/metrics.hpp"
#include "fwm/photon_sim.hpp"
#include "fwm/sequencer.hpp"

namespace fwm::config {

// How emitted species reach the detectors.
//   direct      signal -> 0, idler -> 1                       (2 detectors)
//   hbt_signal  signal split 50/50 over 0 and 1, idler unused (2 detectors)
//   hbt_idler   idler split 50/50 over 0 and 1, signal unused (2 detectors)
//   quad        signal over 0 and 2, idler over 1 and 3       (4 detectors)
enum class Layout { direct, hbt_signal, hbt_idler, quad };

std::string to_string(Layout layout);
sim::ChannelMap channel_map(Layout layout);
std::size_t detector_count(Layout layout);

struct FitSettings {
  std::string model = "cross";
  double window_lo = -20.0;  // ns
  double window_hi = 100.0;  // ns
  double auto_window_lo = -100.0;  // ns, used for the auto model
  double auto_window_hi = 100.0;
  bool bin_averaged = true;  // fit bin means rather than point values
  int starts = 8;
  unsigned workers = 1;
  bool use_raw_peak = false;  // Cauchy-Schwarz from the raw bin instead of the model
};

struct AccidentalSettings {
  std::string source = "computed";  // computed (R1 R2 dt T) or wings
  double wing_lo = 200.0;            // ns
  double wing_hi = 350.0;
};

struct OdFitSettings {
  double sigma = 0.01;       // transmission uncertainty when the scan has none
  bool gamma_free = false;
  bool center_free = true;
};

struct MetricsSettings {
  double coincidence_window_ns = 30.0;
  metrics::ODContext od;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = ".";
  sim::SourceConfig source;
  std::vector<sim::DetectorConfig> detectors{sim::DetectorConfig{}, sim::DetectorConfig{}};
  Layout layout = Layout::direct;
  sim::ChaoticOptions chaotic;
  seq::HardwareProfile hardware;
  seq::DutyCycleSpec duty_cycle = reference_duty_cycle();
  corr::HistogramConfig histogram;
  AccidentalSettings accidentals;
  FitSettings fit;
  OdFitSettings od_fit;
  MetricsSettings metrics;

  // 500 us load + 200 us gated FWM, 85,000 cycles (17 s gated live time).
  static seq::DutyCycleSpec reference_duty_cycle();
  // Runs every module-level check; throws ConfigError with the field path.
  void validate() const;
};

ExperimentConfig parse(const nlohmann::json& doc);
ExperimentConfig load(const std::string& path);

// Fully resolved document (defaults filled in), keys sorted.
nlohmann::json to_json(const ExperimentConfig& cfg);

// 64-bit FNV-1a over the compact dump of to_json(cfg).
std::uint64_t config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace fwm::config
