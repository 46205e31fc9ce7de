#pragma once

// Monte Carlo emission (correlated pairs, chaotic singles) and a detector
// model that turns emission events into time tags.
//
// Emission times are integer picoseconds on the same absolute timeline as the
// gate windows. Rates are per second, time constants in ns.

#include <cstdint>
#include <span>
#include <vector>

#include "fwm/timetag_io.hpp"

namespace fwm::sim {

struct SourceConfig {
  double pair_rate = 15'625.0;           // generated pairs / s inside gates
  double tau_c = 4.4;                    // heralded idler delay constant, ns
  double chaotic_tau_s = 18.92;          // ns
  double chaotic_tau_i = 12.8;           // ns
  double uncorrelated_rate_s = 4'619.0;  // chaotic signal photons / s
  double uncorrelated_rate_i = 4'075.0;  // chaotic idler photons / s

  void validate() const;
};

struct DetectorConfig {
  double quantum_efficiency = 0.8;
  double dark_rate = 100.0;           // counts / s
  double jitter_sigma = 0.431335;     // ns; 0.61 / sqrt(2) per detector
  double dead_time = 0.0;             // ns
  std::uint64_t resolution_ps = 0;    // timestamp quantum, 0 = none

  void validate() const;
};

enum class Species : std::uint8_t { signal = 0, idler = 1 };

struct EmissionEvent {
  std::uint64_t time_ps = 0;
  Species species = Species::signal;
  std::uint64_t pair_id = 0;  // 0 for unpaired photons

  friend bool operator==(const EmissionEvent&, const EmissionEvent&) = default;
};

// Orders by time, then species, then pair id.
bool event_before(const EmissionEvent& a, const EmissionEvent& b);
std::vector<EmissionEvent> merge_events(std::span<const EmissionEvent> a,
                                        std::span<const EmissionEvent> b);

// Routing of each species onto detector channels. The weights of one species
// are branch probabilities (a beam splitter); they may sum to less than 1 to
// model coupling loss.
struct ChannelRoute {
  Species species = Species::signal;
  std::uint8_t channel = 0;
  double weight = 1.0;
};

struct ChannelMap {
  std::vector<ChannelRoute> routes;

  // signal -> 0, idler -> 1
  static ChannelMap direct();
  // One species split evenly over two detectors.
  static ChannelMap hbt(Species species, std::uint8_t channel_a, std::uint8_t channel_b);

  std::uint16_t channel_count() const;
  void validate() const;
};

// Splitmix64-based derivation of independent sub-seeds from one root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stage, std::uint64_t index = 0);

namespace stage {
inline constexpr std::uint64_t kPairs = 1;
inline constexpr std::uint64_t kChaoticSignal = 2;
inline constexpr std::uint64_t kChaoticIdler = 3;
inline constexpr std::uint64_t kDetect = 4;
inline constexpr std::uint64_t kDark = 5;
}  // namespace stage

// Signal times are a homogeneous Poisson process restricted to the gates,
// each idler follows after an Exp(tau_c) delay. Every gate draws from a seed
// derived from its start time, so emission times do not depend on which other
// gates are generated alongside it. Pair ids are assigned sequentially.
std::vector<EmissionEvent> generate_pairs(const SourceConfig& src, std::span<const GateWindow> gates,
                                          std::uint64_t seed);

struct ChaoticOptions {
  // Sampling step of the field as a fraction of the coherence time; must be
  // at least 10 (grid no coarser than tau/10).
  double steps_per_tau = 50.0;
  // Thinning envelope in units of the mean intensity.
  double intensity_cap = 20.0;
};

// Cox process with intensity rate * |E(t)|^2, where E is a unit-power complex
// Gaussian AR(1) field with amplitude correlation exp(-|dt|/tau). Its
// intensity correlation is g2(dt) = 1 + exp(-2|dt|/tau).
std::vector<EmissionEvent> generate_chaotic(const SourceConfig& src, Species species,
                                            std::span<const GateWindow> gates, std::uint64_t seed,
                                            const ChaoticOptions& options = {});
std::vector<EmissionEvent> generate_chaotic(const SourceConfig& src, Species species,
                                            double duration_ns, std::uint64_t seed,
                                            const ChaoticOptions& options = {});

// Detector model. Events outside every gate are discarded (the gate acts on
// arrival time, before timing jitter). Each remaining event is routed by the
// channel map, kept with the channel's quantum efficiency, and shifted by
// Gaussian jitter truncated at 5 sigma. Dark counts are Poisson over the gates.
// Dead time is non-paralysable per channel. `detectors` holds one entry per
// channel, or a single entry shared by all channels.
TagStream detect(std::span<const EmissionEvent> events, std::span<const DetectorConfig> detectors,
                 const ChannelMap& map, std::span<const GateWindow> gates, std::uint64_t seed);
TagStream detect(std::span<const EmissionEvent> events, const DetectorConfig& detector,
                 const ChannelMap& map, std::span<const GateWindow> gates, std::uint64_t seed);

}  // namespace fwm::sim
