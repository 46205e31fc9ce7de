#include "fwm/photon_sim.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <random>
#include <string>

#include "fwm/errors.hpp"

namespace fwm::sim {

namespace {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double exponential(Rng& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

std::complex<double> complex_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5));
  const double re = n(rng);
  return {re, n(rng)};
}

void require(bool ok, const char* what) {
  if (!ok) throw InvalidInput(what);
}

std::uint64_t to_ps(double ns) { return static_cast<std::uint64_t>(std::floor(ns * 1e3)); }

void append_gate_chaotic(std::vector<EmissionEvent>& out, const GateWindow& gate, double rate_per_s,
                         double tau_ns, const ChaoticOptions& opt, Rng& rng) {
  const double length_ns = static_cast<double>(gate.length()) * 1e-3;
  const double h = tau_ns / opt.steps_per_tau;
  const double rho = std::exp(-h / tau_ns);
  const double rate = rate_per_s * 1e-9;  // per ns
  std::complex<double> field = complex_normal(rng);

  if (rate * h * opt.intensity_cap > 1.0) {
    // Dense regime: walk every cell of the grid.
    const double kick = std::sqrt(1.0 - rho * rho);
    std::vector<double> cell_times;
    for (double t0 = 0.0; t0 < length_ns; t0 += h) {
      const double width = std::min(h, length_ns - t0);
      std::poisson_distribution<int> count(rate * width * std::norm(field));
      const int n = count(rng);
      cell_times.clear();
      for (int i = 0; i < n; ++i) cell_times.push_back(t0 + width * uniform01(rng));
      std::sort(cell_times.begin(), cell_times.end());
      for (double t : cell_times) out.push_back({gate.start + to_ps(t), Species::signal, 0});
      field = rho * field + kick * complex_normal(rng);
    }
    return;
  }

  // Sparse regime: thinning against rate * cap, advancing the field lazily to
  // the cell of each candidate with the exact multi-step AR(1) transition.
  const double envelope = rate * opt.intensity_cap;
  std::uint64_t cell = 0;
  double t = 0.0;
  while (true) {
    t += exponential(rng, envelope);
    if (t >= length_ns) break;
    const auto target = static_cast<std::uint64_t>(t / h);
    if (target > cell) {
      const double decay = std::exp(-static_cast<double>(target - cell) * h / tau_ns);
      field = decay * field + std::sqrt(1.0 - decay * decay) * complex_normal(rng);
      cell = target;
    }
    if (uniform01(rng) * opt.intensity_cap < std::norm(field)) {
      out.push_back({gate.start + to_ps(t), Species::signal, 0});
    }
  }
}

std::size_t gate_index_of(std::span<const GateWindow> gates, std::uint64_t t) {
  const auto it = std::upper_bound(gates.begin(), gates.end(), t,
                                   [](std::uint64_t v, const GateWindow& g) { return v < g.end; });
  if (it == gates.end() || t < it->start) return gates.size();
  return static_cast<std::size_t>(it - gates.begin());
}

}  // namespace

void SourceConfig::validate() const {
  require(pair_rate >= 0.0 && uncorrelated_rate_s >= 0.0 && uncorrelated_rate_i >= 0.0,
          "source rates must be non-negative");
  require(tau_c > 0.0 && chaotic_tau_s > 0.0 && chaotic_tau_i > 0.0,
          "source time constants must be positive");
}

void DetectorConfig::validate() const {
  require(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0,
          "quantum_efficiency must lie in [0, 1]");
  require(dark_rate >= 0.0, "dark_rate must be non-negative");
  require(jitter_sigma >= 0.0, "jitter_sigma must be non-negative");
  require(dead_time >= 0.0, "dead_time must be non-negative");
}

bool event_before(const EmissionEvent& a, const EmissionEvent& b) {
  if (a.time_ps != b.time_ps) return a.time_ps < b.time_ps;
  if (a.species != b.species) return a.species < b.species;
  return a.pair_id < b.pair_id;
}

std::vector<EmissionEvent> merge_events(std::span<const EmissionEvent> a,
                                        std::span<const EmissionEvent> b) {
  std::vector<EmissionEvent> out(a.size() + b.size());
  std::merge(a.begin(), a.end(), b.begin(), b.end(), out.begin(), event_before);
  return out;
}

ChannelMap ChannelMap::direct() {
  return {{{Species::signal, 0, 1.0}, {Species::idler, 1, 1.0}}};
}

ChannelMap ChannelMap::hbt(Species species, std::uint8_t channel_a, std::uint8_t channel_b) {
  return {{{species, channel_a, 0.5}, {species, channel_b, 0.5}}};
}

std::uint16_t ChannelMap::channel_count() const {
  int top = -1;
  for (const auto& r : routes) top = std::max(top, static_cast<int>(r.channel));
  return static_cast<std::uint16_t>(top + 1);
}

void ChannelMap::validate() const {
  double sum[2] = {0.0, 0.0};
  for (const auto& r : routes) {
    require(r.weight >= 0.0, "channel weights must be non-negative");
    sum[static_cast<int>(r.species)] += r.weight;
  }
  require(sum[0] <= 1.0 + 1e-12 && sum[1] <= 1.0 + 1e-12,
          "channel weights of one species must not exceed 1");
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stage, std::uint64_t index) {
  std::uint64_t state = root;
  std::uint64_t s = splitmix64(state);
  state = s ^ (stage * 0xd1342543de82ef95ULL);
  s = splitmix64(state);
  state = s ^ (index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
  return splitmix64(state);
}

std::vector<EmissionEvent> generate_pairs(const SourceConfig& src, std::span<const GateWindow> gates,
                                          std::uint64_t seed) {
  src.validate();
  validate_gates(gates);
  std::vector<EmissionEvent> out;
  if (src.pair_rate == 0.0) return out;
  const double rate = src.pair_rate * 1e-9;
  std::uint64_t next_id = 1;
  for (std::size_t g = 0; g < gates.size(); ++g) {
    Rng rng(derive_seed(seed, stage::kPairs, gates[g].start));
    const double length_ns = static_cast<double>(gates[g].length()) * 1e-3;
    const std::size_t first = out.size();
    for (double t = exponential(rng, rate); t < length_ns; t += exponential(rng, rate)) {
      const std::uint64_t ts = gates[g].start + to_ps(t);
      const std::uint64_t ti = ts + to_ps(exponential(rng, 1.0 / src.tau_c));
      out.push_back({ts, Species::signal, next_id});
      out.push_back({ti, Species::idler, next_id});
      ++next_id;
    }
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(), event_before);
  }
  // Idlers of one gate may trail past the start of the next only for
  // pathological gate spacing; a final check keeps the output sorted.
  if (!std::is_sorted(out.begin(), out.end(), event_before)) {
    std::sort(out.begin(), out.end(), event_before);
  }
  return out;
}

std::vector<EmissionEvent> generate_chaotic(const SourceConfig& src, Species species,
                                            std::span<const GateWindow> gates, std::uint64_t seed,
                                            const ChaoticOptions& options) {
  src.validate();
  validate_gates(gates);
  if (!(options.steps_per_tau >= 10.0)) {
    throw ResolutionError("chaotic field grid must be no coarser than tau/10 (steps_per_tau = " +
                          std::to_string(options.steps_per_tau) + ")");
  }
  require(options.intensity_cap > 1.0, "intensity_cap must exceed 1");
  const bool is_signal = species == Species::signal;
  const double rate = is_signal ? src.uncorrelated_rate_s : src.uncorrelated_rate_i;
  const double tau = is_signal ? src.chaotic_tau_s : src.chaotic_tau_i;
  std::vector<EmissionEvent> out;
  if (rate == 0.0) return out;
  const std::uint64_t stage_id = is_signal ? stage::kChaoticSignal : stage::kChaoticIdler;
  for (std::size_t g = 0; g < gates.size(); ++g) {
    Rng rng(derive_seed(seed, stage_id, gates[g].start));
    const std::size_t first = out.size();
    append_gate_chaotic(out, gates[g], rate, tau, options, rng);
    for (std::size_t i = first; i < out.size(); ++i) out[i].species = species;
  }
  return out;
}

std::vector<EmissionEvent> generate_chaotic(const SourceConfig& src, Species species,
                                            double duration_ns, std::uint64_t seed,
                                            const ChaoticOptions& options) {
  require(duration_ns > 0.0, "duration must be positive");
  const GateWindow whole{0, std::max<std::uint64_t>(1, to_ps(duration_ns))};
  return generate_chaotic(src, species, std::span<const GateWindow>(&whole, 1), seed, options);
}

TagStream detect(std::span<const EmissionEvent> events, std::span<const DetectorConfig> detectors,
                 const ChannelMap& map, std::span<const GateWindow> gates, std::uint64_t seed) {
  map.validate();
  validate_gates(gates);
  const std::uint16_t channels = map.channel_count();
  require(!detectors.empty(), "at least one detector configuration is required");
  require(detectors.size() == 1 || detectors.size() >= channels,
          "need one detector configuration per channel");
  for (const auto& d : detectors) d.validate();
  auto det = [&](std::size_t ch) -> const DetectorConfig& {
    return detectors.size() == 1 ? detectors[0] : detectors[ch];
  };

  std::vector<ChannelRoute> routes[2];
  for (const auto& r : map.routes) routes[static_cast<int>(r.species)].push_back(r);

  TagStream stream;
  stream.header.channel_count = channels;
  stream.header.acquisition_time_s = static_cast<double>(total_gate_length(gates)) * 1e-12;
  stream.header.gates.assign(gates.begin(), gates.end());
  auto& out = stream.records;

  Rng rng(derive_seed(seed, stage::kDetect));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& ev : events) {
    if (gate_index_of(gates, ev.time_ps) == gates.size()) continue;
    const auto& options = routes[static_cast<int>(ev.species)];
    double u = uniform01(rng);
    const ChannelRoute* route = nullptr;
    for (const auto& r : options) {
      if (u < r.weight) {
        route = &r;
        break;
      }
      u -= r.weight;
    }
    if (route == nullptr) continue;
    const auto& d = det(route->channel);
    if (uniform01(rng) >= d.quantum_efficiency) continue;
    auto t = static_cast<std::int64_t>(ev.time_ps);
    if (d.jitter_sigma > 0.0) {
      double z;
      do {
        z = normal(rng);
      } while (std::abs(z) > 5.0);
      t += std::llround(z * d.jitter_sigma * 1e3);
    }
    if (t < 0) continue;
    out.push_back({route->channel, static_cast<std::uint64_t>(t)});
  }

  for (std::uint16_t ch = 0; ch < channels; ++ch) {
    const double dark = det(ch).dark_rate;
    if (dark <= 0.0) continue;
    Rng dark_rng(derive_seed(seed, stage::kDark, ch));
    for (const auto& g : gates) {
      std::poisson_distribution<std::uint64_t> count(dark * static_cast<double>(g.length()) * 1e-12);
      const std::uint64_t n = count(dark_rng);
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto offset = static_cast<std::uint64_t>(uniform01(dark_rng) * static_cast<double>(g.length()));
        out.push_back({static_cast<std::uint8_t>(ch), g.start + std::min(offset, g.length() - 1)});
      }
    }
  }

  for (auto& r : out) {
    const std::uint64_t q = det(r.channel).resolution_ps;
    if (q > 1) r.timestamp -= r.timestamp % q;
    if (r.timestamp > kMaxTimestamp) throw RangeError("simulated timestamp exceeds 56 bits");
  }
  std::sort(out.begin(), out.end(), [](const TimeTagRecord& a, const TimeTagRecord& b) {
    return a.timestamp != b.timestamp ? a.timestamp < b.timestamp : a.channel < b.channel;
  });

  bool any_dead = false;
  for (std::uint16_t ch = 0; ch < channels; ++ch) any_dead |= det(ch).dead_time > 0.0;
  if (any_dead) {
    std::vector<std::int64_t> ready(channels, std::numeric_limits<std::int64_t>::min());
    std::vector<TimeTagRecord> kept;
    kept.reserve(out.size());
    for (const auto& r : out) {
      const auto t = static_cast<std::int64_t>(r.timestamp);
      if (t < ready[r.channel]) continue;
      kept.push_back(r);
      ready[r.channel] = t + std::llround(det(r.channel).dead_time * 1e3);
    }
    out.swap(kept);
  }
  return stream;
}

TagStream detect(std::span<const EmissionEvent> events, const DetectorConfig& detector,
                 const ChannelMap& map, std::span<const GateWindow> gates, std::uint64_t seed) {
  return detect(events, std::span<const DetectorConfig>(&detector, 1), map, gates, seed);
}

}  // namespace fwm::sim
