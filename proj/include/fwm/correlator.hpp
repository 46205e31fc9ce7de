#pragma once

// Coincidence histograms from time-tag streams.
//
// Delay convention: dt = t_b - t_a, with channel a the signal (herald) and b
// the idler. Delays are binned in integer picoseconds; the accepted range is
// [dt_min, dt_min + n * bin_width) with n = ceil((dt_max - dt_min) / bin_width).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fwm/timetag_io.hpp"

namespace fwm::corr {

struct HistogramConfig {
  double bin_width = 1.4;  // ns
  double dt_min = -50.0;   // ns
  double dt_max = 350.0;   // ns
  std::uint8_t channel_a = 0;
  std::uint8_t channel_b = 1;

  void validate() const;
  std::int64_t bin_width_ps() const;
  std::int64_t dt_min_ps() const;
  std::size_t bin_count() const;
  bool is_auto() const { return channel_a == channel_b; }
  friend bool operator==(const HistogramConfig&, const HistogramConfig&) = default;
};

struct CorrelationHistogram {
  HistogramConfig config;
  std::vector<std::uint64_t> counts;
  double acquisition_time_s = 0.0;  // gated live time T
  std::uint64_t singles_a = 0;
  std::uint64_t singles_b = 0;

  std::size_t size() const { return counts.size(); }
  double bin_lower(std::size_t i) const;  // ns
  double bin_center(std::size_t i) const;  // ns
  double rate_a() const;  // singles / T, s^-1
  double rate_b() const;
  std::uint64_t total() const;

  // Bin-wise sum of two histograms over disjoint acquisitions.
  void merge(const CorrelationHistogram& other);
};

// Single-pass sliding-window correlator. Each ordered pair inside the delay
// range is counted once, when the later of its two tags arrives. In auto mode
// (channel_a == channel_b) a tag never pairs with itself.
class Correlator {
 public:
  explicit Correlator(const HistogramConfig& config);

  void push(const TimeTagRecord& record);
  void push(std::span<const TimeTagRecord> records);
  CorrelationHistogram result(double acquisition_time_s) const;
  std::uint64_t tags_seen() const { return seen_; }

 private:
  struct Ring {
    std::vector<std::uint64_t> data;
    std::size_t head = 0;
    void push(std::uint64_t t);
    void prune(std::uint64_t now, std::uint64_t span);
    std::size_t size() const { return data.size() - head; }
  };

  void count(std::int64_t delay);

  HistogramConfig config_;
  std::int64_t min_ps_;
  std::int64_t width_ps_;
  std::int64_t max_ps_;       // exclusive upper edge of the last bin
  std::uint64_t keep_span_;   // oldest useful age of a buffered tag
  std::vector<std::uint64_t> counts_;
  Ring ring_a_, ring_b_;
  std::uint64_t singles_a_ = 0, singles_b_ = 0, seen_ = 0, last_ = 0;
};

// Record-level entry points take picosecond timestamps; the stream-level ones
// rescale from the header's tick unit first.
void to_picoseconds(std::span<TimeTagRecord> records, std::uint32_t tick_ps);

CorrelationHistogram cross_correlate(const TagStream& stream, const HistogramConfig& config);
CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> records, double acquisition_time_s,
                                     const HistogramConfig& config);
// Streams a time-tag file through the correlator with bounded memory.
CorrelationHistogram correlate_stream(std::istream& source, const HistogramConfig& config);

// Splits the stream at gaps wider than the delay range, correlates the parts
// on `workers` threads and merges the partial histograms.
CorrelationHistogram cross_correlate_parallel(std::span<const TimeTagRecord> records,
                                              double acquisition_time_s, const HistogramConfig& config,
                                              unsigned workers);

// O(N^2) reference used for validation.
CorrelationHistogram brute_force_correlate(std::span<const TimeTagRecord> records,
                                           double acquisition_time_s, const HistogramConfig& config);

enum class AccidentalSource { computed, fitted };

struct AccidentalEstimate {
  double g_acc = 0.0;  // expected counts per bin
  AccidentalSource source = AccidentalSource::computed;
  double uncertainty = 0.0;
};

// R1 * R2 * bin_width * T, with bin width and T in seconds.
AccidentalEstimate accidental_rate(double r1, double r2, double bin_width_s, double t_s);
// Mean count of the bins whose centres lie in [lo_ns, hi_ns].
AccidentalEstimate accidental_from_wings(const CorrelationHistogram& hist, double lo_ns, double hi_ns);

struct NormalizedHistogram {
  std::vector<double> bin_center_ns;
  std::vector<std::uint64_t> counts;
  std::vector<double> g2;
  std::vector<double> g2_err;
  std::vector<bool> low_statistics;  // zero-count bins
};

NormalizedHistogram normalize(const CorrelationHistogram& hist, const AccidentalEstimate& acc);

// Background-subtracted coincidences per second inside [0, window_ns).
double coincidence_rate(const CorrelationHistogram& hist, double window_ns, const AccidentalEstimate& acc);

// CSV columns: bin_center_ns,counts,g2,g2_err
void write_histogram_csv(std::ostream& out, const CorrelationHistogram& hist, const AccidentalEstimate& acc);
// JSON sidecar with T, rates, bin width and channels.
void write_histogram_sidecar(std::ostream& out, const CorrelationHistogram& hist,
                             const AccidentalEstimate& acc);

struct HistogramTable {
  std::vector<double> bin_center_ns;
  std::vector<double> counts;
  std::vector<double> g2;
  std::vector<double> g2_err;
};
HistogramTable read_histogram_csv(std::istream& in);

}  // namespace fwm::corr
