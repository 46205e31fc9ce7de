#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "fwm/correlator.hpp"
#include "fwm/errors.hpp"

using namespace fwm::corr;
using fwm::TimeTagRecord;

namespace {

std::vector<TimeTagRecord> poisson_stream(double rate_a, double rate_b, double duration_s, std::uint64_t seed,
                                          std::uint8_t ch_a = 0, std::uint8_t ch_b = 1) {
  std::mt19937_64 rng(seed);
  std::vector<TimeTagRecord> out;
  for (auto [rate, ch] : {std::pair{rate_a, ch_a}, std::pair{rate_b, ch_b}}) {
    std::exponential_distribution<double> gap(rate * 1e-12);
    for (double t = gap(rng); t < duration_s * 1e12; t += gap(rng)) {
      out.push_back({ch, static_cast<std::uint64_t>(t)});
    }
  }
  std::sort(out.begin(), out.end(), [](auto& x, auto& y) {
    return x.timestamp != y.timestamp ? x.timestamp < y.timestamp : x.channel < y.channel;
  });
  return out;
}

std::vector<TimeTagRecord> dense_random(std::size_t n, std::uint64_t span_ps, int channels, std::mt19937_64& rng,
                                        std::uint64_t multiple = 1) {
  std::uniform_int_distribution<std::uint64_t> t(0, span_ps / multiple);
  std::uniform_int_distribution<int> c(0, channels - 1);
  std::vector<TimeTagRecord> v(n);
  for (auto& r : v) r = {static_cast<std::uint8_t>(c(rng)), t(rng) * multiple};
  std::sort(v.begin(), v.end(), [](auto& x, auto& y) { return x.timestamp < y.timestamp; });
  return v;
}

}  // namespace

TEST(HistogramConfig, BinCountAndValidation) {
  HistogramConfig c;
  EXPECT_EQ(c.bin_count(), 286u);  // ceil(400 / 1.4)
  c.bin_width = 0;
  EXPECT_THROW(c.validate(), fwm::InvalidInput);
  c = {};
  c.dt_min = 10;
  c.dt_max = 10;
  EXPECT_THROW(c.validate(), fwm::InvalidInput);
}

TEST(Correlator, SinglePair) {
  HistogramConfig c;
  const std::vector<TimeTagRecord> recs{{0, 1'000'000}, {1, 1'010'000}};
  const auto h = cross_correlate(recs, 1.0, c);
  EXPECT_EQ(h.total(), 1u);
  EXPECT_EQ(h.counts[42], 1u);  // floor((10 + 50) / 1.4)
  EXPECT_EQ(h.singles_a, 1u);
  EXPECT_EQ(h.singles_b, 1u);
  // Reversed order lands at -10 ns.
  const std::vector<TimeTagRecord> rev{{1, 1'000'000}, {0, 1'010'000}};
  const auto r = cross_correlate(rev, 1.0, c);
  EXPECT_EQ(r.counts[28], 1u);  // floor(40 / 1.4)
}

TEST(Correlator, RangeEdgesAreHalfOpen) {
  HistogramConfig c{1.0, -2.0, 3.0, 0, 1};
  const std::vector<TimeTagRecord> recs{{0, 10'000}, {1, 8'000}, {1, 8'001}, {1, 12'999}, {1, 13'000}};
  // 8000 -> -2000 ps (first bin), 8001 -> -1999, 12999 -> 2999 (last bin), 13000 -> out.
  std::vector<TimeTagRecord> sorted = recs;
  std::sort(sorted.begin(), sorted.end(), [](auto& x, auto& y) { return x.timestamp < y.timestamp; });
  const auto h = cross_correlate(sorted, 1.0, c);
  EXPECT_EQ(h.counts, (std::vector<std::uint64_t>{2, 0, 0, 0, 1}));
}

TEST(Correlator, RejectsUnsortedStream) {
  const std::vector<TimeTagRecord> recs{{0, 10}, {1, 5}};
  EXPECT_THROW(cross_correlate(recs, 1.0, HistogramConfig{}), fwm::OrderingError);
}

TEST(Correlator, AutoCorrelationIsSymmetric) {
  std::mt19937_64 rng(4);
  HistogramConfig c{1.002, -50.601, 50.601, 2, 2};
  ASSERT_EQ(c.bin_count(), 101u);
  for (int trial = 0; trial < 10; ++trial) {
    const auto recs = dense_random(3000, 3'000'000, 3, rng, 2);
    const auto h = cross_correlate(recs, 1.0, c);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(h.counts[i], h.counts[h.size() - 1 - i]);
    EXPECT_EQ(h.counts, brute_force_correlate(recs, 1.0, c).counts);
  }
}

TEST(Correlator, SelfPairsExcluded) {
  HistogramConfig c{1.0, -5.5, 5.5, 0, 0};
  const std::vector<TimeTagRecord> one{{0, 100'000}};
  EXPECT_EQ(cross_correlate(one, 1.0, c).total(), 0u);
  const std::vector<TimeTagRecord> twins{{0, 100'000}, {0, 100'000}};
  EXPECT_EQ(cross_correlate(twins, 1.0, c).counts[5], 2u);
}

TEST(Correlator, MatchesBruteForceOnRandomStreams) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 50 + rng() % 2000;
    const auto recs = dense_random(n, 1 + rng() % 20'000'000, 3, rng);
    HistogramConfig c;
    c.bin_width = 0.1 + 3.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    c.dt_min = -100.0 * std::uniform_real_distribution<double>(-0.5, 1)(rng);
    c.dt_max = c.dt_min + 1 + 300.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    c.channel_a = static_cast<std::uint8_t>(rng() % 3);
    c.channel_b = static_cast<std::uint8_t>(rng() % 3);
    const auto fast = cross_correlate(recs, 2.0, c);
    const auto slow = brute_force_correlate(recs, 2.0, c);
    EXPECT_EQ(fast.counts, slow.counts) << "trial " << trial;
    EXPECT_EQ(fast.singles_a, slow.singles_a);
    EXPECT_EQ(fast.singles_b, slow.singles_b);
  }
}

TEST(Correlator, MergeOfSeparatedSegmentsEqualsWhole) {
  std::mt19937_64 rng(5);
  auto first = dense_random(4000, 5'000'000, 2, rng);
  auto second = dense_random(4000, 5'000'000, 2, rng);
  const std::uint64_t offset = first.back().timestamp + 400'001;
  for (auto& r : second) r.timestamp += offset;
  std::vector<TimeTagRecord> whole = first;
  whole.insert(whole.end(), second.begin(), second.end());
  HistogramConfig c;
  auto merged = cross_correlate(first, 1.0, c);
  merged.merge(cross_correlate(second, 2.0, c));
  const auto direct = cross_correlate(whole, 3.0, c);
  EXPECT_EQ(merged.counts, direct.counts);
  EXPECT_EQ(merged.singles_a, direct.singles_a);
  EXPECT_DOUBLE_EQ(merged.acquisition_time_s, 3.0);

  HistogramConfig other = c;
  other.bin_width = 2.0;
  EXPECT_THROW(merged.merge(cross_correlate(first, 1.0, other)), fwm::InvalidInput);
}

TEST(Correlator, ParallelEqualsSerial) {
  const auto recs = poisson_stream(2e5, 2e5, 0.5, 9);
  HistogramConfig c;
  const auto serial = cross_correlate(recs, 0.5, c);
  for (unsigned w : {1u, 2u, 4u, 7u}) {
    const auto par = cross_correlate_parallel(recs, 0.5, c, w);
    EXPECT_EQ(par.counts, serial.counts);
    EXPECT_EQ(par.singles_a, serial.singles_a);
    EXPECT_EQ(par.singles_b, serial.singles_b);
  }
}

TEST(Correlator, StreamingFileMatchesInMemory) {
  const auto recs = poisson_stream(5e4, 5e4, 1.0, 10);
  fwm::StreamHeader h;
  h.acquisition_time_s = 1.0;
  std::stringstream file;
  fwm::write_stream(recs, h, file);
  HistogramConfig c;
  const auto a = correlate_stream(file, c);
  const auto b = cross_correlate(recs, 1.0, c);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_EQ(a.acquisition_time_s, 1.0);
}

TEST(Accidentals, Arithmetic) {
  EXPECT_NEAR(accidental_rate(16'295, 15'860, 1.4e-9, 17).g_acc, 6.1507, 1e-3);
  EXPECT_EQ(accidental_rate(0, 15'860, 1.4e-9, 17).g_acc, 0.0);
  EXPECT_EQ(accidental_rate(16'295, 15'860, 1.4e-9, 0).g_acc, 0.0);
  EXPECT_DOUBLE_EQ(accidental_rate(3, 5, 1e-9, 34).g_acc, 2 * accidental_rate(3, 5, 1e-9, 17).g_acc);
  EXPECT_THROW(accidental_rate(-1, 1, 1, 1), fwm::InvalidInput);
}

TEST(Accidentals, UncorrelatedStreamsAreFlatAtPrediction) {
  const double T = 4.0;
  const auto recs = poisson_stream(3e4, 4e4, T, 21);
  HistogramConfig c;
  const auto h = cross_correlate(recs, T, c);
  const auto acc = accidental_rate(h.rate_a(), h.rate_b(), c.bin_width * 1e-9, T);
  int inside = 0;
  for (auto n : h.counts) inside += std::abs(static_cast<double>(n) - acc.g_acc) <= 3 * std::sqrt(acc.g_acc);
  EXPECT_GE(inside, static_cast<int>(0.95 * static_cast<double>(h.size())));
  const auto wings = accidental_from_wings(h, 200, 350);
  EXPECT_NEAR(wings.g_acc, acc.g_acc, 3 * wings.uncertainty);
  EXPECT_EQ(wings.source, AccidentalSource::fitted);
  const double rc = coincidence_rate(h, 40, acc);
  EXPECT_NEAR(rc, 0.0, 3 * std::sqrt(acc.g_acc * 29) / T);
}

TEST(Normalize, DefinitionAndErrors) {
  CorrelationHistogram h;
  h.config = HistogramConfig{1.0, 0.0, 4.0, 0, 1};
  h.counts = {0, 4, 16, 1654 + 6};
  h.acquisition_time_s = 1;
  const auto g = normalize(h, {4.0});
  EXPECT_EQ(g.g2[0], 0.0);
  EXPECT_EQ(g.g2_err[0], 0.0);
  EXPECT_TRUE(g.low_statistics[0]);
  EXPECT_DOUBLE_EQ(g.g2[1], 1.0);
  EXPECT_DOUBLE_EQ(g.g2_err[2], 1.0);
  EXPECT_FALSE(g.low_statistics[2]);
  EXPECT_THROW(normalize(h, {0.0}), fwm::DomainError);
  // Typical peak: (G0 + G_acc) / G_acc with G0 = 1654, G_acc = 5.8.
  h.counts[3] = 1654;
  EXPECT_NEAR(normalize(h, {5.8}).g2[3] + 1.0, 286.2, 0.1);
}

TEST(CoincidenceRate, WindowHandling) {
  CorrelationHistogram h;
  h.config = HistogramConfig{0.1, -10.0, 60.0, 0, 1};
  h.counts.assign(h.config.bin_count(), 0);
  h.acquisition_time_s = 2.0;
  // Exponential pair distribution with tau = 4.4 ns, one million pairs.
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double lo = h.bin_lower(i), hi = lo + 0.1;
    if (lo >= 0) h.counts[i] = static_cast<std::uint64_t>(std::llround(1e6 * (std::exp(-lo / 4.4) - std::exp(-hi / 4.4))));
  }
  const double r40 = coincidence_rate(h, 40, {});
  const double r44 = coincidence_rate(h, 4.4, {});
  EXPECT_NEAR(r40 * 2.0, 1e6 * (1 - std::exp(-40 / 4.4)), 50);
  EXPECT_NEAR(r44 / r40, 1 - std::exp(-1.0), 1e-3);
  EXPECT_THROW(coincidence_rate(h, 61, {}), fwm::RangeError);
  h.acquisition_time_s = 0;
  EXPECT_THROW(coincidence_rate(h, 40, {}), fwm::DomainError);
}

TEST(HistogramCsv, RoundTrip) {
  const auto recs = poisson_stream(1e5, 1e5, 0.2, 2);
  const auto h = cross_correlate(recs, 0.2, HistogramConfig{});
  const auto acc = accidental_rate(h.rate_a(), h.rate_b(), 1.4e-9, 0.2);
  std::stringstream csv;
  write_histogram_csv(csv, h, acc);
  const auto t = read_histogram_csv(csv);
  ASSERT_EQ(t.counts.size(), h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(t.counts[i], static_cast<double>(h.counts[i]));
    EXPECT_EQ(t.bin_center_ns[i], h.bin_center(i));
  }
  std::stringstream bad("bin_center_ns,counts,g2,g2_err\n1,x,2,3\n");
  EXPECT_THROW(read_histogram_csv(bad), fwm::FormatError);
  std::ostringstream side;
  write_histogram_sidecar(side, h, acc);
  EXPECT_NE(side.str().find("\"acquisition_time_s\": 0.2"), std::string::npos);
}
