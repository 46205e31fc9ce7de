#include "fwm/correlator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "fwm/errors.hpp"
#include "fwm/format.hpp"

namespace fwm::corr {

void HistogramConfig::validate() const {
  if (!(bin_width > 0.0)) throw InvalidInput("bin_width must be positive");
  if (!(dt_min < dt_max)) throw InvalidInput("dt_min must be below dt_max");
  if (bin_width_ps() <= 0) throw InvalidInput("bin_width must be at least 1 ps");
}

std::int64_t HistogramConfig::bin_width_ps() const { return std::llround(bin_width * 1e3); }
std::int64_t HistogramConfig::dt_min_ps() const { return std::llround(dt_min * 1e3); }

std::size_t HistogramConfig::bin_count() const {
  const std::int64_t span = std::llround(dt_max * 1e3) - dt_min_ps();
  const std::int64_t w = bin_width_ps();
  return static_cast<std::size_t>((span + w - 1) / w);
}

double CorrelationHistogram::bin_lower(std::size_t i) const {
  return static_cast<double>(config.dt_min_ps() + static_cast<std::int64_t>(i) * config.bin_width_ps()) * 1e-3;
}

double CorrelationHistogram::bin_center(std::size_t i) const {
  return bin_lower(i) + 0.5 * static_cast<double>(config.bin_width_ps()) * 1e-3;
}

double CorrelationHistogram::rate_a() const {
  return acquisition_time_s > 0.0 ? static_cast<double>(singles_a) / acquisition_time_s : 0.0;
}

double CorrelationHistogram::rate_b() const {
  return acquisition_time_s > 0.0 ? static_cast<double>(singles_b) / acquisition_time_s : 0.0;
}

std::uint64_t CorrelationHistogram::total() const {
  std::uint64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

void CorrelationHistogram::merge(const CorrelationHistogram& other) {
  if (!(config == other.config) || counts.size() != other.counts.size()) {
    throw InvalidInput("cannot merge histograms with different binning or channels");
  }
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  singles_a += other.singles_a;
  singles_b += other.singles_b;
  acquisition_time_s += other.acquisition_time_s;
}

void Correlator::Ring::push(std::uint64_t t) { data.push_back(t); }

void Correlator::Ring::prune(std::uint64_t now, std::uint64_t span) {
  while (head < data.size() && now - data[head] > span) ++head;
  if (head > 4096 && 2 * head > data.size()) {
    data.erase(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(head));
    head = 0;
  }
}

Correlator::Correlator(const HistogramConfig& config) : config_(config) {
  config_.validate();
  min_ps_ = config_.dt_min_ps();
  width_ps_ = config_.bin_width_ps();
  counts_.assign(config_.bin_count(), 0);
  max_ps_ = min_ps_ + width_ps_ * static_cast<std::int64_t>(counts_.size());
  keep_span_ = static_cast<std::uint64_t>(std::max<std::int64_t>({max_ps_ - 1, -min_ps_, 0}));
}

void Correlator::count(std::int64_t delay) {
  if (delay < min_ps_ || delay >= max_ps_) return;
  ++counts_[static_cast<std::size_t>((delay - min_ps_) / width_ps_)];
}

void Correlator::push(const TimeTagRecord& record) {
  const std::uint64_t t = record.timestamp;
  if (seen_ > 0 && t < last_) {
    throw OrderingError("tag " + std::to_string(seen_) + " is earlier than its predecessor");
  }
  last_ = t;
  ++seen_;
  const bool is_a = record.channel == config_.channel_a;
  const bool is_b = record.channel == config_.channel_b;
  if (!is_a && !is_b) return;

  ring_a_.prune(t, keep_span_);
  if (config_.is_auto()) {
    for (std::size_t i = ring_a_.head; i < ring_a_.data.size(); ++i) {
      const auto age = static_cast<std::int64_t>(t - ring_a_.data[i]);
      count(age);
      count(-age);
    }
    ring_a_.push(t);
    ++singles_a_;
    ++singles_b_;
    return;
  }

  ring_b_.prune(t, keep_span_);
  if (is_b) {
    for (std::size_t i = ring_a_.head; i < ring_a_.data.size(); ++i) {
      count(static_cast<std::int64_t>(t - ring_a_.data[i]));
    }
    ring_b_.push(t);
    ++singles_b_;
  } else {
    for (std::size_t i = ring_b_.head; i < ring_b_.data.size(); ++i) {
      count(-static_cast<std::int64_t>(t - ring_b_.data[i]));
    }
    ring_a_.push(t);
    ++singles_a_;
  }
}

void Correlator::push(std::span<const TimeTagRecord> records) {
  for (const auto& r : records) push(r);
}

CorrelationHistogram Correlator::result(double acquisition_time_s) const {
  CorrelationHistogram h;
  h.config = config_;
  h.counts = counts_;
  h.acquisition_time_s = acquisition_time_s;
  h.singles_a = singles_a_;
  h.singles_b = singles_b_;
  return h;
}

void to_picoseconds(std::span<TimeTagRecord> records, std::uint32_t tick_ps) {
  if (tick_ps == 1) return;
  if (tick_ps == 0) throw FormatError("tick unit must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 2 / tick_ps;
  for (auto& r : records) {
    if (r.timestamp > limit) throw RangeError("timestamp overflows when converted to picoseconds");
    r.timestamp *= tick_ps;
  }
}

CorrelationHistogram cross_correlate(const TagStream& stream, const HistogramConfig& config) {
  if (stream.header.tick_ps == 1) return cross_correlate(stream.records, stream.header.acquisition_time_s, config);
  std::vector<TimeTagRecord> scaled = stream.records;
  to_picoseconds(scaled, stream.header.tick_ps);
  return cross_correlate(scaled, stream.header.acquisition_time_s, config);
}

CorrelationHistogram cross_correlate(std::span<const TimeTagRecord> records, double acquisition_time_s,
                                     const HistogramConfig& config) {
  Correlator c(config);
  c.push(records);
  return c.result(acquisition_time_s);
}

CorrelationHistogram correlate_stream(std::istream& source, const HistogramConfig& config) {
  TagStreamReader reader(source);
  Correlator c(config);
  std::vector<TimeTagRecord> chunk(TagStreamReader::kBufferRecords);
  while (const std::size_t n = reader.read(chunk)) {
    const std::span<TimeTagRecord> part(chunk.data(), n);
    to_picoseconds(part, reader.header().tick_ps);
    c.push(part);
  }
  return c.result(reader.header().acquisition_time_s);
}

CorrelationHistogram cross_correlate_parallel(std::span<const TimeTagRecord> records,
                                              double acquisition_time_s, const HistogramConfig& config,
                                              unsigned workers) {
  config.validate();
  workers = std::max(1u, workers);
  if (!std::is_sorted(records.begin(), records.end(),
                      [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; })) {
    throw OrderingError("stream is not sorted by timestamp");
  }
  const Correlator probe(config);
  const std::int64_t min_ps = config.dt_min_ps();
  const std::int64_t max_ps = min_ps + config.bin_width_ps() * static_cast<std::int64_t>(config.bin_count());
  const auto span = static_cast<std::uint64_t>(std::max<std::int64_t>({max_ps - 1, -min_ps, 0}));

  // Cut points sit at gaps no pair can straddle.
  std::vector<std::size_t> cuts{0};
  for (unsigned w = 1; w < workers; ++w) {
    std::size_t i = std::max(cuts.back() + 1, records.size() * w / workers);
    while (i < records.size() && records[i].timestamp - records[i - 1].timestamp <= span) ++i;
    if (i >= records.size()) break;
    cuts.push_back(i);
  }
  cuts.push_back(records.size());

  std::vector<CorrelationHistogram> parts(cuts.size() - 1);
  std::vector<std::thread> threads;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    threads.emplace_back([&, p] {
      parts[p] = cross_correlate(records.subspan(cuts[p], cuts[p + 1] - cuts[p]), 0.0, config);
    });
  }
  for (auto& t : threads) t.join();

  CorrelationHistogram total = probe.result(0.0);
  for (const auto& part : parts) total.merge(part);
  total.acquisition_time_s = acquisition_time_s;
  return total;
}

CorrelationHistogram brute_force_correlate(std::span<const TimeTagRecord> records,
                                           double acquisition_time_s, const HistogramConfig& config) {
  config.validate();
  CorrelationHistogram h;
  h.config = config;
  h.counts.assign(config.bin_count(), 0);
  h.acquisition_time_s = acquisition_time_s;
  const std::int64_t min_ps = config.dt_min_ps();
  const std::int64_t w = config.bin_width_ps();
  const std::int64_t max_ps = min_ps + w * static_cast<std::int64_t>(h.counts.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].channel == config.channel_a) ++h.singles_a;
    if (records[i].channel == config.channel_b) ++h.singles_b;
    if (records[i].channel != config.channel_a) continue;
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (j == i || records[j].channel != config.channel_b) continue;
      const std::int64_t d = static_cast<std::int64_t>(records[j].timestamp) -
                             static_cast<std::int64_t>(records[i].timestamp);
      if (d >= min_ps && d < max_ps) ++h.counts[static_cast<std::size_t>((d - min_ps) / w)];
    }
  }
  return h;
}

AccidentalEstimate accidental_rate(double r1, double r2, double bin_width_s, double t_s) {
  if (!(r1 >= 0.0 && r2 >= 0.0 && bin_width_s >= 0.0 && t_s >= 0.0)) {
    throw InvalidInput("accidental_rate inputs must be non-negative");
  }
  return {r1 * r2 * bin_width_s * t_s, AccidentalSource::computed, 0.0};
}

AccidentalEstimate accidental_from_wings(const CorrelationHistogram& hist, double lo_ns, double hi_ns) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double c = hist.bin_center(i);
    if (c >= lo_ns && c <= hi_ns) {
      sum += static_cast<double>(hist.counts[i]);
      ++n;
    }
  }
  if (n == 0) throw RangeError("no histogram bins inside the accidental wing window");
  const double mean = sum / static_cast<double>(n);
  return {mean, AccidentalSource::fitted, std::sqrt(mean / static_cast<double>(n))};
}

NormalizedHistogram normalize(const CorrelationHistogram& hist, const AccidentalEstimate& acc) {
  if (!(acc.g_acc > 0.0)) throw DomainError("cannot normalise by a zero accidental level");
  NormalizedHistogram out;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const auto c = static_cast<double>(hist.counts[i]);
    out.bin_center_ns.push_back(hist.bin_center(i));
    out.counts.push_back(hist.counts[i]);
    out.g2.push_back(c / acc.g_acc);
    out.g2_err.push_back(std::sqrt(c) / acc.g_acc);
    out.low_statistics.push_back(hist.counts[i] == 0);
  }
  return out;
}

double coincidence_rate(const CorrelationHistogram& hist, double window_ns, const AccidentalEstimate& acc) {
  if (!(window_ns > 0.0)) throw InvalidInput("coincidence window must be positive");
  const double upper = hist.bin_lower(hist.size());
  if (hist.config.dt_min > 0.0 || window_ns > upper) {
    throw RangeError("coincidence window [0, " + format_double(window_ns) +
                     ") ns lies outside the histogram range");
  }
  if (!(hist.acquisition_time_s > 0.0)) throw DomainError("acquisition time must be positive");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double c = hist.bin_center(i);
    if (c >= 0.0 && c < window_ns) {
      sum += static_cast<double>(hist.counts[i]);
      ++n;
    }
  }
  return (sum - acc.g_acc * static_cast<double>(n)) / hist.acquisition_time_s;
}

void write_histogram_csv(std::ostream& out, const CorrelationHistogram& hist, const AccidentalEstimate& acc) {
  out << "bin_center_ns,counts,g2,g2_err\n";
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const auto c = static_cast<double>(hist.counts[i]);
    const double g2 = acc.g_acc > 0.0 ? c / acc.g_acc : 0.0;
    const double err = acc.g_acc > 0.0 ? std::sqrt(c) / acc.g_acc : 0.0;
    out << format_double(hist.bin_center(i)) << ',' << hist.counts[i] << ',' << format_double(g2) << ','
        << format_double(err) << '\n';
  }
}

void write_histogram_sidecar(std::ostream& out, const CorrelationHistogram& hist,
                             const AccidentalEstimate& acc) {
  nlohmann::ordered_json j;
  j["acquisition_time_s"] = hist.acquisition_time_s;
  j["rate_a"] = hist.rate_a();
  j["rate_b"] = hist.rate_b();
  j["singles_a"] = hist.singles_a;
  j["singles_b"] = hist.singles_b;
  j["bin_width_ns"] = hist.config.bin_width;
  j["dt_min_ns"] = hist.config.dt_min;
  j["dt_max_ns"] = hist.config.dt_max;
  j["bins"] = hist.size();
  j["channel_a"] = hist.config.channel_a;
  j["channel_b"] = hist.config.channel_b;
  j["total_coincidences"] = hist.total();
  j["g_acc"] = acc.g_acc;
  j["g_acc_source"] = acc.source == AccidentalSource::computed ? "computed" : "fitted";
  out << j.dump(2) << '\n';
}

HistogramTable read_histogram_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty histogram CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "bin_center_ns,counts,g2,g2_err") {
    throw FormatError("unexpected histogram CSV header: " + line);
  }
  HistogramTable t;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::istringstream fields(line);
    std::string cell;
    double v[4];
    for (int k = 0; k < 4; ++k) {
      if (!std::getline(fields, cell, ',')) throw FormatError("row " + std::to_string(row) + ": missing column");
      try {
        std::size_t used = 0;
        v[k] = std::stod(cell, &used);
        if (cell.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw FormatError("row " + std::to_string(row) + ": malformed number '" + cell + "'");
      }
    }
    t.bin_center_ns.push_back(v[0]);
    t.counts.push_back(v[1]);
    t.g2.push_back(v[2]);
    t.g2_err.push_back(v[3]);
  }
  return t;
}

}  // namespace fwm::corr
