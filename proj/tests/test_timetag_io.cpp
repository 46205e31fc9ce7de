#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "fwm/errors.hpp"
#include "fwm/timetag_io.hpp"

using fwm::GateWindow;
using fwm::StreamHeader;
using fwm::TimeTagRecord;

namespace {

std::string load(const std::string& name) {
  std::ifstream in(std::string(FWM_TEST_DATA_DIR) + "/" + name, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::vector<TimeTagRecord> kGoldenRecords{{0, 1000}, {1, 5000}, {1, fwm::kMaxTimestamp}};

std::string write_to_string(const std::vector<TimeTagRecord>& recs, const StreamHeader& h) {
  std::ostringstream out(std::ios::binary);
  fwm::write_stream(recs, h, out);
  return out.str();
}

std::vector<TimeTagRecord> random_records(std::size_t n, std::uint64_t seed, std::uint16_t channels = 4) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> step(0, 5000);
  std::uniform_int_distribution<int> ch(0, channels - 1);
  std::vector<TimeTagRecord> v(n);
  std::uint64_t t = 0;
  for (auto& r : v) {
    t += step(rng);
    r = {static_cast<std::uint8_t>(ch(rng)), t};
  }
  return v;
}

std::vector<TimeTagRecord> brute_gate(const std::vector<TimeTagRecord>& recs, const std::vector<GateWindow>& gates) {
  std::vector<TimeTagRecord> out;
  for (const auto& r : recs) {
    for (const auto& g : gates) {
      if (g.contains(r.timestamp)) {
        out.push_back(r);
        break;
      }
    }
  }
  return out;
}

}  // namespace

TEST(TimeTagWrite, EmptyStreamIsHeaderOnly) {
  StreamHeader h;
  const auto bytes = write_to_string({}, h);
  EXPECT_EQ(bytes.size(), fwm::timetag::kHeaderSize);
  std::istringstream in(bytes);
  const auto s = fwm::read_stream(in);
  EXPECT_TRUE(s.records.empty());
  EXPECT_EQ(s.header, h);
}

TEST(TimeTagWrite, GoldenFixtureByteExact) {
  StreamHeader h;
  h.acquisition_time_s = 1.5;
  const auto bytes = write_to_string(kGoldenRecords, h);
  EXPECT_EQ(bytes.size(), fwm::timetag::kHeaderSize + 24);
  EXPECT_EQ(bytes, load("golden3.tags"));

  h.acquisition_time_s = 7e-9;
  h.gates = {{0, 2000}, {4000, 9000}};
  EXPECT_EQ(write_to_string(kGoldenRecords, h), load("golden3_gated.tags"));
}

TEST(TimeTagRead, GoldenFixture) {
  std::istringstream in(load("golden3.tags"));
  const auto s = fwm::read_stream(in);
  EXPECT_EQ(s.records, kGoldenRecords);
  EXPECT_EQ(s.header.channel_count, 2);
  EXPECT_EQ(s.header.tick_ps, 1u);
  EXPECT_EQ(s.header.acquisition_time_s, 1.5);

  std::istringstream gated(load("golden3_gated.tags"));
  const auto g = fwm::read_stream(gated);
  EXPECT_EQ(g.records, kGoldenRecords);
  EXPECT_EQ(g.header.gates, (std::vector<GateWindow>{{0, 2000}, {4000, 9000}}));
}

TEST(TimeTagRead, TruncatedRecordReportsOffset) {
  auto bytes = load("golden3.tags");
  bytes.pop_back();
  std::istringstream in(bytes);
  try {
    fwm::read_stream(in);
    FAIL() << "expected corruption error";
  } catch (const fwm::CorruptionError& e) {
    EXPECT_EQ(e.offset(), 64u);
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
  }
}

TEST(TimeTagRead, TruncationDetectedInStreamingMode) {
  auto recs = random_records(3 * fwm::TagStreamReader::kBufferRecords + 17, 5, 2);
  auto bytes = write_to_string(recs, StreamHeader{});
  bytes.resize(bytes.size() - 3);
  std::istringstream in(bytes);
  fwm::TagStreamReader reader(in);
  std::uint64_t n = 0;
  try {
    while (reader.next()) ++n;
    FAIL() << "expected corruption error";
  } catch (const fwm::CorruptionError& e) {
    EXPECT_EQ(n, recs.size() - 1);
    EXPECT_EQ(e.offset(), 48 + 8 * (recs.size() - 1));
  }
}

TEST(TimeTagRead, BadMagicAndVersion) {
  auto bytes = load("golden3.tags");
  auto bad = bytes;
  bad[0] = 'X';
  std::istringstream a(bad);
  EXPECT_THROW(fwm::read_stream(a), fwm::FormatError);
  auto v2 = bytes;
  v2[8] = 2;
  std::istringstream b(v2);
  EXPECT_THROW(fwm::read_stream(b), fwm::FormatError);
  std::istringstream c(std::string("FW"));
  EXPECT_THROW(fwm::read_stream(c), fwm::FormatError);
}

TEST(TimeTagWrite, RejectsInvalidRecords) {
  std::ostringstream sink;
  StreamHeader h;
  fwm::TagStreamWriter w(sink, h);
  w.write({0, 10});
  EXPECT_THROW(w.write({0, 9}), fwm::OrderingError);
  EXPECT_THROW(w.write({0, fwm::kMaxTimestamp + 1}), fwm::RangeError);
  EXPECT_THROW(w.write({2, 20}), fwm::RangeError);
  w.write({1, 10});
  EXPECT_EQ(w.finish(), 48u + 16u);
  h.tick_ps = 0;
  std::ostringstream other;
  EXPECT_THROW(fwm::TagStreamWriter(other, h), fwm::InvalidInput);
}

TEST(TimeTagRoundTrip, MillionRandomRecords) {
  const auto recs = random_records(1'000'000, 42, 200);
  StreamHeader h;
  h.channel_count = 200;
  h.tick_ps = 81;
  h.acquisition_time_s = 3.25;
  h.gates = {{0, 100}, {200, 1'000'000'000}};
  const auto bytes = write_to_string(recs, h);
  EXPECT_EQ(bytes.size(), 48 + 32 + 8 * recs.size());
  std::istringstream in(bytes);
  const auto s = fwm::read_stream(in);
  EXPECT_EQ(s.header, h);
  EXPECT_EQ(s.records, recs);
}

TEST(TimeTagRoundTrip, PropertyOverRandomShapes) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = rng() % 20'000;
    const auto recs = random_records(n, rng(), 3);
    StreamHeader h;
    h.channel_count = 3;
    const auto bytes = write_to_string(recs, h);
    std::istringstream in(bytes);
    EXPECT_EQ(fwm::read_stream(in).records, recs);
  }
}

TEST(TimeTagRead, StreamingEqualsBatch) {
  const auto recs = random_records(50'000, 7);
  StreamHeader h;
  h.channel_count = 4;
  const auto bytes = write_to_string(recs, h);

  std::istringstream a(bytes);
  fwm::TagStreamReader single(a);
  std::vector<TimeTagRecord> one_by_one;
  while (auto r = single.next()) one_by_one.push_back(*r);

  std::istringstream b(bytes);
  fwm::TagStreamReader chunked(b);
  std::vector<TimeTagRecord> chunks, buf(777);
  while (const auto n = chunked.read(buf)) chunks.insert(chunks.end(), buf.begin(), buf.begin() + n);

  std::istringstream c(bytes);
  const auto batch = fwm::read_stream(c).records;
  EXPECT_EQ(one_by_one, batch);
  EXPECT_EQ(chunks, batch);
  EXPECT_EQ(batch, recs);
  EXPECT_EQ(single.records_read(), recs.size());
}

TEST(TimeTagRead, RecordRange) {
  const auto recs = random_records(1000, 8);
  StreamHeader h;
  h.channel_count = 4;
  h.gates = {{1, 2}};
  std::istringstream in(write_to_string(recs, h));
  const auto part = fwm::read_record_range(in, 100, 250);
  ASSERT_EQ(part.size(), 250u);
  EXPECT_TRUE(std::equal(part.begin(), part.end(), recs.begin() + 100));
  const auto tail = fwm::read_record_range(in, 990, 50);
  EXPECT_EQ(tail.size(), 10u);
}

TEST(GateFilter, Basics) {
  const std::vector<TimeTagRecord> recs{{0, 5}, {0, 10}, {1, 15}, {0, 20}, {1, 25}};
  EXPECT_TRUE(fwm::gate_filter(recs, {}).empty());
  const std::vector<GateWindow> all{{0, 1000}};
  EXPECT_EQ(fwm::gate_filter(recs, all), recs);
  const std::vector<GateWindow> edges{{10, 20}};
  EXPECT_EQ(fwm::gate_filter(recs, edges), (std::vector<TimeTagRecord>{{0, 10}, {1, 15}}));
  const std::vector<GateWindow> bad{{10, 5}};
  EXPECT_THROW(fwm::gate_filter(recs, bad), fwm::InvalidInput);
  const std::vector<GateWindow> overlap{{0, 10}, {9, 12}};
  EXPECT_THROW(fwm::gate_filter(recs, overlap), fwm::InvalidInput);
}

TEST(GateFilter, MatchesBruteForceAndIsIdempotent) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    auto recs = random_records(2000, rng(), 2);
    if (trial % 4 == 0) std::shuffle(recs.begin(), recs.end(), rng);  // order must still be preserved
    std::vector<GateWindow> gates;
    std::uint64_t t = rng() % 20'000;
    const int ngates = static_cast<int>(rng() % 12);
    for (int i = 0; i < ngates; ++i) {
      const std::uint64_t len = 1 + rng() % 200'000;
      gates.push_back({t, t + len});
      t += len + rng() % 300'000;
    }
    const auto once = fwm::gate_filter(recs, gates);
    EXPECT_EQ(once, brute_gate(recs, gates));
    EXPECT_EQ(fwm::gate_filter(once, gates), once);
  }
}

TEST(TimeTagCsv, Export) {
  std::ostringstream out;
  fwm::write_records_csv(out, kGoldenRecords);
  EXPECT_EQ(out.str(), "channel,timestamp_ps\n0,1000\n1,5000\n1,72057594037927935\n");
}
