#pragma once

// Binary time-tag stream format.
//
// All multi-byte fields are little-endian. A file is a 48-byte header, an
// optional gate table, then fixed 8-byte records until end of file:
//
//   offset size  field
//   0      8     magic "FWMTAGS\x1a"
//   8      2     format version (currently 1)
//   10     2     channel count (records must use channel < count)
//   12     4     tick unit, picoseconds per timestamp tick (> 0)
//   16     8     acquisition (gated live) time T, IEEE-754 double, seconds
//   24     8     gate table offset in bytes (0 when there is no table)
//   32     8     gate count
//   40     8     payload offset in bytes (first record)
//
//   gate entry (16 bytes): u64 start, u64 end   (ticks, half-open [start, end))
//   record (8 bytes):      u8 channel, u56 timestamp (ticks)
//
// Records are non-decreasing in timestamp. The record count is implied by
// the file length; a trailing partial record is reported as corruption.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fwm {

inline constexpr std::uint64_t kMaxTimestamp = (std::uint64_t{1} << 56) - 1;

struct TimeTagRecord {
  std::uint8_t channel = 0;
  std::uint64_t timestamp = 0;  // ticks since stream epoch

  friend bool operator==(const TimeTagRecord&, const TimeTagRecord&) = default;
};

// Half-open acquisition window [start, end) in stream ticks (picoseconds at
// the default 1 ps tick).
struct GateWindow {
  std::uint64_t start = 0;
  std::uint64_t end = 0;

  std::uint64_t length() const { return end - start; }
  bool contains(std::uint64_t t) const { return start <= t && t < end; }
  friend bool operator==(const GateWindow&, const GateWindow&) = default;
};

// Throws InvalidInput unless every window is non-empty, sorted and disjoint.
void validate_gates(std::span<const GateWindow> gates);
std::uint64_t total_gate_length(std::span<const GateWindow> gates);

struct StreamHeader {
  std::uint16_t version = 1;
  std::uint16_t channel_count = 2;
  std::uint32_t tick_ps = 1;
  double acquisition_time_s = 0.0;
  std::vector<GateWindow> gates;

  friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct TagStream {
  StreamHeader header;
  std::vector<TimeTagRecord> records;
};

namespace timetag {

inline constexpr std::string_view kMagic{"FWMTAGS\x1a", 8};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 48;
inline constexpr std::size_t kGateSize = 16;
inline constexpr std::size_t kRecordSize = 8;

}  // namespace timetag

// Incremental writer. Ordering and range are checked per record.
class TagStreamWriter {
 public:
  TagStreamWriter(std::ostream& sink, const StreamHeader& header);
  TagStreamWriter(const TagStreamWriter&) = delete;
  TagStreamWriter& operator=(const TagStreamWriter&) = delete;
  ~TagStreamWriter();

  void write(const TimeTagRecord& record);
  void write(std::span<const TimeTagRecord> records);
  // Flushes buffered records; returns total bytes written including the header.
  std::uint64_t finish();

 private:
  void flush_buffer();

  std::ostream* sink_;
  std::uint16_t channel_count_;
  std::vector<char> buffer_;
  std::uint64_t bytes_ = 0;
  std::uint64_t last_timestamp_ = 0;
  std::uint64_t written_records_ = 0;
  bool finished_ = false;
};

std::uint64_t write_stream(std::span<const TimeTagRecord> records, const StreamHeader& header,
                           std::ostream& sink);

// Streaming reader with a fixed-size internal buffer; memory use does not
// grow with the stream length.
class TagStreamReader {
 public:
  static constexpr std::size_t kBufferRecords = 8192;

  explicit TagStreamReader(std::istream& source);

  const StreamHeader& header() const { return header_; }
  std::optional<TimeTagRecord> next();
  // Fills `out` from the front; returns the number of records stored (0 at end).
  std::size_t read(std::span<TimeTagRecord> out);
  std::uint64_t records_read() const { return records_read_; }
  std::uint64_t payload_offset() const { return payload_offset_; }

 private:
  bool refill();
  void throw_if_partial() const;

  std::istream* source_;
  StreamHeader header_;
  std::uint64_t payload_offset_ = 0;
  std::vector<unsigned char> buffer_;
  std::size_t buffer_pos_ = 0;
  std::size_t buffer_len_ = 0;
  std::uint64_t records_read_ = 0;
  bool eof_ = false;
};

// Batch read: materialises every record.
TagStream read_stream(std::istream& source);

// Reads `count` records starting at record index `first` by seeking; lets
// several readers split one file along record boundaries.
std::vector<TimeTagRecord> read_record_range(std::istream& source, std::uint64_t first,
                                             std::uint64_t count);

// Keeps records whose timestamp falls in some gate [start, end). Gates must be
// sorted and disjoint; record order is preserved.
std::vector<TimeTagRecord> gate_filter(std::span<const TimeTagRecord> records,
                                       std::span<const GateWindow> gates);

void write_records_csv(std::ostream& out, std::span<const TimeTagRecord> records);

}  // namespace fwm
