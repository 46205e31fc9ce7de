#include "fwm/timetag_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

#include "fwm/errors.hpp"

namespace fwm {

namespace {

static_assert(std::endian::native == std::endian::little,
              "record packing below assumes a little-endian host");

template <typename T>
void put_le(char* dst, T value) {
  std::memcpy(dst, &value, sizeof(T));
}

template <typename T>
T get_le(const unsigned char* src) {
  T value;
  std::memcpy(&value, src, sizeof(T));
  return value;
}

void pack_record(char* dst, const TimeTagRecord& r) {
  const std::uint64_t word = static_cast<std::uint64_t>(r.channel) | (r.timestamp << 8);
  put_le(dst, word);
}

TimeTagRecord unpack_record(const unsigned char* src) {
  const auto word = get_le<std::uint64_t>(src);
  return {static_cast<std::uint8_t>(word & 0xff), word >> 8};
}

void check_write(std::ostream& out) {
  if (!out) throw IoError("write to time-tag sink failed");
}

}  // namespace

void validate_gates(std::span<const GateWindow> gates) {
  for (std::size_t i = 0; i < gates.size(); ++i) {
    if (gates[i].start >= gates[i].end) throw InvalidInput("gate window with start >= end");
    if (i > 0 && gates[i].start < gates[i - 1].end) {
      throw InvalidInput("gate windows must be sorted and disjoint");
    }
  }
}

std::uint64_t total_gate_length(std::span<const GateWindow> gates) {
  std::uint64_t total = 0;
  for (const auto& g : gates) total += g.length();
  return total;
}

TagStreamWriter::TagStreamWriter(std::ostream& sink, const StreamHeader& header)
    : sink_(&sink), channel_count_(header.channel_count) {
  if (header.tick_ps == 0) throw InvalidInput("tick unit must be positive");
  if (header.version < 1) throw InvalidInput("format version must be >= 1");
  validate_gates(header.gates);

  const std::uint64_t gate_offset = header.gates.empty() ? 0 : timetag::kHeaderSize;
  const std::uint64_t payload_offset =
      timetag::kHeaderSize + timetag::kGateSize * header.gates.size();

  std::vector<char> head(payload_offset, 0);
  std::memcpy(head.data(), timetag::kMagic.data(), timetag::kMagic.size());
  put_le(head.data() + 8, header.version);
  put_le(head.data() + 10, header.channel_count);
  put_le(head.data() + 12, header.tick_ps);
  put_le(head.data() + 16, header.acquisition_time_s);
  put_le(head.data() + 24, gate_offset);
  put_le(head.data() + 32, static_cast<std::uint64_t>(header.gates.size()));
  put_le(head.data() + 40, payload_offset);
  for (std::size_t i = 0; i < header.gates.size(); ++i) {
    char* entry = head.data() + timetag::kHeaderSize + i * timetag::kGateSize;
    put_le(entry, header.gates[i].start);
    put_le(entry + 8, header.gates[i].end);
  }
  sink_->write(head.data(), static_cast<std::streamsize>(head.size()));
  check_write(*sink_);
  bytes_ = head.size();
  buffer_.reserve(64 * 1024);
}

TagStreamWriter::~TagStreamWriter() {
  if (!finished_) {
    try {
      finish();
    } catch (...) {
    }
  }
}

void TagStreamWriter::write(const TimeTagRecord& record) {
  if (record.timestamp > kMaxTimestamp) {
    throw RangeError("timestamp " + std::to_string(record.timestamp) + " exceeds 56 bits");
  }
  if (written_records_ > 0 && record.timestamp < last_timestamp_) {
    throw OrderingError("record " + std::to_string(written_records_) +
                        " has a timestamp earlier than its predecessor");
  }
  if (record.channel >= channel_count_) {
    throw RangeError("channel " + std::to_string(record.channel) + " outside declared channel set");
  }
  const std::size_t at = buffer_.size();
  buffer_.resize(at + timetag::kRecordSize);
  pack_record(buffer_.data() + at, record);
  last_timestamp_ = record.timestamp;
  ++written_records_;
  if (buffer_.size() >= 64 * 1024) flush_buffer();
}

void TagStreamWriter::write(std::span<const TimeTagRecord> records) {
  for (const auto& r : records) write(r);
}

void TagStreamWriter::flush_buffer() {
  if (buffer_.empty()) return;
  sink_->write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  check_write(*sink_);
  bytes_ += buffer_.size();
  buffer_.clear();
}

std::uint64_t TagStreamWriter::finish() {
  if (!finished_) {
    flush_buffer();
    sink_->flush();
    check_write(*sink_);
    finished_ = true;
  }
  return bytes_;
}

std::uint64_t write_stream(std::span<const TimeTagRecord> records, const StreamHeader& header,
                           std::ostream& sink) {
  TagStreamWriter writer(sink, header);
  writer.write(records);
  return writer.finish();
}

TagStreamReader::TagStreamReader(std::istream& source) : source_(&source) {
  unsigned char head[timetag::kHeaderSize];
  source_->read(reinterpret_cast<char*>(head), sizeof head);
  if (source_->gcount() != static_cast<std::streamsize>(sizeof head)) {
    if (source_->gcount() >= static_cast<std::streamsize>(timetag::kMagic.size()) &&
        std::memcmp(head, timetag::kMagic.data(), timetag::kMagic.size()) == 0) {
      throw CorruptionError(static_cast<std::uint64_t>(source_->gcount()), "truncated header");
    }
    throw FormatError("not a time-tag stream (short or missing header)");
  }
  if (std::memcmp(head, timetag::kMagic.data(), timetag::kMagic.size()) != 0) {
    throw FormatError("bad magic: not a time-tag stream");
  }
  header_.version = get_le<std::uint16_t>(head + 8);
  if (header_.version < 1 || header_.version > timetag::kVersion) {
    throw FormatError("unsupported format version " + std::to_string(header_.version));
  }
  header_.channel_count = get_le<std::uint16_t>(head + 10);
  header_.tick_ps = get_le<std::uint32_t>(head + 12);
  if (header_.tick_ps == 0) throw FormatError("tick unit must be positive");
  header_.acquisition_time_s = get_le<double>(head + 16);
  const auto gate_offset = get_le<std::uint64_t>(head + 24);
  const auto gate_count = get_le<std::uint64_t>(head + 32);
  payload_offset_ = get_le<std::uint64_t>(head + 40);

  std::uint64_t position = timetag::kHeaderSize;
  if (gate_count > 0) {
    if (gate_offset != timetag::kHeaderSize ||
        payload_offset_ < gate_offset + gate_count * timetag::kGateSize) {
      throw CorruptionError(24, "inconsistent gate table layout");
    }
    header_.gates.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(gate_count, 1u << 20)));
    unsigned char entry[timetag::kGateSize];
    for (std::uint64_t i = 0; i < gate_count; ++i) {
      source_->read(reinterpret_cast<char*>(entry), sizeof entry);
      if (source_->gcount() != static_cast<std::streamsize>(sizeof entry)) {
        throw CorruptionError(position + static_cast<std::uint64_t>(source_->gcount()),
                              "truncated gate table");
      }
      header_.gates.push_back({get_le<std::uint64_t>(entry), get_le<std::uint64_t>(entry + 8)});
      position += timetag::kGateSize;
    }
  }
  if (payload_offset_ < position) throw CorruptionError(40, "payload offset inside header");
  if (payload_offset_ > position) {
    source_->ignore(static_cast<std::streamsize>(payload_offset_ - position));
    if (static_cast<std::uint64_t>(source_->gcount()) != payload_offset_ - position) {
      throw CorruptionError(position, "truncated header padding");
    }
  }
  buffer_.resize(kBufferRecords * timetag::kRecordSize);
}

bool TagStreamReader::refill() {
  if (eof_) {
    throw_if_partial();
    return false;
  }
  // Move a partial trailing record (if any) to the front before reading more.
  const std::size_t leftover = buffer_len_ - buffer_pos_;
  if (leftover > 0) std::memmove(buffer_.data(), buffer_.data() + buffer_pos_, leftover);
  buffer_pos_ = 0;
  buffer_len_ = leftover;
  while (buffer_len_ < buffer_.size()) {
    source_->read(reinterpret_cast<char*>(buffer_.data() + buffer_len_),
                  static_cast<std::streamsize>(buffer_.size() - buffer_len_));
    const auto got = static_cast<std::size_t>(source_->gcount());
    buffer_len_ += got;
    if (got == 0 || !*source_) {
      if (source_->bad()) throw IoError("read from time-tag source failed");
      eof_ = true;
      break;
    }
  }
  if (buffer_len_ < timetag::kRecordSize) throw_if_partial();
  return buffer_len_ >= timetag::kRecordSize;
}

// Complete records ahead of a truncated tail are still delivered; the error is
// raised once only the partial record remains.
void TagStreamReader::throw_if_partial() const {
  const std::size_t remaining = buffer_len_ - buffer_pos_;
  if (remaining == 0) return;
  throw CorruptionError(payload_offset_ + records_read_ * timetag::kRecordSize,
                        "truncated record (" + std::to_string(remaining) + " of 8 bytes)");
}

std::optional<TimeTagRecord> TagStreamReader::next() {
  if (buffer_len_ - buffer_pos_ < timetag::kRecordSize && !refill()) return std::nullopt;
  const TimeTagRecord r = unpack_record(buffer_.data() + buffer_pos_);
  buffer_pos_ += timetag::kRecordSize;
  ++records_read_;
  return r;
}

std::size_t TagStreamReader::read(std::span<TimeTagRecord> out) {
  std::size_t n = 0;
  while (n < out.size()) {
    if (buffer_len_ - buffer_pos_ < timetag::kRecordSize && !refill()) break;
    const std::size_t available = (buffer_len_ - buffer_pos_) / timetag::kRecordSize;
    const std::size_t take = std::min(available, out.size() - n);
    const unsigned char* src = buffer_.data() + buffer_pos_;
    for (std::size_t i = 0; i < take; ++i) out[n + i] = unpack_record(src + i * timetag::kRecordSize);
    buffer_pos_ += take * timetag::kRecordSize;
    records_read_ += take;
    n += take;
  }
  return n;
}

TagStream read_stream(std::istream& source) {
  TagStreamReader reader(source);
  TagStream stream;
  stream.header = reader.header();
  std::vector<TimeTagRecord> chunk(TagStreamReader::kBufferRecords);
  while (const std::size_t n = reader.read(chunk)) {
    stream.records.insert(stream.records.end(), chunk.begin(),
                          chunk.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return stream;
}

std::vector<TimeTagRecord> read_record_range(std::istream& source, std::uint64_t first,
                                             std::uint64_t count) {
  source.clear();
  source.seekg(0);
  TagStreamReader probe(source);
  const std::uint64_t payload = probe.payload_offset();
  source.clear();
  source.seekg(static_cast<std::streamoff>(payload + first * timetag::kRecordSize));
  if (!source) throw IoError("seek past end of time-tag stream");
  std::vector<TimeTagRecord> out;
  out.reserve(static_cast<std::size_t>(count));
  unsigned char rec[timetag::kRecordSize];
  for (std::uint64_t i = 0; i < count; ++i) {
    source.read(reinterpret_cast<char*>(rec), sizeof rec);
    const auto got = static_cast<std::size_t>(source.gcount());
    if (got == 0) break;
    if (got != sizeof rec) {
      throw CorruptionError(payload + (first + i) * timetag::kRecordSize, "truncated record");
    }
    out.push_back(unpack_record(rec));
  }
  return out;
}

std::vector<TimeTagRecord> gate_filter(std::span<const TimeTagRecord> records,
                                       std::span<const GateWindow> gates) {
  validate_gates(gates);
  std::vector<TimeTagRecord> out;
  const std::size_t n = gates.size();
  std::size_t g = 0;  // first gate whose end lies beyond the last timestamp seen
  for (const auto& r : records) {
    const std::uint64_t t = r.timestamp;
    if (g < n && t >= gates[g].end) {
      while (g < n && t >= gates[g].end) ++g;
    } else if (g > 0 && t < gates[g - 1].end) {
      // Out-of-order record: relocate the cursor.
      g = static_cast<std::size_t>(
          std::upper_bound(gates.begin(), gates.end(), t,
                           [](std::uint64_t v, const GateWindow& w) { return v < w.end; }) -
          gates.begin());
    }
    if (g < n && gates[g].start <= t) out.push_back(r);
  }
  return out;
}

void write_records_csv(std::ostream& out, std::span<const TimeTagRecord> records) {
  out << "channel,timestamp_ps\n";
  for (const auto& r : records) out << static_cast<unsigned>(r.channel) << ',' << r.timestamp << '\n';
}

}  // namespace fwm
