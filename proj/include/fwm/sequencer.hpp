#pragma once

// Duty-cycle compiler for a stream-mode DAQ card: one RAM word is sent per
// 20 us slot, so a program step needing several words takes several slots.
//
// Word layouts per program step (words_per_slot):
//   1  digital 0-15
//   2  digital 0-15, digital 16-22
//   4  digital 0-15, digital 16-22, analog low 16 bits, analog high 16 bits
// A step lasts words_per_slot * slot_duration (the effective slot).

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fwm/timetag_io.hpp"

namespace fwm::seq {

struct HardwareProfile {
  std::int64_t slot_duration_us = 20;
  std::int64_t ram_words = 16'384;
  int words_per_slot = 1;
  int digital_channels = 23;
  int analog_channels = 2;
  double analog_full_scale_v = 3.3;
  double host_latency_ms = 300.0;  // reported between uploads, not simulated

  std::int64_t effective_slot_us() const { return slot_duration_us * words_per_slot; }
  // Digital channels reachable with the configured layout.
  int addressable_digital() const;
  void validate() const;
};

struct AnalogLevels {
  int channel = 0;
  double load_v = 0.0;
  double fwm_v = 0.0;
};

// Load phase: cooling on. FWM phase: cooling off, pump p1 and the gate on.
struct DutyCycleSpec {
  std::int64_t load_us = 500;
  std::int64_t fwm_us = 200;
  std::int64_t cycles = 1;
  int cooling_channel = 0;
  int pump_channel = 1;
  int gate_channel = 2;
  std::vector<int> always_on{3, 4, 5};  // re-pump, p2, coils
  std::optional<AnalogLevels> analog;

  void validate() const;
};

struct Slot {
  std::uint32_t digital = 0;  // bit n drives digital channel n
  std::optional<std::uint32_t> analog;

  friend bool operator==(const Slot&, const Slot&) = default;
};

struct SequenceProgram {
  std::int64_t slot_duration_us = 20;
  int words_per_slot = 1;
  std::vector<Slot> cycle;  // one duty cycle
  std::int64_t repeats = 1;
  // True when only one cycle is stored and the card loops it.
  bool hardware_looped = false;
  std::optional<int> analog_channel;
  std::int64_t load_us = 0, fwm_us = 0;  // after rounding up
  std::int64_t word_count = 0;           // words stored in RAM
  std::int64_t duration_us = 0;          // whole program, all repeats
  std::vector<std::string> notes;        // rounding and looping remarks

  std::int64_t effective_slot_us() const { return slot_duration_us * words_per_slot; }
  std::int64_t total_slots() const { return static_cast<std::int64_t>(cycle.size()) * repeats; }
};

// round(V / (full_scale / 2^32)); RangeError outside [0, full_scale].
std::uint32_t encode_analog(double volts, double full_scale_v = 3.3);
double decode_analog(std::uint32_t code, double full_scale_v = 3.3);

// Throws BudgetError when one cycle exceeds the RAM, ConfigError for bad
// channel assignments.
SequenceProgram compile(const DutyCycleSpec& spec, const HardwareProfile& profile);

// Half-open windows (ps from program start) where the channel is high.
std::vector<GateWindow> emit_gates(const SequenceProgram& program, int gate_channel);

struct Diagnostic {
  std::string code;  // "budget", "alignment", "channel", "layout"
  std::string message;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

std::vector<Diagnostic> validate(const SequenceProgram& program, const HardwareProfile& profile);

// slot,time_us,digital_hex,analog_words for the RAM contents.
void write_program_csv(std::ostream& out, const SequenceProgram& program);

}  // namespace fwm::seq
