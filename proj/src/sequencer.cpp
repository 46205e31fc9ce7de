#include "fwm/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "fwm/errors.hpp"

namespace fwm::seq {

namespace {

constexpr double kTwo32 = 4294967296.0;

std::int64_t round_up(std::int64_t value, std::int64_t step) { return (value + step - 1) / step * step; }

std::int64_t program_words(const SequenceProgram& p) {
  const auto cycle_words = static_cast<std::int64_t>(p.cycle.size()) * p.words_per_slot;
  return p.hardware_looped ? cycle_words : cycle_words * p.repeats;
}

}  // namespace

int HardwareProfile::addressable_digital() const {
  return words_per_slot == 1 ? std::min(16, digital_channels) : digital_channels;
}

void HardwareProfile::validate() const {
  if (slot_duration_us <= 0) throw ConfigError("hardware.slot_duration_us", "must be positive");
  if (ram_words <= 0) throw ConfigError("hardware.ram_words", "must be positive");
  if (words_per_slot != 1 && words_per_slot != 2 && words_per_slot != 4) {
    throw ConfigError("hardware.words_per_slot", "must be 1, 2 or 4");
  }
  if (digital_channels <= 0 || digital_channels > 32) {
    throw ConfigError("hardware.digital_channels", "must be in 1..32");
  }
  if (analog_channels < 0) throw ConfigError("hardware.analog_channels", "must be non-negative");
  if (!(analog_full_scale_v > 0.0)) throw ConfigError("hardware.analog_full_scale_v", "must be positive");
}

void DutyCycleSpec::validate() const {
  if (load_us <= 0) throw ConfigError("duty_cycle.load_us", "must be positive");
  if (fwm_us <= 0) throw ConfigError("duty_cycle.fwm_us", "must be positive");
  if (cycles < 0) throw ConfigError("duty_cycle.cycles", "must be non-negative");
}

std::uint32_t encode_analog(double volts, double full_scale_v) {
  if (!(volts >= 0.0 && volts <= full_scale_v)) {
    throw RangeError("analog level " + std::to_string(volts) + " V outside [0, full scale]");
  }
  const double code = std::round(volts / (full_scale_v / kTwo32));
  return code >= kTwo32 ? 0xFFFFFFFFu : static_cast<std::uint32_t>(code);
}

double decode_analog(std::uint32_t code, double full_scale_v) {
  return static_cast<double>(code) * (full_scale_v / kTwo32);
}

SequenceProgram compile(const DutyCycleSpec& spec, const HardwareProfile& profile) {
  profile.validate();
  spec.validate();
  const int n_digital = profile.addressable_digital();
  auto check_channel = [&](int ch, const std::string& field) {
    if (ch < 0 || ch >= n_digital) {
      throw ConfigError(field, "digital channel " + std::to_string(ch) + " not addressable with " +
                                   std::to_string(profile.words_per_slot) + " word(s) per slot (limit " +
                                   std::to_string(n_digital) + ")");
    }
  };
  check_channel(spec.cooling_channel, "duty_cycle.cooling_channel");
  check_channel(spec.pump_channel, "duty_cycle.pump_channel");
  check_channel(spec.gate_channel, "duty_cycle.gate_channel");
  for (std::size_t i = 0; i < spec.always_on.size(); ++i) {
    check_channel(spec.always_on[i], "duty_cycle.always_on[" + std::to_string(i) + "]");
  }

  SequenceProgram prog;
  prog.slot_duration_us = profile.slot_duration_us;
  prog.words_per_slot = profile.words_per_slot;

  std::optional<std::uint32_t> load_code, fwm_code;
  if (spec.analog) {
    if (profile.words_per_slot != 4) {
      throw ConfigError("duty_cycle.analog", "analog output needs 4 words per slot");
    }
    if (spec.analog->channel < 0 || spec.analog->channel >= profile.analog_channels) {
      throw ConfigError("duty_cycle.analog.channel", "analog channel out of range");
    }
    prog.analog_channel = spec.analog->channel;
    load_code = encode_analog(spec.analog->load_v, profile.analog_full_scale_v);
    fwm_code = encode_analog(spec.analog->fwm_v, profile.analog_full_scale_v);
  }

  const std::int64_t eff = profile.effective_slot_us();
  prog.load_us = round_up(spec.load_us, eff);
  prog.fwm_us = round_up(spec.fwm_us, eff);
  if (prog.load_us != spec.load_us) {
    prog.notes.push_back("load rounded up from " + std::to_string(spec.load_us) + " to " +
                         std::to_string(prog.load_us) + " us");
  }
  if (prog.fwm_us != spec.fwm_us) {
    prog.notes.push_back("fwm rounded up from " + std::to_string(spec.fwm_us) + " to " +
                         std::to_string(prog.fwm_us) + " us");
  }

  std::uint32_t base = 0;
  for (int ch : spec.always_on) base |= 1u << ch;
  const Slot load{base | (1u << spec.cooling_channel), load_code};
  const Slot fwm{base | (1u << spec.pump_channel) | (1u << spec.gate_channel), fwm_code};
  prog.cycle.assign(static_cast<std::size_t>(prog.load_us / eff), load);
  prog.cycle.insert(prog.cycle.end(), static_cast<std::size_t>(prog.fwm_us / eff), fwm);
  prog.repeats = spec.cycles;

  const auto cycle_words = static_cast<std::int64_t>(prog.cycle.size()) * profile.words_per_slot;
  if (cycle_words > profile.ram_words) {
    throw BudgetError(cycle_words - profile.ram_words,
                      "one cycle needs " + std::to_string(cycle_words) + " words; RAM holds " +
                          std::to_string(profile.ram_words) + " (over by " +
                          std::to_string(cycle_words - profile.ram_words) + ")");
  }
  if (spec.cycles > 1 && cycle_words * spec.cycles > profile.ram_words) {
    prog.hardware_looped = true;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "%lld cycles exceed the RAM; one cycle stored and looped (host upload gap %.0f ms)",
                  static_cast<long long>(spec.cycles), profile.host_latency_ms);
    prog.notes.emplace_back(buf);
  }
  prog.word_count = program_words(prog);
  prog.duration_us = prog.total_slots() * eff;
  return prog;
}

std::vector<GateWindow> emit_gates(const SequenceProgram& program, int gate_channel) {
  std::vector<GateWindow> out;
  if (gate_channel < 0 || gate_channel >= 32) return out;
  const std::uint32_t mask = 1u << gate_channel;
  const auto eff_ps = static_cast<std::uint64_t>(program.effective_slot_us()) * 1'000'000u;
  const std::size_t n = program.cycle.size();
  // Spans within one cycle, then replicated per repeat and merged at the seams.
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < n;) {
    if ((program.cycle[i].digital & mask) == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && (program.cycle[j].digital & mask) != 0) ++j;
    spans.emplace_back(i, j);
    i = j;
  }
  if (spans.empty()) return out;
  const std::uint64_t cycle_ps = eff_ps * n;
  for (std::int64_t r = 0; r < program.repeats; ++r) {
    const std::uint64_t offset = static_cast<std::uint64_t>(r) * cycle_ps;
    for (const auto& [a, b] : spans) {
      const GateWindow w{offset + a * eff_ps, offset + b * eff_ps};
      if (!out.empty() && out.back().end == w.start) {
        out.back().end = w.end;
      } else {
        out.push_back(w);
      }
    }
  }
  return out;
}

std::vector<Diagnostic> validate(const SequenceProgram& p, const HardwareProfile& profile) {
  std::vector<Diagnostic> d;
  if (p.words_per_slot != profile.words_per_slot || p.slot_duration_us != profile.slot_duration_us) {
    d.push_back({"layout", "program slot layout differs from the hardware profile"});
  }
  const std::int64_t words = program_words(p);
  if (words != p.word_count) {
    d.push_back({"budget", "recorded word count " + std::to_string(p.word_count) + " but slots need " +
                               std::to_string(words)});
  }
  const std::int64_t stored = std::max(words, p.word_count);
  if (stored > profile.ram_words) {
    d.push_back({"budget", std::to_string(stored) + " words exceed the " + std::to_string(profile.ram_words) +
                               "-word RAM by " + std::to_string(stored - profile.ram_words)});
  }
  const std::int64_t eff = p.effective_slot_us();
  if (eff <= 0 || p.duration_us != p.total_slots() * eff) {
    d.push_back({"alignment", "duration " + std::to_string(p.duration_us) + " us is not the slot count times " +
                                  std::to_string(eff) + " us"});
  }
  if (eff > 0 && (p.load_us % eff != 0 || p.fwm_us % eff != 0)) {
    d.push_back({"alignment", "phase durations are not multiples of the effective slot"});
  }
  const int n_digital = profile.addressable_digital();
  const std::uint32_t allowed = n_digital >= 32 ? 0xFFFFFFFFu : ((1u << n_digital) - 1u);
  for (std::size_t i = 0; i < p.cycle.size(); ++i) {
    if ((p.cycle[i].digital & ~allowed) != 0) {
      d.push_back({"channel", "slot " + std::to_string(i) + " drives a channel beyond " +
                                  std::to_string(n_digital - 1)});
      break;
    }
    if (p.cycle[i].analog.has_value() && p.words_per_slot != 4) {
      d.push_back({"layout", "slot " + std::to_string(i) + " carries an analog word without room for it"});
      break;
    }
  }
  if (p.analog_channel && (*p.analog_channel < 0 || *p.analog_channel >= profile.analog_channels)) {
    d.push_back({"channel", "analog channel out of range"});
  }
  return d;
}

void write_program_csv(std::ostream& out, const SequenceProgram& p) {
  out << "slot,time_us,digital_hex,analog_words\n";
  const std::int64_t reps = p.hardware_looped ? 1 : p.repeats;
  const std::int64_t eff = p.effective_slot_us();
  std::int64_t k = 0;
  char buf[96];
  for (std::int64_t r = 0; r < reps; ++r) {
    for (const Slot& s : p.cycle) {
      std::snprintf(buf, sizeof buf, "%lld,%lld,0x%06X,", static_cast<long long>(k),
                    static_cast<long long>(k * eff), static_cast<unsigned>(s.digital));
      out << buf;
      if (s.analog) {
        std::snprintf(buf, sizeof buf, "0x%04X 0x%04X", static_cast<unsigned>(*s.analog & 0xFFFFu),
                      static_cast<unsigned>(*s.analog >> 16));
        out << buf;
      }
      out << '\n';
      ++k;
    }
  }
}

}  // namespace fwm::seq
