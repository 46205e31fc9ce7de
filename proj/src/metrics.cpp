#include "fwm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>

#include "fwm/errors.hpp"
#include "fwm/format.hpp"

namespace fwm::metrics {

double bandwidth_from_tau(double tau_c_ns) {
  if (!(tau_c_ns > 0.0)) throw DomainError("tau_c must be positive");
  // 1 / ns = 1e3 MHz
  return 1e3 / (2.0 * std::numbers::pi * tau_c_ns);
}

double spectral_brightness(double coincidence_rate, double tau_c_ns) {
  if (!(coincidence_rate >= 0.0)) throw DomainError("coincidence rate must be non-negative");
  if (!(tau_c_ns > 0.0)) throw DomainError("tau_c must be positive");
  return 2.0 * std::numbers::pi * tau_c_ns * 1e-3 * coincidence_rate;
}

BrightnessReport brightness_report(double coincidence_rate, double tau_c_ns) {
  return {tau_c_ns, bandwidth_from_tau(tau_c_ns), coincidence_rate,
          spectral_brightness(coincidence_rate, tau_c_ns)};
}

CauchyReport cauchy_schwarz(double g2_si_max, double g2_ss0, double g2_ii0) {
  if (!(g2_ss0 > 0.0) || !(g2_ii0 > 0.0)) throw DomainError("auto-correlation values must be positive");
  if (!(g2_si_max > 0.0)) throw DomainError("cross-correlation peak must be positive");
  CauchyReport r{g2_si_max, g2_ss0, g2_ii0, 0.0, true};
  r.ratio = g2_si_max * g2_si_max / (g2_ss0 * g2_ii0);
  r.classical = r.ratio <= 1.0;
  return r;
}

void ODContext::validate() const {
  if (!(sigma0_cm2 > 0.0)) throw InvalidInput("sigma0 must be positive");
  if (!(area_cm2 > 0.0)) throw InvalidInput("beam area must be positive");
  if (!(saturation_intensity > 0.0)) throw InvalidInput("saturation intensity must be positive");
  if (!(intensity >= 0.0)) throw InvalidInput("intensity must be non-negative");
  if (!(gamma_mhz > 0.0)) throw InvalidInput("linewidth must be positive");
  if (!std::isfinite(detuning_mhz)) throw InvalidInput("detuning must be finite");
}

double scattering_rate(const ODContext& ctx) {
  ctx.validate();
  const double s0 = ctx.s0();
  const double d = 2.0 * ctx.detuning_mhz / ctx.gamma_mhz;
  return 0.5 * s0 * ctx.gamma_mhz / (1.0 + s0 + d * d);
}

double scattering_rate_low_saturation(const ODContext& ctx) {
  ctx.validate();
  const double g2 = ctx.gamma_mhz * ctx.gamma_mhz;
  return 0.5 * ctx.s0() * ctx.gamma_mhz * g2 / (g2 + 4.0 * ctx.detuning_mhz * ctx.detuning_mhz);
}

double atom_number(double od, const ODContext& ctx) {
  if (!(od >= 0.0)) throw DomainError("OD must be non-negative");
  ctx.validate();
  return od * ctx.area_cm2 / ctx.sigma0_cm2;
}

Summary summarize(const SummaryInputs& in) {
  Summary s;
  s.inputs = in;
  if (in.cross && in.coincidence_rate) {
    s.brightness = brightness_report(*in.coincidence_rate, in.cross->tau_c);
  } else {
    s.unavailable.push_back(in.cross ? "brightness (no coincidence rate)" : "bandwidth and brightness (no cross fit)");
  }
  if (in.g2_si_max && in.g2_ss0 && in.g2_ii0) {
    s.cauchy = cauchy_schwarz(*in.g2_si_max, *in.g2_ss0, *in.g2_ii0);
  } else {
    s.unavailable.push_back("cauchy_schwarz (missing g2 inputs)");
  }
  return s;
}

std::string format_tau_d(double value, double err) {
  return format_fixed(value, 2) + " ± " + format_fixed(err, 2);
}

std::string format_tau_c(double value, double err) {
  return format_fixed(value, 1) + " ± " + format_fixed(err, 1);
}

namespace {

template <class F>
std::string cell(const std::optional<TauEntry>& e, F fmt) {
  return e ? fmt(*e) : std::string("-");
}

}  // namespace

void write_summary_text(std::ostream& out, const Summary& s) {
  const auto& in = s.inputs;
  auto d = [](const TauEntry& e) { return format_tau_d(e.tau_d, e.tau_d_err); };
  auto c = [](const TauEntry& e) { return format_tau_c(e.tau_c, e.tau_c_err); };
  out << "quantity\tg2_si\tg2_ss\tg2_ii\n";
  out << "tau_D (ns)\t" << cell(in.cross, d) << '\t' << cell(in.signal_auto, d) << '\t' << cell(in.idler_auto, d)
      << '\n';
  out << "tau_c (ns)\t" << cell(in.cross, c) << '\t' << cell(in.signal_auto, c) << '\t' << cell(in.idler_auto, c)
      << '\n';
  if (s.brightness) {
    out << "bandwidth (MHz)\t" << format_fixed(s.brightness->bandwidth_mhz, 2) << '\n';
    out << "coincidence rate (1/s)\t" << format_double(s.brightness->coincidence_rate) << '\n';
    out << "brightness (1/(MHz s))\t" << format_fixed(s.brightness->brightness, 1) << '\n';
  } else if (in.cross) {
    out << "bandwidth (MHz)\t" << format_fixed(bandwidth_from_tau(in.cross->tau_c), 2) << '\n';
    out << "brightness (1/(MHz s))\tunavailable\n";
  } else {
    out << "bandwidth (MHz)\tunavailable\nbrightness (1/(MHz s))\tunavailable\n";
  }
  if (s.cauchy) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", s.cauchy->ratio);
    out << "cauchy_schwarz R\t" << buf << (s.cauchy->classical ? "\tclassical" : "\tnon-classical") << '\n';
  } else {
    out << "cauchy_schwarz R\tunavailable\n";
  }
}

void write_summary_csv(std::ostream& out, const Summary& s) {
  const auto& in = s.inputs;
  out << "quantity,value,uncertainty\n";
  auto tau_rows = [&](const char* label, const std::optional<TauEntry>& e) {
    out << "tau_d_" << label << ',';
    if (e) out << format_double(e->tau_d) << ',' << format_double(e->tau_d_err);
    else out << ',';
    out << "\ntau_c_" << label << ',';
    if (e) out << format_double(e->tau_c) << ',' << format_double(e->tau_c_err);
    else out << ',';
    out << '\n';
  };
  tau_rows("si", in.cross);
  tau_rows("ss", in.signal_auto);
  tau_rows("ii", in.idler_auto);
  auto row = [&](const char* name, std::optional<double> v) {
    out << name << ',' << (v ? format_double(*v) : std::string()) << ",\n";
  };
  row("bandwidth_mhz", in.cross ? std::optional<double>(bandwidth_from_tau(in.cross->tau_c)) : std::nullopt);
  row("brightness_per_mhz_s", s.brightness ? std::optional<double>(s.brightness->brightness) : std::nullopt);
  row("cauchy_schwarz_r", s.cauchy ? std::optional<double>(s.cauchy->ratio) : std::nullopt);
  out << "non_classical," << (s.cauchy ? (s.cauchy->classical ? "false" : "true") : "") << ",\n";
}

}  // namespace fwm::metrics
