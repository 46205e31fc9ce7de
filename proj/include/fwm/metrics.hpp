#pragma once

// Derived source figures: bandwidth, spectral brightness, the Cauchy-Schwarz
// ratio, absorption bookkeeping, and the summary table emitted by `report`.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fwm::metrics {

// Delta nu = 1 / (2 pi tau_c); tau_c in ns, result in MHz.
double bandwidth_from_tau(double tau_c_ns);

// B = r_c / Delta nu = 2 pi tau_c r_c in coincidences per (MHz s).
double spectral_brightness(double coincidence_rate, double tau_c_ns);

struct BrightnessReport {
  double tau_c_ns = 0;
  double bandwidth_mhz = 0;
  double coincidence_rate = 0;  // 1/s
  double brightness = 0;        // 1/(MHz s)
};

BrightnessReport brightness_report(double coincidence_rate, double tau_c_ns);

struct CauchyReport {
  double g2_si_max = 0;
  double g2_ss0 = 0;
  double g2_ii0 = 0;
  double ratio = 0;  // g2_si_max^2 / (g2_ss0 g2_ii0)
  bool classical = true;
};

// Throws DomainError unless every input is positive.
CauchyReport cauchy_schwarz(double g2_si_max, double g2_ss0, double g2_ii0);

struct ODContext {
  double sigma0_cm2 = 2.907e-9;          // on-resonance cross section
  double area_cm2 = 0.008;               // probe mode area
  double intensity = 0.5;                // probe intensity, mW/cm^2
  double saturation_intensity = 1.669;   // mW/cm^2 (cycling transition)
  double gamma_mhz = 6.065;
  double detuning_mhz = 0.0;

  double s0() const { return intensity / saturation_intensity; }
  void validate() const;
};

// (s0 Gamma / 2) / (1 + s0 + (2 Delta / Gamma)^2), MHz.
double scattering_rate(const ODContext& ctx);
// Low-saturation form (s0 Gamma / 2) Gamma^2 / (Gamma^2 + 4 Delta^2).
double scattering_rate_low_saturation(const ODContext& ctx);

// N = OD A / sigma0.
double atom_number(double od, const ODContext& ctx);

// One column of the tau table.
struct TauEntry {
  double tau_d = 0, tau_d_err = 0;
  double tau_c = 0, tau_c_err = 0;
};

struct SummaryInputs {
  std::optional<TauEntry> cross, signal_auto, idler_auto;
  std::optional<double> g2_si_max, g2_ss0, g2_ii0;
  std::optional<double> coincidence_rate;  // r_c, 1/s
};

struct Summary {
  SummaryInputs inputs;
  std::optional<BrightnessReport> brightness;
  std::optional<CauchyReport> cauchy;
  std::vector<std::string> unavailable;  // quantities lacking inputs
};

Summary summarize(const SummaryInputs& inputs);

// "value ± err" with tau_D to two decimals and tau_c to one.
std::string format_tau_d(double value, double err);
std::string format_tau_c(double value, double err);

// Tau table (rows tau_D, tau_c; columns si, ss, ii; "-" for missing fits)
// followed by bandwidth, brightness and R, or "unavailable".
void write_summary_text(std::ostream& out, const Summary& summary);
// quantity,value,uncertainty rows; empty value for unavailable entries.
void write_summary_csv(std::ostream& out, const Summary& summary);

}  // namespace fwm::metrics
