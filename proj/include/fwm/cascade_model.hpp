#pragma once

// Diamond-scheme cascade: phase-matching bookkeeping, the three-level
// amplitude equations with their closed-form limits, and the heralded
// biphoton envelope.
//
// Unit conventions used throughout this header:
//   decay rates and mode detunings  -> MHz, read as inverse microseconds
//                                      (detunings are angular, rad/us)
//   times                           -> ns
//   transition frequencies          -> rad/s
//   wavevectors                     -> rad/m

#include <array>
#include <complex>
#include <iosfwd>
#include <vector>

namespace fwm::cascade {

using Complex = std::complex<double>;
using Vec3 = std::array<double, 3>;

inline constexpr double kSpeedOfLight = 299'792'458.0;  // m/s

struct AtomicCascade {
  double gamma_alpha = 0.6;   // |alpha> decay rate, MHz
  double gamma_beta = 36.0;   // |beta> decay rate, MHz
  double omega_ab = 0.0;      // |alpha> -> |beta>, rad/s
  double omega_bg = 0.0;      // |beta> -> |gamma>, rad/s
  double detuning_big = -70.0;   // pump-1 detuning, MHz
  double detuning_small = -3.0;  // two-photon detuning, MHz

  // 87Rb 5D3/2 -> 5P1/2 -> 5S1/2 with the nominal 762/795 nm transitions.
  static AtomicCascade rubidium_default();
  void validate() const;
};

struct PhaseMatchSpec {
  Vec3 k_p1{}, k_p2{}, k_s{}, k_i{};
  double omega_p1 = 0, omega_p2 = 0, omega_s = 0, omega_i = 0;

  // All four fields along +z with |k| = 2*pi/lambda and omega = c|k|.
  static PhaseMatchSpec colinear(double lambda_p1_m, double lambda_p2_m, double lambda_s_m,
                                 double lambda_i_m);
};

struct PhaseMatchReport {
  Vec3 momentum_residual{};     // k_p1 + k_p2 - k_s - k_i
  double energy_residual = 0;   // omega_p1 + omega_p2 - omega_s - omega_i
  double momentum_relative = 0; // |momentum_residual| / |k_p1 + k_p2|
  double energy_relative = 0;   // |energy_residual| / (omega_p1 + omega_p2)
  bool pass = false;
};

PhaseMatchReport check_phase_matching(const PhaseMatchSpec& spec, double rel_tol);

// True when every field satisfies |k| = omega / c to within rel_tol.
bool dispersion_consistent(const PhaseMatchSpec& spec, double rel_tol);

// Truncated set of vacuum modes the cascade may emit into.
struct ModeGrid {
  std::vector<double> signal_detunings;  // omega_k - omega_ab, rad/us
  std::vector<double> idler_detunings;   // omega_q - omega_bg, rad/us

  // n points spanning +-5 linewidths of the respective transition.
  static ModeGrid around_resonance(const AtomicCascade& cascade, int n_signal = 5, int n_idler = 5);
};

struct IntegrationOptions {
  double t_max_ns = 0;
  double dt_ns = 0;         // 0 selects 0.01 / gamma_beta
  int record_stride = 1;    // keep every n-th step
  double coupling = 1.0;    // common single-photon coupling g
};

// c_beta and c_gamma are stored mode-major: c_beta[k][sample],
// c_gamma[k * n_idler + q][sample].
struct CascadeTrajectory {
  std::vector<double> time_ns;
  std::vector<Complex> c_alpha;
  std::vector<std::vector<Complex>> c_beta;
  std::vector<std::vector<Complex>> c_gamma;
  ModeGrid modes;

  std::size_t samples() const { return time_ns.size(); }
  const std::vector<Complex>& gamma(std::size_t k, std::size_t q) const {
    return c_gamma[k * modes.idler_detunings.size() + q];
  }
};

// Fixed-step RK4 integration of the cascade amplitude equations starting
// from c_alpha = 1. Throws StepSizeError when dt * gamma_beta > 0.1.
CascadeTrajectory integrate_cascade(const AtomicCascade& cascade, const ModeGrid& modes,
                                    const IntegrationOptions& options);

// Closed forms of the same equations (coupling g).
Complex c_alpha_exact(const AtomicCascade& cascade, double t_ns);
Complex c_beta_exact(const AtomicCascade& cascade, double signal_detuning, double t_ns,
                     double coupling = 1.0);
Complex c_gamma_asymptote(const AtomicCascade& cascade, double signal_detuning,
                          double idler_detuning, double coupling = 1.0);

// Population left in the emitting states: |c_alpha|^2 + sum_k |c_beta_k|^2.
std::vector<double> upper_population(const CascadeTrajectory& traj);

void write_trajectory_csv(std::ostream& out, const CascadeTrajectory& traj);

struct BiphotonEnvelope {
  double amplitude = 1.0;  // peak coincidence density
  double tau_c = 4.4;      // 1/e heralded coherence time, ns

  void validate() const;
};

// Heralded coincidence density at delay delta_t (ns); zero before the herald.
double biphoton_g2(const BiphotonEnvelope& env, double delta_t);

}  // namespace fwm::cascade
