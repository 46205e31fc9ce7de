#include "fwm/cascade_model.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "fwm/errors.hpp"

namespace fwm::cascade {

namespace {

constexpr Complex kI{0.0, 1.0};

double norm3(const Vec3& v) { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

double omega_from_wavelength(double lambda_m) {
  return 2.0 * std::numbers::pi * kSpeedOfLight / lambda_m;
}

}  // namespace

AtomicCascade AtomicCascade::rubidium_default() {
  AtomicCascade c;
  c.omega_ab = omega_from_wavelength(762.0e-9);
  c.omega_bg = omega_from_wavelength(795.0e-9);
  return c;
}

void AtomicCascade::validate() const {
  if (!(gamma_alpha > 0.0) || !(gamma_beta > 0.0)) {
    throw InvalidInput("cascade decay rates must be positive");
  }
}

PhaseMatchSpec PhaseMatchSpec::colinear(double lambda_p1_m, double lambda_p2_m, double lambda_s_m,
                                        double lambda_i_m) {
  auto wave = [](double lambda) { return Vec3{0.0, 0.0, 2.0 * std::numbers::pi / lambda}; };
  PhaseMatchSpec s;
  s.k_p1 = wave(lambda_p1_m);
  s.k_p2 = wave(lambda_p2_m);
  s.k_s = wave(lambda_s_m);
  s.k_i = wave(lambda_i_m);
  s.omega_p1 = omega_from_wavelength(lambda_p1_m);
  s.omega_p2 = omega_from_wavelength(lambda_p2_m);
  s.omega_s = omega_from_wavelength(lambda_s_m);
  s.omega_i = omega_from_wavelength(lambda_i_m);
  return s;
}

PhaseMatchReport check_phase_matching(const PhaseMatchSpec& spec, double rel_tol) {
  if (!(rel_tol > 0.0)) throw InvalidInput("rel_tol must be positive");
  const Vec3 pump = add(spec.k_p1, spec.k_p2);
  const double pump_norm = norm3(pump);
  if (norm3(spec.k_p1) == 0.0 || norm3(spec.k_p2) == 0.0 || pump_norm == 0.0) {
    throw InvalidInput("pump wavevectors must have non-zero magnitude");
  }
  const double pump_omega = spec.omega_p1 + spec.omega_p2;
  if (!(pump_omega > 0.0)) throw InvalidInput("pump frequencies must be positive");

  PhaseMatchReport r;
  r.momentum_residual = sub(pump, add(spec.k_s, spec.k_i));
  r.energy_residual = pump_omega - spec.omega_s - spec.omega_i;
  r.momentum_relative = norm3(r.momentum_residual) / pump_norm;
  r.energy_relative = std::abs(r.energy_residual) / pump_omega;
  r.pass = r.momentum_relative <= rel_tol && r.energy_relative <= rel_tol;
  return r;
}

bool dispersion_consistent(const PhaseMatchSpec& spec, double rel_tol) {
  auto ok = [&](const Vec3& k, double omega) {
    const double expected = omega / kSpeedOfLight;
    return std::abs(norm3(k) - expected) <= rel_tol * expected;
  };
  return ok(spec.k_p1, spec.omega_p1) && ok(spec.k_p2, spec.omega_p2) && ok(spec.k_s, spec.omega_s) &&
         ok(spec.k_i, spec.omega_i);
}

ModeGrid ModeGrid::around_resonance(const AtomicCascade& cascade, int n_signal, int n_idler) {
  auto span = [](double width, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      v[static_cast<std::size_t>(i)] = n == 1 ? 0.0 : -width + 2.0 * width * i / (n - 1);
    }
    return v;
  };
  return {span(5.0 * cascade.gamma_alpha, n_signal), span(5.0 * cascade.gamma_beta, n_idler)};
}

CascadeTrajectory integrate_cascade(const AtomicCascade& cascade, const ModeGrid& modes,
                                    const IntegrationOptions& options) {
  cascade.validate();
  const double dt_ns = options.dt_ns > 0.0 ? options.dt_ns : 0.01 / cascade.gamma_beta * 1e3;
  if (!(options.t_max_ns > dt_ns)) throw InvalidInput("t_max must exceed dt");
  if (options.record_stride < 1) throw InvalidInput("record_stride must be >= 1");
  const double h = dt_ns * 1e-3;  // us
  if (h * cascade.gamma_beta > 0.1) {
    throw StepSizeError("dt * gamma_beta = " + std::to_string(h * cascade.gamma_beta) +
                        " exceeds the 0.1 stability limit");
  }

  const std::size_t nk = modes.signal_detunings.size();
  const std::size_t nq = modes.idler_detunings.size();
  const std::size_t dim = 1 + nk + nk * nq;
  const double ga = 0.5 * cascade.gamma_alpha;
  const double gb = 0.5 * cascade.gamma_beta;
  const double g = options.coupling;

  std::vector<Complex> phase_q(nq);
  auto rhs = [&](double t, const std::vector<Complex>& y, std::vector<Complex>& dy) {
    for (std::size_t q = 0; q < nq; ++q) {
      phase_q[q] = -kI * g * std::polar(1.0, -modes.idler_detunings[q] * t);
    }
    dy[0] = -ga * y[0];
    for (std::size_t k = 0; k < nk; ++k) {
      const Complex phase_k = std::polar(1.0, -modes.signal_detunings[k] * t);
      dy[1 + k] = -kI * g * phase_k * y[0] - gb * y[1 + k];
      for (std::size_t q = 0; q < nq; ++q) dy[1 + nk + k * nq + q] = phase_q[q] * y[1 + k];
    }
  };

  const auto steps = static_cast<std::size_t>(std::ceil(options.t_max_ns / dt_ns - 1e-9));
  const auto stride = static_cast<std::size_t>(options.record_stride);

  CascadeTrajectory traj;
  traj.modes = modes;
  traj.c_beta.assign(nk, {});
  traj.c_gamma.assign(nk * nq, {});

  std::vector<Complex> y(dim, Complex{}), k1(dim), k2(dim), k3(dim), k4(dim), tmp(dim);
  y[0] = 1.0;

  auto record = [&](double t_ns) {
    traj.time_ns.push_back(t_ns);
    traj.c_alpha.push_back(y[0]);
    for (std::size_t k = 0; k < nk; ++k) traj.c_beta[k].push_back(y[1 + k]);
    for (std::size_t j = 0; j < nk * nq; ++j) traj.c_gamma[j].push_back(y[1 + nk + j]);
  };
  record(0.0);

  for (std::size_t n = 0; n < steps; ++n) {
    const double t = static_cast<double>(n) * h;
    rhs(t, y, k1);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    rhs(t + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    rhs(t + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = y[i] + h * k3[i];
    rhs(t + h, tmp, k4);
    for (std::size_t i = 0; i < dim; ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    if ((n + 1) % stride == 0) record(static_cast<double>(n + 1) * dt_ns);
  }
  return traj;
}

Complex c_alpha_exact(const AtomicCascade& cascade, double t_ns) {
  return std::exp(-0.5 * cascade.gamma_alpha * t_ns * 1e-3);
}

Complex c_beta_exact(const AtomicCascade& cascade, double signal_detuning, double t_ns,
                     double coupling) {
  const double t = t_ns * 1e-3;
  const double ga = 0.5 * cascade.gamma_alpha;
  const double gb = 0.5 * cascade.gamma_beta;
  const Complex denom{gb - ga, -signal_detuning};
  if (std::abs(denom) < 1e-14) {
    return -kI * coupling * t * std::exp(-gb * t);
  }
  const Complex rising = std::exp(Complex{-ga, -signal_detuning} * t);
  return -kI * coupling * (rising - std::exp(-gb * t)) / denom;
}

Complex c_gamma_asymptote(const AtomicCascade& cascade, double signal_detuning,
                          double idler_detuning, double coupling) {
  const Complex a{0.5 * cascade.gamma_alpha, signal_detuning + idler_detuning};
  const Complex b{0.5 * cascade.gamma_beta, idler_detuning};
  return -coupling * coupling / (a * b);
}

std::vector<double> upper_population(const CascadeTrajectory& traj) {
  std::vector<double> pop(traj.samples());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    double p = std::norm(traj.c_alpha[i]);
    for (const auto& beta : traj.c_beta) p += std::norm(beta[i]);
    pop[i] = p;
  }
  return pop;
}

void write_trajectory_csv(std::ostream& out, const CascadeTrajectory& traj) {
  const std::size_t nk = traj.modes.signal_detunings.size();
  const std::size_t nq = traj.modes.idler_detunings.size();
  out << "time_ns,re_c_alpha,im_c_alpha";
  for (std::size_t k = 0; k < nk; ++k) out << ",re_c_beta_" << k << ",im_c_beta_" << k;
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t q = 0; q < nq; ++q) {
      out << ",re_c_gamma_" << k << '_' << q << ",im_c_gamma_" << k << '_' << q;
    }
  }
  out << '\n';
  const auto old_precision = out.precision(12);
  for (std::size_t i = 0; i < traj.samples(); ++i) {
    out << traj.time_ns[i] << ',' << traj.c_alpha[i].real() << ',' << traj.c_alpha[i].imag();
    for (const auto& b : traj.c_beta) out << ',' << b[i].real() << ',' << b[i].imag();
    for (const auto& c : traj.c_gamma) out << ',' << c[i].real() << ',' << c[i].imag();
    out << '\n';
  }
  out.precision(old_precision);
}

void BiphotonEnvelope::validate() const {
  if (!(tau_c > 0.0)) throw InvalidInput("tau_c must be positive");
  if (!(amplitude >= 0.0)) throw InvalidInput("amplitude must be non-negative");
}

double biphoton_g2(const BiphotonEnvelope& env, double delta_t) {
  if (delta_t < 0.0) return 0.0;
  return env.amplitude * std::exp(-delta_t / env.tau_c);
}

}  // namespace fwm::cascade
