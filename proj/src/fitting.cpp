#include "fwm/fitting.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "fwm/errors.hpp"

namespace fwm::fit {

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

// Upper Gaussian tail 0.5 erfc(x / sqrt 2).
double upper_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

// Phi(b) - Phi(a) for a <= b, computed from whichever tail keeps precision.
double normal_mass(double a, double b) {
  if (a >= 0.0) return upper_tail(a) - upper_tail(b);
  if (b <= 0.0) return upper_tail(-b) - upper_tail(-a);
  return 1.0 - upper_tail(-a) - upper_tail(b);
}

double heaviside_exp(double x, double k) { return x < 0.0 ? 0.0 : std::exp(-k * x); }

const double kGaussLegendreX[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                   0.9061798459386640};
const double kGaussLegendreW[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                   0.4786286704993665, 0.2369268850561891};

double absorption(std::span<const double> p, double x) {
  const double g2 = p[1] * p[1];
  const double d = x - p[2];
  return std::exp(-p[0] * g2 / (g2 + 4.0 * d * d));
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::CrossConvolved: return "cross";
    case ModelKind::AutoConvolved: return "auto";
    case ModelKind::AbsorptionOD: return "absorption";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "cross") return ModelKind::CrossConvolved;
  if (name == "auto") return ModelKind::AutoConvolved;
  if (name == "absorption" || name == "od") return ModelKind::AbsorptionOD;
  throw InvalidInput("unknown model kind '" + name + "' (expected cross, auto or absorption)");
}

std::size_t parameter_count(ModelKind kind) { return kind == ModelKind::AbsorptionOD ? 3 : 4; }

std::vector<std::string> parameter_names(ModelKind kind) {
  switch (kind) {
    case ModelKind::CrossConvolved: return {"amplitude", "tau_c", "tau_d", "baseline"};
    case ModelKind::AutoConvolved: return {"g0", "tau_c", "tau_d", "baseline"};
    case ModelKind::AbsorptionOD: return {"od", "gamma", "center"};
  }
  return {};
}

std::vector<bool> default_fixed_mask(ModelKind kind) {
  switch (kind) {
    case ModelKind::CrossConvolved: return {false, false, false, false};
    case ModelKind::AutoConvolved: return {false, false, false, true};
    case ModelKind::AbsorptionOD: return {false, true, false};
  }
  return {};
}

double erfcx(double z) {
  if (z < 26.0) return std::exp(z * z) * std::erfc(z);
  // Asymptotic expansion; the first omitted term is below 1e-15 here.
  const double s = 1.0 / (2.0 * z * z);
  double term = 1.0, sum = 1.0;
  for (int n = 1; n <= 6; ++n) {
    term *= -(2.0 * n - 1.0) * s;
    sum += term;
  }
  return sum / (z * std::sqrt(std::numbers::pi));
}

double exp_gauss(double x, double k, double sigma) {
  if (sigma == 0.0) return heaviside_exp(x, k);
  const double z = (k * sigma * sigma - x) / (kSqrt2 * sigma);
  if (z < 0.0) {
    // Exponent k^2 s^2 / 2 - k x is negative here.
    return 0.5 * std::exp(0.5 * k * k * sigma * sigma - k * x) * std::erfc(z);
  }
  return 0.5 * std::exp(-0.5 * (x / sigma) * (x / sigma)) * erfcx(z);
}

double exp_gauss_integral(double a, double b, double k, double sigma) {
  if (sigma == 0.0) {
    const double lo = std::max(a, 0.0), hi = std::max(b, 0.0);
    return (std::exp(-k * lo) - std::exp(-k * hi)) / k;
  }
  return (normal_mass(a / sigma, b / sigma) - exp_gauss(b, k, sigma) + exp_gauss(a, k, sigma)) / k;
}

bool in_domain(ModelKind kind, std::span<const double> p) {
  if (p.size() != parameter_count(kind)) return false;
  for (double v : p) {
    if (!std::isfinite(v)) return false;
  }
  if (kind == ModelKind::AbsorptionOD) return p[0] >= 0.0 && p[1] > 0.0;
  return p[1] > 0.0 && p[2] >= 0.0;
}

void check_domain(ModelKind kind, std::span<const double> p) {
  if (p.size() != parameter_count(kind)) {
    throw InvalidInput(to_string(kind) + " model takes " + std::to_string(parameter_count(kind)) +
                       " parameters");
  }
  if (!in_domain(kind, p)) {
    throw DomainError(kind == ModelKind::AbsorptionOD ? "absorption model needs od >= 0 and gamma > 0"
                                                      : "correlation model needs tau_c > 0 and tau_d >= 0");
  }
}

double model_eval(ModelKind kind, std::span<const double> p, double x) {
  check_domain(kind, p);
  switch (kind) {
    case ModelKind::CrossConvolved: return p[3] + p[0] * exp_gauss(x, 1.0 / p[1], p[2]);
    case ModelKind::AutoConvolved: {
      const double k = 2.0 / p[1];
      if (p[2] == 0.0) return p[3] + p[0] * std::exp(-k * std::abs(x));
      return p[3] + p[0] * (exp_gauss(x, k, p[2]) + exp_gauss(-x, k, p[2]));
    }
    case ModelKind::AbsorptionOD: return absorption(p, x);
  }
  return 0.0;
}

double model_eval_binned(ModelKind kind, std::span<const double> p, double x, double width) {
  if (width <= 0.0) return model_eval(kind, p, x);
  check_domain(kind, p);
  const double a = x - 0.5 * width, b = x + 0.5 * width;
  switch (kind) {
    case ModelKind::CrossConvolved:
      return p[3] + p[0] * exp_gauss_integral(a, b, 1.0 / p[1], p[2]) / width;
    case ModelKind::AutoConvolved: {
      const double k = 2.0 / p[1];
      return p[3] + p[0] * (exp_gauss_integral(a, b, k, p[2]) + exp_gauss_integral(-b, -a, k, p[2])) / width;
    }
    case ModelKind::AbsorptionOD: {
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += kGaussLegendreW[i] * absorption(p, x + 0.5 * width * kGaussLegendreX[i]);
      return 0.5 * s;
    }
  }
  return 0.0;
}

double model_max(ModelKind kind, std::span<const double> p, double bin_width) {
  check_domain(kind, p);
  if (kind == ModelKind::AbsorptionOD) throw InvalidInput("model_max applies to correlation models");
  auto f = [&](double x) { return model_eval_binned(kind, p, x, bin_width); };
  if (kind == ModelKind::AutoConvolved) return std::max(f(0.0), p[3]);
  // The exponential-Gaussian convolution is unimodal with its mode in
  // [-3 sigma, tau_c + 3 sigma]; golden-section search on that bracket.
  double lo = -3.0 * p[2] - bin_width, hi = p[1] + 3.0 * p[2] + bin_width;
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = hi - r * (hi - lo), d = lo + r * (hi - lo);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && hi - lo > 1e-12 * (1.0 + std::abs(lo)); ++i) {
    if (fc > fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - r * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + r * (hi - lo);
      fd = f(d);
    }
  }
  return std::max({fc, fd, f(0.0), p[3]});
}

FitData poisson_fit_data(std::span<const double> x, std::span<const double> counts, double g_acc,
                         double lo, double hi) {
  if (x.size() != counts.size()) throw InvalidInput("x and counts differ in length");
  if (!(g_acc > 0.0)) throw DomainError("accidental level must be positive to normalise");
  FitData d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lo || x[i] > hi) continue;
    d.x.push_back(x[i]);
    d.y.push_back(counts[i] / g_acc);
    d.sigma.push_back((counts[i] > 0.0 ? std::sqrt(counts[i]) : 1.0) / g_acc);
  }
  return d;
}

std::vector<double> forward_jacobian(const ModelFunction& model, const DomainPredicate& domain,
                                     std::span<const double> params, std::span<const double> x) {
  const std::size_t np = params.size();
  std::vector<double> out(x.size() * np);
  std::vector<double> base(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) base[i] = model(params, x[i]);
  std::vector<double> s(params.begin(), params.end());
  for (std::size_t j = 0; j < np; ++j) {
    double h = 1e-7 * std::max(std::abs(params[j]), 1e-3);
    s[j] = params[j] + h;
    if (!domain(s)) {
      h = -h;
      s[j] = params[j] + h;
    }
    for (std::size_t i = 0; i < x.size(); ++i) out[i * np + j] = (model(s, x[i]) - base[i]) / h;
    s[j] = params[j];
  }
  return out;
}

FitResult least_squares(const ModelFunction& model, const DomainPredicate& domain, const FitData& data,
                        std::vector<double> p, const std::vector<bool>& fixed, const FitOptions& opt) {
  const std::size_t n = data.size();
  if (data.y.size() != n || data.sigma.size() != n) throw InvalidInput("fit data columns differ in length");
  if (fixed.size() != p.size()) throw InvalidInput("fixed mask does not match the parameter count");
  for (double s : data.sigma) {
    if (!(s > 0.0)) throw InvalidInput("fit uncertainties must be positive");
  }
  if (!domain(p)) throw DomainError("initial parameters outside the model domain");
  std::vector<std::size_t> free;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (!fixed[j]) free.push_back(j);
  }
  const std::size_t m = free.size();
  if (m == 0) throw InvalidInput("no free parameters");
  if (n < 2 * m) throw InvalidInput("need at least twice as many samples as free parameters");

  Eigen::VectorXd r(static_cast<Eigen::Index>(n));
  auto residuals = [&](const std::vector<double>& q, Eigen::VectorXd& out) {
    double chi2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = (data.y[i] - model(q, data.x[i])) / data.sigma[i];
      out[static_cast<Eigen::Index>(i)] = v;
      chi2 += v * v;
    }
    return chi2;
  };

  Eigen::MatrixXd J(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  Eigen::VectorXd r_step(static_cast<Eigen::Index>(n));
  // Jacobian of -r, i.e. of the weighted model.
  auto jacobian = [&](const std::vector<double>& q) {
    const std::vector<double> d = forward_jacobian(model, domain, q, data.x);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < m; ++c) {
        J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = d[i * p.size() + free[c]] / data.sigma[i];
      }
    }
  };

  FitResult res;
  res.fixed = fixed;
  double chi2 = residuals(p, r);
  if (!std::isfinite(chi2)) throw DomainError("model is not finite at the initial parameters");
  double lambda = opt.initial_damping;
  int streak = 0;
  bool stalled = false;
  int it = 0;
  auto scaled_gradient = [&](const Eigen::VectorXd& g) {
    double worst = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const double scale = std::max(std::abs(p[free[c]]), 1e-3);
      worst = std::max(worst, std::abs(g[static_cast<Eigen::Index>(c)]) * scale / std::max(chi2, 1.0));
    }
    return worst;
  };

  jacobian(p);
  for (; it < opt.max_iterations && streak < opt.consecutive; ++it) {
    const Eigen::MatrixXd A = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    for (std::size_t c = 0; c < m; ++c) {
      if (!(A(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c)) > 0.0)) {
        throw RankDeficiencyError("parameter index " + std::to_string(free[c]) +
                                  " has no influence on the model at the current point");
      }
    }
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd damped = A;
      damped.diagonal() += lambda * A.diagonal();
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
      Eigen::VectorXd delta;
      bool usable = ldlt.info() == Eigen::Success && ldlt.isPositive();
      if (usable) {
        delta = ldlt.solve(g);
        usable = delta.allFinite();
      }
      std::vector<double> trial = p;
      if (usable) {
        for (std::size_t c = 0; c < m; ++c) trial[free[c]] += delta[static_cast<Eigen::Index>(c)];
      }
      double trial_chi2 = std::numeric_limits<double>::infinity();
      if (usable && domain(trial)) trial_chi2 = residuals(trial, r_step);
      if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
        const double rel = chi2 > 0.0 ? (chi2 - trial_chi2) / chi2 : 0.0;
        p = trial;
        chi2 = trial_chi2;
        r = r_step;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        jacobian(p);
        const double grad = scaled_gradient(J.transpose() * r);
        streak = (rel < opt.chi2_rel_tol || grad < opt.gradient_tol) ? streak + 1 : 0;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          stalled = true;
          break;
        }
      }
    }
    if (stalled) break;
  }

  res.params = p;
  res.chi2 = chi2;
  res.dof = n - m;
  res.reduced_chi2 = chi2 / static_cast<double>(res.dof);
  res.iterations = it;
  res.gradient_norm = scaled_gradient(J.transpose() * r);
  res.converged = streak >= opt.consecutive || stalled;
  res.message = streak >= opt.consecutive ? "converged"
                : stalled                 ? "converged (no further decrease possible)"
                                          : "iteration limit reached";

  const Eigen::MatrixXd A = J.transpose() * J;
  // Singularity is judged on the correlation form so parameter scale does not matter.
  const Eigen::VectorXd scale = A.diagonal().cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd C = scale.asDiagonal() * A * scale.asDiagonal();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(C, Eigen::EigenvaluesOnly);
  if (!C.allFinite() || eig.eigenvalues().minCoeff() < 1e-12 * eig.eigenvalues().maxCoeff()) {
    throw RankDeficiencyError("normal matrix is singular at the optimum; parameters are not identifiable");
  }
  const Eigen::MatrixXd cov = scale.asDiagonal() * C.inverse() * scale.asDiagonal();
  res.uncertainties.assign(p.size(), 0.0);
  for (std::size_t c = 0; c < m; ++c) {
    res.uncertainties[free[c]] =
        std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c))));
  }
  return res;
}

FitResult fit(const FitData& data, ModelKind kind, std::vector<double> initial, const FitOptions& options) {
  check_domain(kind, initial);
  const std::vector<bool> fixed = options.fixed.empty() ? default_fixed_mask(kind) : options.fixed;
  const double width = options.bin_width;
  auto model = [kind, width](std::span<const double> q, double x) {
    return model_eval_binned(kind, q, x, width);
  };
  auto domain = [kind](std::span<const double> q) { return in_domain(kind, q); };
  FitResult r = least_squares(model, domain, data, std::move(initial), fixed, options);
  r.kind = kind;
  return r;
}

FitResult fit_multistart(const FitData& data, ModelKind kind, const std::vector<double>& initial,
                         const FitOptions& options, int starts, std::uint64_t seed, unsigned workers) {
  check_domain(kind, initial);
  if (starts < 1) throw InvalidInput("starts must be >= 1");
  const std::vector<bool> fixed = options.fixed.empty() ? default_fixed_mask(kind) : options.fixed;
  std::vector<std::vector<double>> guesses{initial};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> jiggle(0.0, 0.3);
  while (static_cast<int>(guesses.size()) < starts) {
    std::vector<double> g = initial;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!fixed[j]) g[j] *= std::exp(jiggle(rng));
    }
    if (!in_domain(kind, g)) g = initial;
    guesses.push_back(std::move(g));
  }

  std::vector<FitResult> results(guesses.size());
  std::vector<bool> ok(guesses.size(), false);
  auto run = [&](std::size_t i) {
    try {
      results[i] = fit(data, kind, guesses[i], options);
      ok[i] = true;
    } catch (const RankDeficiencyError&) {
    } catch (const DomainError&) {
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < guesses.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < guesses.size(); i += workers) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  const FitResult* best = nullptr;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!ok[i]) continue;
    const FitResult& r = results[i];
    if (best == nullptr) {
      best = &r;
      continue;
    }
    const bool better_status = r.converged && !best->converged;
    const bool same_status = r.converged == best->converged;
    if (better_status || (same_status && (r.chi2 < best->chi2 ||
                                          (r.chi2 == best->chi2 && r.params < best->params)))) {
      best = &r;
    }
  }
  if (best == nullptr) throw RankDeficiencyError("every start ended in a singular normal matrix");
  return *best;
}

InitialGuess initial_guess(const FitData& data, ModelKind kind) {
  if (data.size() == 0) throw InvalidInput("cannot guess parameters from empty data");
  InitialGuess out;
  const auto& x = data.x;
  const auto& y = data.y;
  const std::size_t n = data.size();

  if (kind == ModelKind::AbsorptionOD) {
    const auto it = std::min_element(y.begin(), y.end());
    const double y_min = *it;
    out.low_contrast = y_min > 0.95;
    // Centre: midpoint of the region absorbed below half of the way down.
    const double half = 0.5 * (1.0 + y_min);
    double first = x[static_cast<std::size_t>(it - y.begin())], last = first;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] < half) {
        first = std::min(first, x[i]);
        last = std::max(last, x[i]);
      }
    }
    const double center = 0.5 * (first + last);
    double od = -std::log(std::clamp(y_min, 1e-3, 1.0));
    if (y_min < 0.05) {
      // A saturated dip only bounds OD from below; invert the wings instead.
      const double g2 = kRubidiumLinewidth * kRubidiumLinewidth;
      std::vector<double> wing;
      for (std::size_t i = 0; i < n; ++i) {
        if (y[i] > 0.1 && y[i] < 0.9) {
          const double d = x[i] - center;
          wing.push_back(-std::log(y[i]) * (g2 + 4.0 * d * d) / g2);
        }
      }
      if (!wing.empty()) {
        std::nth_element(wing.begin(), wing.begin() + static_cast<std::ptrdiff_t>(wing.size() / 2), wing.end());
        od = wing[wing.size() / 2];
      }
    }
    out.params = {od, kRubidiumLinewidth, center};
    return out;
  }

  const std::size_t peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double spacing = n > 1 ? std::abs(x[1] - x[0]) : 1.0;

  auto mean_sd = [&](auto&& keep) {
    double s = 0.0, sq = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (keep(i)) {
        s += y[i];
        sq += y[i] * y[i];
        ++k;
      }
    }
    if (k == 0) return std::array<double, 3>{0.0, 0.0, 0.0};
    const double m = s / static_cast<double>(k);
    return std::array<double, 3>{m, std::sqrt(std::max(0.0, sq / static_cast<double>(k) - m * m)),
                                 static_cast<double>(k)};
  };

  // Linear interpolation of the leading edge crossing `level` above baseline.
  auto crossing_before_peak = [&](double baseline, double level) {
    for (std::size_t i = peak; i > 0; --i) {
      if (y[i - 1] - baseline < level) {
        const double y0 = y[i - 1] - baseline, y1 = y[i] - baseline;
        const double f = y1 != y0 ? (level - y0) / (y1 - y0) : 0.0;
        return x[i - 1] + f * (x[i] - x[i - 1]);
      }
    }
    return x[0];
  };

  double baseline = 1.0, noise = 0.0;
  if (kind == ModelKind::CrossConvolved) {
    // Delta t < 0 mean, then again from left of the estimated rise so that a
    // broad jitter does not leak the peak into the baseline.
    auto first = mean_sd([&](std::size_t i) { return x[i] < 0.0; });
    baseline = first[2] > 0 ? first[0] : *std::min_element(y.begin(), y.end());
    noise = first[1];
    const double amp0 = y[peak] - baseline;
    if (amp0 > 0.0) {
      const double x10 = crossing_before_peak(baseline, 0.1 * amp0);
      const double x90 = crossing_before_peak(baseline, 0.9 * amp0);
      const double cut = std::min(0.0, x10 - 1.5 * (x90 - x10));
      auto second = mean_sd([&](std::size_t i) { return x[i] < cut; });
      if (second[2] >= 3) {
        baseline = second[0];
        noise = second[1];
      } else {
        baseline = *std::min_element(y.begin(), y.end());
      }
    }
  } else {
    const double far = 0.5 * std::max(std::abs(x.front()), std::abs(x.back()));
    noise = mean_sd([&](std::size_t i) { return std::abs(x[i]) >= far; })[1];
  }
  const double amp = y[peak] - baseline;

  if (!(amp > 3.0 * noise) || !(amp > 0.0)) {
    out.low_contrast = true;
    out.params = {0.0, std::max(10.0 * spacing, 1.0), spacing, baseline};
    return out;
  }

  // 1/e crossing after the peak.
  double tail = 0.0;
  for (std::size_t i = peak + 1; i < n; ++i) {
    if (y[i] - baseline < amp / std::numbers::e) {
      const double y0 = y[i - 1] - baseline, y1 = y[i] - baseline;
      const double f = y0 != y1 ? (y0 - amp / std::numbers::e) / (y0 - y1) : 0.0;
      tail = x[i - 1] + f * (x[i] - x[i - 1]) - x[peak];
      break;
    }
  }
  if (!(tail > 0.0)) tail = 0.25 * (x.back() - x[peak]);

  if (kind == ModelKind::CrossConvolved) {
    const double rise = crossing_before_peak(baseline, 0.9 * amp) - crossing_before_peak(baseline, 0.1 * amp);
    const double tau_d = std::max(rise / 2.563, 0.25 * spacing);
    // Jitter lowers the peak below the amplitude; undo that for the guessed shape.
    const std::vector<double> unit{1.0, tail, tau_d, 0.0};
    out.params = {amp / model_max(ModelKind::CrossConvolved, unit), tail, tau_d, baseline};
    return out;
  }

  // Auto: g2 - 1 = g0 exp(-2|t|/tau_c) away from the origin. A log-linear fit
  // of the wing between 1/e and 1/e^2 of the peak gives the undistorted g0;
  // the jitter then shows up as the peak deficit 1 - sqrt(2/pi) k sigma.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = y[i] - baseline;
    if (x[i] > 0.0 && v < amp / std::numbers::e && v > amp * std::exp(-2.0)) {
      const double ly = std::log(v);
      sx += x[i];
      sy += ly;
      sxx += x[i] * x[i];
      sxy += x[i] * ly;
      ++k;
    }
  }
  double rate = 1.0 / tail, g0 = amp, tau_d = 0.25 * spacing;
  const double det = static_cast<double>(k) * sxx - sx * sx;
  if (k >= 3 && det > 0.0) {
    const double slope = (static_cast<double>(k) * sxy - sx * sy) / det;
    if (slope < 0.0) {
      rate = -slope;
      g0 = std::max(amp, std::exp((sy - slope * sx) / static_cast<double>(k)));
      tau_d = std::max((1.0 - amp / g0) * std::sqrt(std::numbers::pi / 2.0) / rate, tau_d);
    }
  }
  out.params = {g0, 2.0 / rate, tau_d, baseline};
  return out;
}

}  // namespace fwm::fit
