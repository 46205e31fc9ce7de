#pragma once

// Damped least-squares engine and the three model families fitted to the
// correlation histograms and absorption scans.
//
// CrossConvolved  p = (amplitude, tau_c, tau_d, baseline)
//   baseline + amplitude * [exp(-t/tau_c) Theta(t)] (*) N(0, tau_d)
// AutoConvolved   p = (g0, tau_c, tau_d, baseline)        baseline fixed at 1
//   baseline + g0 * [exp(-2|t|/tau_c)] (*) N(0, tau_d)
// AbsorptionOD    p = (od, gamma, center)                 gamma fixed by default
//   exp(-od * gamma^2 / (gamma^2 + 4 (x - center)^2))
//
// Times in ns, detunings and linewidths in MHz.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fwm::fit {

enum class ModelKind { CrossConvolved, AutoConvolved, AbsorptionOD };

inline constexpr double kRubidiumLinewidth = 6.065;  // MHz

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);
std::size_t parameter_count(ModelKind kind);
std::vector<std::string> parameter_names(ModelKind kind);
std::vector<bool> default_fixed_mask(ModelKind kind);

// Exponential (rate k) convolved with a unit-area Gaussian of width sigma:
// 0.5 exp(k^2 sigma^2 / 2 - k x) erfc((k sigma^2 - x) / (sqrt(2) sigma)).
// Evaluated without overflow for any finite input.
double exp_gauss(double x, double k, double sigma);
// Integral of exp_gauss over [a, b].
double exp_gauss_integral(double a, double b, double k, double sigma);
// exp(z^2) erfc(z)
double erfcx(double z);

// Throws DomainError for parameters outside the model's domain.
void check_domain(ModelKind kind, std::span<const double> params);
bool in_domain(ModelKind kind, std::span<const double> params);

double model_eval(ModelKind kind, std::span<const double> params, double x);
// Mean of the model over [x - width/2, x + width/2] (the expected content of
// a histogram bin centred at x). width = 0 falls back to model_eval.
double model_eval_binned(ModelKind kind, std::span<const double> params, double x, double width);

// Largest value of the (optionally bin-averaged) correlation model.
double model_max(ModelKind kind, std::span<const double> params, double bin_width = 0.0);

struct FitData {
  std::vector<double> x, y, sigma;
  std::size_t size() const { return x.size(); }
};

// Normalised histogram data with Poisson errors sqrt(counts) (1 for empty bins),
// restricted to lo <= x <= hi.
FitData poisson_fit_data(std::span<const double> x, std::span<const double> counts, double g_acc,
                         double lo, double hi);

struct FitOptions {
  int max_iterations = 500;
  double chi2_rel_tol = 1e-9;
  double gradient_tol = 1e-8;
  int consecutive = 3;
  double initial_damping = 1e-3;
  std::vector<bool> fixed;  // empty: default mask of the model
  double bin_width = 0.0;   // > 0: fit bin-averaged model values
};

struct FitResult {
  ModelKind kind = ModelKind::CrossConvolved;
  std::vector<double> params;
  std::vector<double> uncertainties;  // 1 sigma from the unscaled covariance; 0 for fixed
  std::vector<bool> fixed;
  double chi2 = 0.0;
  double reduced_chi2 = 0.0;
  std::size_t dof = 0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // scaled infinity norm at the returned point
  std::string message;
};

// Generic engine: model(params, x) with a domain predicate.
using ModelFunction = std::function<double(std::span<const double>, double)>;
using DomainPredicate = std::function<bool(std::span<const double>)>;

// d model / d p_j at each x by forward differences, row-major (x.size() rows,
// params.size() columns). The step flips sign when the forward point leaves
// the domain.
std::vector<double> forward_jacobian(const ModelFunction& model, const DomainPredicate& domain,
                                     std::span<const double> params, std::span<const double> x);

FitResult least_squares(const ModelFunction& model, const DomainPredicate& domain, const FitData& data,
                        std::vector<double> initial, const std::vector<bool>& fixed, const FitOptions& options);

FitResult fit(const FitData& data, ModelKind kind, std::vector<double> initial, const FitOptions& options = {});

// Runs `starts` fits from the given guess and multiplicatively perturbed
// copies of it; lowest chi^2 wins, ties broken by lexicographic parameter order.
FitResult fit_multistart(const FitData& data, ModelKind kind, const std::vector<double>& initial,
                         const FitOptions& options = {}, int starts = 8, std::uint64_t seed = 1,
                         unsigned workers = 1);

struct InitialGuess {
  std::vector<double> params;
  bool low_contrast = false;
};

InitialGuess initial_guess(const FitData& data, ModelKind kind);

}  // namespace fwm::fit
