#pragma once

// Weighted least-squares fitting: closed-form straight lines and a damped
// Gauss-Newton (Levenberg-Marquardt) engine for the nonlinear models used to
// extract mu_1, gamma_in, fringe visibility and the double-write penalty.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "afcmem/common.hpp"

namespace afcmem::fitkit {

enum class ModelKind { linear, gaussianDecay, sinusoid, fidelityModel, custom };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linear: return "linear";
    case ModelKind::gaussianDecay: return "gaussianDecay";
    case ModelKind::sinusoid: return "sinusoid";
    case ModelKind::fidelityModel: return "fidelityModel";
    case ModelKind::custom: return "custom";
  }
  return "?";
}

struct FitResult {
  ModelKind modelKind = ModelKind::custom;
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> uncertainties;  // 1 sigma, zero for fixed parameters
  std::vector<bool> fixed;
  double residualNorm = 0.0;  // sqrt(chi^2)
  double gradientNorm = 0.0;  // scaled, see converged
  int iterations = 0;
  bool converged = false;
  std::string diagnostics;

  double param(const std::string& name) const { return params.at(index(name)); }
  double sigma(const std::string& name) const { return uncertainties.at(index(name)); }

  std::size_t index(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidArgument("unknown fit parameter '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
  }
};

/// Weighted data triples.
struct Data {
  std::vector<double> x, y, sigma;

  std::size_t size() const { return x.size(); }
};

struct LmOptions {
  int maxIterations = 200;
  double gradientTolerance = 1e-10;
  double initialDamping = 1e-3;
  double dampingFactor = 10.0;
  double relativeStep = 1e-6;  // central-difference step relative to |p|
};

/// Model signature: value at abscissa x for the full parameter vector.
using ModelFn = std::function<double(std::span<const double>, double)>;

namespace detail {

inline void validate_data(const Data& d, std::size_t nFree) {
  afcmem::detail::require(d.x.size() == d.y.size() && d.y.size() == d.sigma.size(),
                          "fit: x, y and sigma must have equal length");
  afcmem::detail::require(d.size() >= nFree + 2,
                          "fit: need at least two more points than free parameters");
  for (double s : d.sigma)
    afcmem::detail::require(s > 0.0 && std::isfinite(s), "fit: sigma must be positive");
}

inline double step_for(double p, double rel) { return rel * std::max(std::abs(p), 1.0); }

}  // namespace detail

/// Central-difference Jacobian of the weighted residuals r_i = (y_i - f_i)/s_i
/// with respect to the free parameters, returned as d f_i / d p_j / s_i.
inline Eigen::MatrixXd weighted_jacobian(const Data& data, const ModelFn& f,
                                         std::span<const double> p,
                                         std::span<const std::size_t> freeIdx,
                                         double relStep = 1e-6) {
  Eigen::MatrixXd J(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(freeIdx.size()));
  std::vector<double> work(p.begin(), p.end());
  for (std::size_t c = 0; c < freeIdx.size(); ++c) {
    const std::size_t j = freeIdx[c];
    const double h = detail::step_for(p[j], relStep);
    for (std::size_t i = 0; i < data.size(); ++i) {
      work[j] = p[j] + h;
      const double up = f(work, data.x[i]);
      work[j] = p[j] - h;
      const double dn = f(work, data.x[i]);
      J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
          (up - dn) / (2.0 * h) / data.sigma[i];
    }
    work[j] = p[j];
  }
  return J;
}

/// Five-point stencil version of weighted_jacobian, used to audit it.
inline Eigen::MatrixXd weighted_jacobian_5pt(const Data& data, const ModelFn& f,
                                             std::span<const double> p,
                                             std::span<const std::size_t> freeIdx,
                                             double relStep = 1e-4) {
  Eigen::MatrixXd J(static_cast<Eigen::Index>(data.size()),
                    static_cast<Eigen::Index>(freeIdx.size()));
  std::vector<double> work(p.begin(), p.end());
  for (std::size_t c = 0; c < freeIdx.size(); ++c) {
    const std::size_t j = freeIdx[c];
    const double h = detail::step_for(p[j], relStep);
    for (std::size_t i = 0; i < data.size(); ++i) {
      auto at = [&](double off) {
        work[j] = p[j] + off;
        return f(work, data.x[i]);
      };
      const double v = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h);
      J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v / data.sigma[i];
    }
    work[j] = p[j];
  }
  return J;
}

inline double chi_square(const Data& data, const ModelFn& f, std::span<const double> p) {
  double c2 = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = (data.y[i] - f(p, data.x[i])) / data.sigma[i];
    c2 += r * r;
  }
  return c2;
}

/// Levenberg-Marquardt on an arbitrary model. Parameters flagged in `fixed`
/// are held at their initial value. Deterministic for given inputs.
inline FitResult levenberg_marquardt(const Data& data, const ModelFn& f,
                                     std::vector<double> initial,
                                     std::vector<std::string> names,
                                     std::vector<bool> fixed = {},
                                     const LmOptions& opt = {}) {
  if (fixed.empty()) fixed.assign(initial.size(), false);
  afcmem::detail::require(names.size() == initial.size() && fixed.size() == initial.size(),
                          "fit: parameter names/fixed flags must match initial guess");
  std::vector<std::size_t> freeIdx;
  for (std::size_t j = 0; j < initial.size(); ++j)
    if (!fixed[j]) freeIdx.push_back(j);
  detail::validate_data(data, freeIdx.size());

  FitResult res;
  res.names = std::move(names);
  res.fixed = fixed;
  std::vector<double> p = std::move(initial);
  const auto nFree = static_cast<Eigen::Index>(freeIdx.size());
  const auto nData = static_cast<Eigen::Index>(data.size());

  auto residuals = [&](std::span<const double> q) {
    Eigen::VectorXd r(nData);
    for (Eigen::Index i = 0; i < nData; ++i) {
      const auto k = static_cast<std::size_t>(i);
      r(i) = (data.y[k] - f(q, data.x[k])) / data.sigma[k];
    }
    return r;
  };
  auto scaled_gradient = [&](const Eigen::VectorXd& g, double c2) {
    double m = 0.0;
    for (Eigen::Index c = 0; c < nFree; ++c)
      m = std::max(m, std::abs(g(c)) * std::max(std::abs(p[freeIdx[static_cast<std::size_t>(c)]]), 1.0));
    return m / (1.0 + c2);
  };

  Eigen::VectorXd r = residuals(p);
  double c2 = r.squaredNorm();
  double lambda = 0.0;  // first attempt is a plain Gauss-Newton step
  Eigen::MatrixXd J = weighted_jacobian(data, f, p, freeIdx, opt.relativeStep);
  Eigen::MatrixXd A = J.transpose() * J;
  Eigen::VectorXd g = J.transpose() * r;
  int it = 0;
  bool stalled = false;
  for (; it < opt.maxIterations; ++it) {
    res.gradientNorm = scaled_gradient(g, c2);
    if (res.gradientNorm <= opt.gradientTolerance) break;
    bool improved = false;
    while (lambda < 1e20) {
      Eigen::MatrixXd M = A;
      for (Eigen::Index c = 0; c < nFree; ++c) M(c, c) += lambda * std::max(A(c, c), 1e-30);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
      if (ldlt.info() != Eigen::Success) {
        lambda = lambda == 0.0 ? opt.initialDamping : lambda * opt.dampingFactor;
        continue;
      }
      const Eigen::VectorXd step = ldlt.solve(g);
      std::vector<double> trial = p;
      for (Eigen::Index c = 0; c < nFree; ++c) trial[freeIdx[static_cast<std::size_t>(c)]] += step(c);
      const Eigen::VectorXd rt = residuals(trial);
      const double c2t = rt.squaredNorm();
      if (std::isfinite(c2t) && c2t <= c2) {
        const bool tiny = step.norm() <= 1e-15 * (1.0 + Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())).norm());
        p = std::move(trial);
        r = rt;
        c2 = c2t;
        lambda = lambda / opt.dampingFactor < 1e-12 ? 0.0 : lambda / opt.dampingFactor;
        improved = true;
        stalled = tiny;
        break;
      }
      lambda = lambda == 0.0 ? opt.initialDamping : lambda * opt.dampingFactor;
    }
    J = weighted_jacobian(data, f, p, freeIdx, opt.relativeStep);
    A = J.transpose() * J;
    g = J.transpose() * r;
    if (!improved || stalled) {
      ++it;
      break;
    }
  }
  res.gradientNorm = scaled_gradient(g, c2);
  res.iterations = it;
  res.params = p;
  res.residualNorm = std::sqrt(c2);
  res.modelKind = ModelKind::custom;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  res.uncertainties.assign(p.size(), 0.0);
  if (!lu.isInvertible()) {
    res.converged = false;
    res.diagnostics = "singular normal matrix";
    return res;
  }
  const Eigen::MatrixXd cov = lu.inverse();
  for (Eigen::Index c = 0; c < nFree; ++c)
    res.uncertainties[freeIdx[static_cast<std::size_t>(c)]] = std::sqrt(std::max(cov(c, c), 0.0));
  // A step that can no longer lower chi^2 at machine precision counts as converged.
  res.converged = res.gradientNorm <= opt.gradientTolerance || (stalled && res.gradientNorm <= 1e-6);
  if (!res.converged)
    res.diagnostics = "no convergence after " + std::to_string(it) +
                      " iterations (scaled gradient " + std::to_string(res.gradientNorm) + ")";
  return res;
}

// ---------------------------------------------------------------------------
// Named models

/// y = intercept + slope * x, solved from the weighted normal equations.
/// With `fixedIntercept` the line is forced through that intercept.
inline FitResult fit_linear(const Data& data, std::optional<double> fixedIntercept = std::nullopt) {
  const std::size_t nFree = fixedIntercept ? 1 : 2;
  detail::validate_data(data, nFree);
  double S = 0, Sx = 0, Sy = 0, Sxx = 0, Sxy = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = 1.0 / (data.sigma[i] * data.sigma[i]);
    const double x = data.x[i];
    const double y = data.y[i] - fixedIntercept.value_or(0.0);
    S += w;
    Sx += w * x;
    Sy += w * y;
    Sxx += w * x * x;
    Sxy += w * x * y;
  }
  FitResult res;
  res.modelKind = ModelKind::linear;
  res.names = {"intercept", "slope"};
  res.fixed = {fixedIntercept.has_value(), false};
  if (fixedIntercept) {
    if (Sxx <= 0) throw NumericalError("fit_linear: singular normal matrix");
    res.params = {*fixedIntercept, Sxy / Sxx};
    res.uncertainties = {0.0, std::sqrt(1.0 / Sxx)};
  } else {
    const double det = S * Sxx - Sx * Sx;
    if (!(std::abs(det) > 1e-300 * std::max(1.0, S * Sxx)))
      throw NumericalError("fit_linear: singular normal matrix");
    res.params = {(Sxx * Sy - Sx * Sxy) / det, (S * Sxy - Sx * Sy) / det};
    res.uncertainties = {std::sqrt(Sxx / det), std::sqrt(S / det)};
  }
  const ModelFn line = [](std::span<const double> q, double x) { return q[0] + q[1] * x; };
  res.residualNorm = std::sqrt(chi_square(data, line, res.params));
  res.converged = true;
  res.iterations = 0;
  return res;
}

/// Abscissa where a fitted line reaches `level` (mu_1 for level = 1).
inline double linear_crossing(const FitResult& line, double level = 1.0) {
  return (level - line.params.at(0)) / line.params.at(1);
}

/// Intensity decay of a Gaussian spin line: t in us, gamma in kHz.
inline double gaussian_decay(double y0, double gammaKHz, double tUs) {
  const double a = kPi * gammaKHz * 1e-3 * tUs;
  return y0 * std::exp(-a * a / (2.0 * kLn2));
}

inline const ModelFn& gaussian_decay_model() {
  static const ModelFn m = [](std::span<const double> q, double t) {
    return gaussian_decay(q[0], q[1], t);
  };
  return m;
}

/// Fringe over the write phase difference in degrees:
/// y = A (1 + V cos(beta - phi)) + B. B is held fixed (default 0): A, V and B
/// cannot be identified jointly from a single-frequency fringe.
inline const ModelFn& sinusoid_model() {
  static const ModelFn m = [](std::span<const double> q, double betaDeg) {
    const double arg = (betaDeg - q[2]) * kPi / 180.0;
    return q[0] * (1.0 + q[1] * std::cos(arg)) + q[3];
  };
  return m;
}

/// Total time-bin fidelity versus mu_q with parameters (mu1p, alpha).
inline double fidelity_total_value(double muQ, double mu1p, double alpha) {
  return (muQ + mu1p) / (muQ + 2.0 * mu1p) / 3.0 +
         (1.0 + muQ / (muQ + 2.0 * alpha * mu1p)) / 3.0;
}

inline const ModelFn& fidelity_model() {
  static const ModelFn m = [](std::span<const double> q, double mu) {
    return fidelity_total_value(mu, q[0], q[1]);
  };
  return m;
}

/// Generic entry point over the named model kinds. `initial` holds every
/// parameter of the model (see parameter_names); `fixed` marks held ones.
inline std::vector<std::string> parameter_names(ModelKind kind) {
  switch (kind) {
    case ModelKind::linear: return {"intercept", "slope"};
    case ModelKind::gaussianDecay: return {"y0", "gamma_in"};
    case ModelKind::sinusoid: return {"A", "V", "phi", "B"};
    case ModelKind::fidelityModel: return {"mu1p", "alpha"};
    case ModelKind::custom: break;
  }
  throw InvalidArgument("fit: custom models need an explicit ModelFn");
}

inline FitResult fit(const Data& data, ModelKind kind, std::vector<double> initial,
                     std::vector<bool> fixed = {}, const LmOptions& opt = {}) {
  const auto names = parameter_names(kind);
  if (kind == ModelKind::linear) {
    if (!fixed.empty() && fixed[0]) return fit_linear(data, initial.at(0));
    return fit_linear(data);
  }
  if (kind == ModelKind::sinusoid && fixed.empty()) fixed = {false, false, false, true};
  if (initial.size() == 3 && kind == ModelKind::sinusoid) initial.push_back(0.0);
  const ModelFn* model = nullptr;
  switch (kind) {
    case ModelKind::gaussianDecay: model = &gaussian_decay_model(); break;
    case ModelKind::sinusoid: model = &sinusoid_model(); break;
    case ModelKind::fidelityModel: model = &fidelity_model(); break;
    default: break;
  }
  FitResult r = levenberg_marquardt(data, *model, std::move(initial), names, std::move(fixed), opt);
  r.modelKind = kind;
  if (kind == ModelKind::sinusoid) {
    // Canonical form: V >= 0, phi in [0, 360).
    auto& q = r.params;
    if (q[1] < 0) {
      q[1] = -q[1];
      q[2] += 180.0;
    }
    q[2] = std::fmod(std::fmod(q[2], 360.0) + 360.0, 360.0);
  }
  return r;
}

}  // namespace afcmem::fitkit
