#pragma once

// Time-bin qubit storage with the double-write analysis, and the fidelity
// model built on the pole SNR.

#include <cmath>
#include <complex>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/detection.hpp"
#include "afcmem/fitkit.hpp"
#include "afcmem/rng.hpp"

namespace afcmem::qubit {

struct TimeBinQubit {
  double c1 = 1.0 / std::numbers::sqrt2;
  double c2 = 1.0 / std::numbers::sqrt2;
  double deltaAlpha = 0.0;     // degrees
  double binSeparation = 0.6;  // us
  double pulseFwhm = 0.26;     // us
  double muQ = 1.5;
};

inline void validate(const TimeBinQubit& q) {
  afcmem::detail::require(std::abs(q.c1 * q.c1 + q.c2 * q.c2 - 1.0) <= 1e-9, "qubit amplitudes must satisfy c1^2 + c2^2 = 1");
  afcmem::detail::require(q.muQ >= 0.0, "photons per qubit must be non-negative");
  afcmem::detail::require(q.binSeparation > 0.0 && q.pulseFwhm > 0.0, "bin separation and pulse width must be positive");
}

inline TimeBinQubit make_qubit(double theta, double deltaAlphaDeg, double muQ) {
  TimeBinQubit q;
  q.c1 = std::cos(theta);
  q.c2 = std::sin(theta);
  q.deltaAlpha = deltaAlphaDeg;
  q.muQ = muQ;
  return q;
}

struct DoubleWriteConfig {
  double deltaBeta = 0.0;        // degrees
  double writeSeparation = 0.6;  // us, must equal the qubit bin separation
  double alpha = 2.5;
  double mu1p = 0.11;
};

inline void validate(const DoubleWriteConfig& d) {
  afcmem::detail::require(d.alpha >= 1.0, "alpha must be >= 1");
  afcmem::detail::require(d.mu1p > 0.0, "mu1p must be positive");
  afcmem::detail::require(d.writeSeparation > 0.0, "write separation must be positive");
}

/// Mean photons per trial at the memory output in the three output bins.
struct TimeBinOutput {
  double ee = 0.0, central = 0.0, ll = 0.0;  // signal only
  double noisePerBin = 0.0;
  double ee_total() const { return ee + noisePerBin; }
  double central_total() const { return central + noisePerBin; }
  double ll_total() const { return ll + noisePerBin; }
};

/// Each input bin is split in two by the double write and the weaker write
/// pulses lose a factor alpha: a bin carrying c^2 mu_q photons puts
/// k c^2 mu_q into each of its two output bins, k = etaSW / (2 alpha). The
/// el and le paths meet in the central bin and add as amplitudes.
inline TimeBinOutput store_timebin(const TimeBinQubit& q, const DoubleWriteConfig& dw, double pN, double etaSW) {
  validate(q);
  validate(dw);
  afcmem::detail::require(std::abs(q.binSeparation - dw.writeSeparation) <= 1e-9,
                          "store_timebin: write separation must match the qubit bin separation");
  afcmem::detail::require(pN >= 0.0, "noise floor must be non-negative");
  afcmem::detail::require(afcmem::detail::in_unit_interval(etaSW), "efficiency must be in [0, 1]");
  const double k = etaSW / (2.0 * dw.alpha);
  const auto deg = kPi / 180.0;
  const std::complex<double> amp = q.c1 * std::polar(1.0, dw.deltaBeta * deg) + q.c2 * std::polar(1.0, q.deltaAlpha * deg);
  TimeBinOutput o;
  o.ee = k * q.c1 * q.c1 * q.muQ;
  o.ll = k * q.c2 * q.c2 * q.muQ;
  o.central = k * std::norm(amp) * q.muQ;
  o.noisePerBin = pN;
  return o;
}

// ---------------------------------------------------------------------------
// Fidelity model

/// Pole fidelity: (S + N)/(S + 2N) with SNR = mu_q / mu1p.
inline double fidelity_poles(double muQ, double mu1p) {
  afcmem::detail::require(muQ >= 0.0, "mu_q must be non-negative");
  afcmem::detail::require(mu1p > 0.0, "mu1p must be positive");
  return (muQ + mu1p) / (muQ + 2.0 * mu1p);
}

/// Fringe visibility: SNR / (SNR + 2 alpha).
inline double visibility_model(double muQ, double mu1p, double alpha) {
  afcmem::detail::require(muQ >= 0.0, "mu_q must be non-negative");
  afcmem::detail::require(mu1p > 0.0, "mu1p must be positive");
  afcmem::detail::require(alpha >= 1.0, "alpha must be >= 1");
  return muQ / (muQ + 2.0 * alpha * mu1p);
}

inline double fidelity_equator(double muQ, double mu1p, double alpha) {
  return 0.5 + 0.5 * visibility_model(muQ, mu1p, alpha);
}

struct FidelityRecord {
  double muQ = 0.0;
  double Fel = 0.0, Fpm = 0.0, Ftotal = 0.0, visibility = 0.0;
  double sigmaFel = 0.0, sigmaFpm = 0.0, sigmaFtotal = 0.0, sigmaVisibility = 0.0;
};

/// Model record with uncertainties propagated linearly from those of mu1p
/// and alpha (treated as independent).
inline FidelityRecord fidelity_total(double muQ, double mu1p, double alpha, double sigmaMu1p = 0.0,
                                     double sigmaAlpha = 0.0) {
  FidelityRecord r;
  r.muQ = muQ;
  r.Fel = fidelity_poles(muQ, mu1p);
  r.visibility = visibility_model(muQ, mu1p, alpha);
  r.Fpm = 0.5 + 0.5 * r.visibility;
  r.Ftotal = r.Fel / 3.0 + 2.0 * r.Fpm / 3.0;

  // Closed-form partial derivatives.
  const double dFel_dm = -muQ / ((muQ + 2 * mu1p) * (muQ + 2 * mu1p));
  const double den = muQ + 2 * alpha * mu1p;
  const double dV_dm = -2 * alpha * muQ / (den * den);
  const double dV_da = -2 * mu1p * muQ / (den * den);
  r.sigmaFel = std::abs(dFel_dm) * sigmaMu1p;
  r.sigmaVisibility = std::hypot(dV_dm * sigmaMu1p, dV_da * sigmaAlpha);
  r.sigmaFpm = 0.5 * r.sigmaVisibility;
  r.sigmaFtotal = std::hypot((dFel_dm / 3 + dV_dm / 3) * sigmaMu1p, dV_da / 3 * sigmaAlpha);
  return r;
}

// ---------------------------------------------------------------------------
// Fringe scans

inline std::vector<double> default_fringe_phases() {
  std::vector<double> b;
  for (int i = 0; i < 8; ++i) b.push_back(45.0 * i);
  return b;
}

/// Analytic central-bin means (signal + noise, memory output) versus deltaBeta.
inline std::vector<double> fringe_means(const TimeBinQubit& q, DoubleWriteConfig dw, const std::vector<double>& betas,
                                        double pN, double etaSW) {
  std::vector<double> out;
  out.reserve(betas.size());
  for (double b : betas) {
    dw.deltaBeta = b;
    out.push_back(store_timebin(q, dw, pN, etaSW).central_total());
  }
  return out;
}

struct FringeScan {
  std::vector<double> betas;
  std::vector<std::uint64_t> counts;
  std::vector<double> fitValues;
  fitkit::FitResult fit;
  double visibility = 0.0, sigmaVisibility = 0.0;
};

/// Photon-counting fringe: for each phase setting, `trialsPerPoint` trials of
/// the central window are counted through the detection chain, then the
/// sinusoid is fitted with Poisson weights.
inline FringeScan simulate_fringe(const TimeBinQubit& q, const DoubleWriteConfig& dw, const std::vector<double>& betas,
                                  double pN, double etaSW, const detection::DetectionChain& chain,
                                  std::uint64_t trialsPerPoint, std::uint64_t seed, unsigned workers = 1) {
  afcmem::detail::require(betas.size() >= 5, "simulate_fringe: need at least five phase settings");
  const auto means = fringe_means(q, dw, betas, pN, etaSW);
  FringeScan s;
  s.betas = betas;
  fitkit::Data d;
  detection::MonteCarloOptions opt;
  opt.workers = workers;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    detection::BinnedMeans bm;
    bm.binEdges = {0.0, 1.0};
    bm.means = {means[i] * chain.transmission()};
    bm.windows = {{"central", 0.0, 1.0}};
    const auto h = detection::simulate_counting(bm, trialsPerPoint, rng::splitmix64(seed ^ (0x51ed27ULL + i)), opt);
    const auto c = h.window_sum("central");
    s.counts.push_back(c);
    d.x.push_back(betas[i]);
    d.y.push_back(static_cast<double>(c));
    d.sigma.push_back(std::sqrt(std::max<double>(static_cast<double>(c), 1.0)));
  }
  // Start from the analytic fringe shape.
  double mean = 0.0;
  for (double y : d.y) mean += y / static_cast<double>(d.size());
  const double amp0 = std::max(mean, 1.0);
  s.fit = fitkit::fit(d, fitkit::ModelKind::sinusoid, {amp0, 0.5, std::fmod(q.deltaAlpha + 360.0, 360.0), 0.0});
  for (double b : betas) s.fitValues.push_back(fitkit::sinusoid_model()(s.fit.params, b));
  s.visibility = s.fit.param("V");
  s.sigmaVisibility = s.fit.sigma("V");
  return s;
}

/// Columns delta_beta_deg, counts, fit_value.
inline void write_fringe_csv(std::ostream& os, const FringeScan& s) {
  os << "delta_beta_deg,counts,fit_value\n" << std::setprecision(10);
  for (std::size_t i = 0; i < s.betas.size(); ++i)
    os << s.betas[i] << ',' << s.counts[i] << ',' << s.fitValues[i] << '\n';
}

}  // namespace afcmem::qubit
