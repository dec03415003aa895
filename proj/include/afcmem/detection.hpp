#pragma once

// Noise sources, filtering, expected count rates, photon-counting Monte Carlo
// and SNR estimation.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/rng.hpp"
#include "afcmem/spinwave.hpp"

namespace afcmem::detection {

/// Optical path from the memory output to the detector.
struct DetectionChain {
  double pathTransmission = 0.13;  // cryostat -> detector, fibre coupling included
  double fiberCoupling = 0.60;     // informational; part of pathTransmission
  double detectorEfficiency = 0.60;
  double darkRate = 10.0;          // Hz
  double gateWindow = 0.7;         // us
  double spatialExtinction = 1e-5; // control -> signal mode
  double gratingAttenuation = 1e-3;

  /// Photons at the memory output -> detector clicks.
  double transmission() const { return pathTransmission * detectorEfficiency; }
  /// Dark counts per gate.
  double dark_per_gate() const { return darkRate * gateWindow * 1e-6; }
};

inline void validate(const DetectionChain& c) {
  for (double v : {c.pathTransmission, c.fiberCoupling, c.detectorEfficiency, c.spatialExtinction,
                   c.gratingAttenuation})
    afcmem::detail::require(afcmem::detail::in_unit_interval(v), "detection chain factors must be in [0, 1]");
  afcmem::detail::require(c.darkRate >= 0.0, "dark count rate must be non-negative");
  afcmem::detail::require(c.gateWindow > 0.0, "gate window must be positive");
}

enum class FilterMode { hole, widePit, bypassed };

inline const char* to_string(FilterMode m) {
  switch (m) {
    case FilterMode::hole: return "hole";
    case FilterMode::widePit: return "wide_pit";
    case FilterMode::bypassed: return "bypassed";
  }
  return "?";
}

/// Spectral filter crystal. A narrow hole absorbs the control frequency
/// (extinction controlExtinction); the wide pit and the bypass do not.
struct FilterConfig {
  FilterMode mode = FilterMode::hole;
  double holeWidth = 2.0;  // MHz
  double controlExtinction = 750.0;
  double signalPassLoss = 0.10;  // included in the chain's path transmission

  static FilterConfig hole(double width) { return {FilterMode::hole, width, 750.0, 0.10}; }
  static FilterConfig wide_pit(double width = 14.0) { return {FilterMode::widePit, width, 750.0, 0.10}; }
  static FilterConfig bypassed() { return {FilterMode::bypassed, 0.0, 750.0, 0.10}; }

  /// Spectral width passed by the filter; zero when bypassed.
  double passband() const { return mode == FilterMode::bypassed ? 0.0 : holeWidth; }
};

inline void validate(const FilterConfig& f) {
  if (f.mode != FilterMode::bypassed) afcmem::detail::require(f.holeWidth > 0.0, "filter hole width must be positive");
  afcmem::detail::require(f.controlExtinction >= 1.0, "control extinction must be >= 1");
  afcmem::detail::require(afcmem::detail::in_unit_interval(f.signalPassLoss), "signal pass loss must be in [0, 1]");
}

/// Per control pulse, referred to the memory output:
///   fluorescence passing the hole:  fluorDensity * passband
///   broadband fluorescence floor:   broadband * (gratingAttenuation if filtered, else 1)
///   gated control leakage:          leakage / (controlExtinction if a narrow hole, else 1)
/// Both control pulses contribute equally.
struct NoiseModel {
  double fluorDensity = 0.0;  // photons / MHz / pulse
  double broadband = 0.0;     // photons / pulse
  double leakage = 0.0;       // photons / pulse
  int controlPulses = 2;
  bool calibrated = false;
};

struct NoiseAnchor {
  FilterConfig filter;
  double pN = 0.0;      // measured noise floor, photons per trial at the memory output
  double sigma = 0.0;   // stated uncertainty
};

/// The three anchors quoted for the setup: 2 MHz hole, 14 MHz pit, bypass.
inline std::vector<NoiseAnchor> default_anchors() {
  return {{FilterConfig::hole(2.0), 2.0e-3, 0.3e-3},
          {FilterConfig::wide_pit(14.0), 2.3e-2, 0.6e-2},
          {FilterConfig::bypassed(), 0.23, 0.01}};
}

struct NoiseBudget {
  double fluorescence = 0.0;  // hole-passing fluorescence
  double broadband = 0.0;
  double leakage = 0.0;
  double darkReferred = 0.0;  // dark counts divided by the chain transmission
  double sources() const { return fluorescence + broadband + leakage; }
  double total() const { return sources() + darkReferred; }  // quoted p_N
};

namespace detail {

/// Coefficients (per pulse) multiplying (fluorDensity, broadband, leakage).
inline std::array<double, 3> source_weights(const DetectionChain& c, const FilterConfig& f) {
  const bool filtered = f.mode != FilterMode::bypassed;
  return {f.passband(), filtered ? c.gratingAttenuation : 1.0,
          f.mode == FilterMode::hole ? 1.0 / f.controlExtinction : 1.0};
}

}  // namespace detail

inline NoiseBudget noise_budget(const DetectionChain& chain, const FilterConfig& filter, const NoiseModel& m) {
  if (!m.calibrated) throw InvalidArgument("noise_budget: noise model is not calibrated");
  validate(chain);
  validate(filter);
  afcmem::detail::require(m.controlPulses >= 0, "control pulse count must be non-negative");
  const auto w = detail::source_weights(chain, filter);
  const double n = static_cast<double>(m.controlPulses);
  NoiseBudget b;
  b.fluorescence = n * m.fluorDensity * w[0];
  b.broadband = n * m.broadband * w[1];
  b.leakage = n * m.leakage * w[2];
  b.darkReferred = chain.dark_per_gate() / chain.transmission();
  return b;
}

/// Solves the anchor equations for the three source strengths. Anchors are
/// matched exactly when there are as many anchors as free parameters; extra
/// anchors are fitted by weighted least squares. `freeParams` selects which of
/// (fluorDensity, broadband, leakage) are fitted, in that order; the rest stay 0.
inline NoiseModel calibrate_noise(const std::vector<NoiseAnchor>& anchors, const DetectionChain& chain = {},
                                  std::array<bool, 3> freeParams = {true, true, true}, int controlPulses = 2) {
  validate(chain);
  std::vector<int> cols;
  for (int j = 0; j < 3; ++j)
    if (freeParams[static_cast<std::size_t>(j)]) cols.push_back(j);
  afcmem::detail::require(!cols.empty(), "calibrate_noise: no free parameters");
  afcmem::detail::require(anchors.size() >= cols.size(), "calibrate_noise: fewer anchors than free parameters");
  afcmem::detail::require(controlPulses >= 1, "calibrate_noise: need at least one control pulse");
  const double dark = chain.dark_per_gate() / chain.transmission();
  const auto nA = static_cast<Eigen::Index>(anchors.size());
  const auto nP = static_cast<Eigen::Index>(cols.size());
  Eigen::MatrixXd A(nA, nP);
  Eigen::VectorXd y(nA);
  for (Eigen::Index i = 0; i < nA; ++i) {
    const auto& a = anchors[static_cast<std::size_t>(i)];
    validate(a.filter);
    const double wgt = a.sigma > 0.0 ? 1.0 / a.sigma : 1.0;
    const auto w = detail::source_weights(chain, a.filter);
    for (Eigen::Index j = 0; j < nP; ++j)
      A(i, j) = wgt * controlPulses * w[static_cast<std::size_t>(cols[static_cast<std::size_t>(j)])];
    y(i) = wgt * (a.pN - dark);
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < nP) throw NumericalError("calibrate_noise: anchors do not determine the noise sources");
  const Eigen::VectorXd x = qr.solve(y);
  NoiseModel m;
  m.controlPulses = controlPulses;
  double* fields[3] = {&m.fluorDensity, &m.broadband, &m.leakage};
  const char* names[3] = {"fluorescence density", "broadband fluorescence", "control leakage"};
  for (Eigen::Index j = 0; j < nP; ++j) {
    const auto col = static_cast<std::size_t>(cols[static_cast<std::size_t>(j)]);
    if (x(j) < -1e-15)
      throw InvalidArgument(std::string("calibrate_noise: infeasible anchors (negative ") + names[col] + ")");
    *fields[col] = std::max(x(j), 0.0);
  }
  m.calibrated = true;
  return m;
}

// ---------------------------------------------------------------------------
// Expected counts

struct ExpectedCounts {
  double signal = 0.0;      // echo photons detected per trial
  double echoWindow = 0.0;  // signal + noise
  double noiseWindow = 0.0;
  double snr = 0.0;
  double tChain = 0.0;
};

/// pN is the noise at the memory output excluding dark counts (see
/// NoiseBudget::sources); dark counts are added at the detector.
inline ExpectedCounts expected_counts(double muIn, const spinwave::EfficiencyBreakdown& eff,
                                      const DetectionChain& chain, double pN, double captureFraction = 1.0) {
  afcmem::detail::require(muIn >= 0.0, "mean input photon number must be non-negative");
  afcmem::detail::require(pN >= 0.0, "noise floor must be non-negative");
  afcmem::detail::require(afcmem::detail::in_unit_interval(captureFraction), "capture fraction must be in [0, 1]");
  validate(chain);
  ExpectedCounts e;
  e.tChain = chain.transmission();
  e.signal = muIn * eff.etaSW * captureFraction * e.tChain;
  e.noiseWindow = pN * e.tChain + chain.dark_per_gate();
  e.echoWindow = e.signal + e.noiseWindow;
  e.snr = e.noiseWindow > 0.0 ? (e.echoWindow - e.noiseWindow) / e.noiseWindow
                              : std::numeric_limits<double>::infinity();
  return e;
}

/// Input photon number at which SNR = 1: p_N / (eta_SW * capture), with p_N
/// the quoted (dark-inclusive) noise floor.
inline double mu_one(double pNQuoted, double etaSW, double captureFraction = 1.0) {
  afcmem::detail::require(etaSW > 0.0 && captureFraction > 0.0, "mu_1 needs positive efficiency");
  return pNQuoted / (etaSW * captureFraction);
}

// ---------------------------------------------------------------------------
// Histograms

struct TimeWindow {
  std::string name;
  double start = 0.0, end = 0.0;  // us
  double width() const { return end - start; }
};

struct CountHistogram {
  std::vector<double> binEdges;  // us, size = bins + 1
  std::vector<std::uint64_t> counts;
  std::uint64_t trials = 0;
  std::vector<TimeWindow> windows;

  std::size_t bins() const { return counts.size(); }
  const TimeWindow& window(const std::string& name) const {
    for (const auto& w : windows)
      if (w.name == name) return w;
    throw InvalidArgument("histogram has no window named '" + name + "'");
  }
  /// Sum over bins whose centre lies inside the window.
  std::uint64_t window_sum(const std::string& name) const {
    const auto& w = window(name);
    std::uint64_t s = 0;
    for (std::size_t i = 0; i < bins(); ++i) {
      const double c = 0.5 * (binEdges[i] + binEdges[i + 1]);
      if (c >= w.start && c < w.end) s += counts[i];
    }
    return s;
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

/// Per-trial mean counts per bin, with the same layout as a histogram.
struct BinnedMeans {
  std::vector<double> binEdges;
  std::vector<double> means;
  std::vector<TimeWindow> windows;

  const TimeWindow& window(std::size_t i) const { return windows.at(i); }
  double window_mean(const std::string& name) const {
    for (const auto& w : windows)
      if (w.name == name) {
        double s = 0.0;
        for (std::size_t i = 0; i < means.size(); ++i) {
          const double c = 0.5 * (binEdges[i] + binEdges[i + 1]);
          if (c >= w.start && c < w.end) s += means[i];
        }
        return s;
      }
    throw InvalidArgument("no window named '" + name + "'");
  }
};

/// Time axis of a storage trial: transmitted input at t = 0, retrieved echo at
/// the total storage time, noise window of equal width after the echo.
struct HistogramLayout {
  double binWidth = 0.05;
  double tStart = -1.5;
  double tEnd = 16.0;
  double echoTime = 12.8;
  double windowWidth = 0.7;
  double noiseGap = 0.5;        // between echo and noise windows
  double inputFwhm = 0.43;
  double echoFwhm = 0.43;

  /// Default layout with the time axis stretched to hold the noise window.
  static HistogramLayout for_echo_time(double echoTime) {
    HistogramLayout L;
    L.echoTime = echoTime;
    L.tEnd = std::max(L.tEnd, echoTime + 1.5 * L.windowWidth + L.noiseGap + 1.0);
    return L;
  }
};

inline BinnedMeans detection_profile(const HistogramLayout& L, double inputMean, double echoSignal,
                                     double noiseWindowMean) {
  afcmem::detail::require(L.binWidth > 0.0 && L.tEnd > L.tStart, "histogram layout: bad time axis");
  afcmem::detail::require(inputMean >= 0.0 && echoSignal >= 0.0 && noiseWindowMean >= 0.0,
                          "histogram means must be non-negative");
  const auto nb = static_cast<std::size_t>(std::llround((L.tEnd - L.tStart) / L.binWidth));
  BinnedMeans b;
  b.binEdges.resize(nb + 1);
  for (std::size_t i = 0; i <= nb; ++i) b.binEdges[i] = L.tStart + static_cast<double>(i) * L.binWidth;
  const double echoLo = L.echoTime - L.windowWidth / 2;
  const double noiseLo = L.echoTime + L.windowWidth / 2 + L.noiseGap;
  b.windows = {{"input", -L.windowWidth / 2, L.windowWidth / 2},
               {"echo", echoLo, echoLo + L.windowWidth},
               {"noise", noiseLo, noiseLo + L.windowWidth}};
  afcmem::detail::require(b.windows[2].end <= L.tEnd && b.windows[0].start >= L.tStart,
                          "histogram layout: windows outside the time axis");

  // Gaussian pulse shapes integrated over bins; each scaled so that its sum
  // over the matching window equals the requested window mean.
  auto shape = [&](double centre, double fwhm) {
    std::vector<double> v(nb);
    const double s = fwhm / kFwhmPerSigma * std::sqrt(2.0);
    for (std::size_t i = 0; i < nb; ++i)
      v[i] = 0.5 * (std::erf((b.binEdges[i + 1] - centre) / s) - std::erf((b.binEdges[i] - centre) / s));
    return v;
  };
  auto in_window = [&](std::size_t i, const TimeWindow& w) {
    const double c = 0.5 * (b.binEdges[i] + b.binEdges[i + 1]);
    return c >= w.start && c < w.end;
  };
  auto scaled = [&](std::vector<double> v, const TimeWindow& w, double target) {
    double s = 0.0;
    for (std::size_t i = 0; i < nb; ++i)
      if (in_window(i, w)) s += v[i];
    for (auto& x : v) x = s > 0.0 ? x * target / s : 0.0;
    return v;
  };
  const auto in = scaled(shape(0.0, L.inputFwhm), b.windows[0], inputMean);
  const auto echo = scaled(shape(L.echoTime, L.echoFwhm), b.windows[1], echoSignal);
  // Flat noise, normalised on the noise window.
  std::vector<double> flat(nb, 1.0);
  const auto noise = scaled(flat, b.windows[2], noiseWindowMean);
  b.means.resize(nb);
  for (std::size_t i = 0; i < nb; ++i) b.means[i] = in[i] + echo[i] + noise[i];
  return b;
}

struct MonteCarloOptions {
  unsigned workers = 1;
};

/// Independent Poisson counts per bin and trial. Each trial draws its total
/// from Poisson(sum of means) and assigns clicks to bins categorically, which
/// is the same law. Trial t uses stream (seed, t); partial histograms merge by
/// integer addition, so the result does not depend on the worker count.
inline CountHistogram simulate_counting(const BinnedMeans& m, std::uint64_t trials, std::uint64_t seed,
                                        const MonteCarloOptions& opt = {}) {
  afcmem::detail::require(trials >= 1, "simulate_counting: need at least one trial");
  for (double v : m.means) afcmem::detail::require(v >= 0.0 && std::isfinite(v), "bin means must be non-negative");
  const std::size_t nb = m.means.size();
  std::vector<double> cdf(nb);
  double total = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    total += m.means[i];
    cdf[i] = total;
  }
  CountHistogram h;
  h.binEdges = m.binEdges;
  h.windows = m.windows;
  h.trials = trials;
  h.counts.assign(nb, 0);
  if (total <= 0.0) return h;

  auto run = [&](std::uint64_t lo, std::uint64_t hi, std::vector<std::uint64_t>& acc) {
    for (std::uint64_t t = lo; t < hi; ++t) {
      rng::Stream s(seed, t);
      const auto k = rng::poisson(total, s);
      for (std::uint64_t j = 0; j < k; ++j) {
        const double u = s.uniform() * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        ++acc[static_cast<std::size_t>(it - cdf.begin())];
      }
    }
  };
  const unsigned w = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(std::min<std::uint64_t>(trials, 1024))));
  if (w == 1) {
    run(0, trials, h.counts);
    return h;
  }
  std::vector<std::vector<std::uint64_t>> parts(w, std::vector<std::uint64_t>(nb, 0));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errs(w);
  for (unsigned k = 0; k < w; ++k)
    pool.emplace_back([&, k] {
      try {
        run(trials * k / w, trials * (k + 1) / w, parts[k]);
      } catch (...) {
        errs[k] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
  for (const auto& p : parts)
    for (std::size_t i = 0; i < nb; ++i) h.counts[i] += p[i];
  return h;
}

struct SnrEstimate {
  double snr = 0.0;
  double sigma = 0.0;
  bool infinite = false;  // noise window empty
  std::uint64_t S = 0, N = 0;
};

/// SNR = (S - N)/N over matched echo and noise windows, with Poisson error
/// propagation: sigma^2 = S/N^2 + S^2/N^3.
inline SnrEstimate snr_from_counts(std::uint64_t S, std::uint64_t N) {
  SnrEstimate e;
  e.S = S;
  e.N = N;
  if (N == 0) {
    e.infinite = true;
    e.snr = std::numeric_limits<double>::infinity();
    e.sigma = std::numeric_limits<double>::infinity();
    return e;
  }
  const double s = static_cast<double>(S), n = static_cast<double>(N);
  e.snr = (s - n) / n;
  e.sigma = std::sqrt(s / (n * n) + s * s / (n * n * n));
  return e;
}

inline SnrEstimate snr_from_histogram(const CountHistogram& h) {
  const auto& we = h.window("echo");
  const auto& wn = h.window("noise");
  afcmem::detail::require(wn.width() > 0.0, "snr_from_histogram: noise window is empty");
  afcmem::detail::require(std::abs(we.width() - wn.width()) <= 1e-9, "snr_from_histogram: windows must have equal width");
  return snr_from_counts(h.window_sum("echo"), h.window_sum("noise"));
}

/// Columns bin_start_us, bin_end_us, counts.
inline void write_histogram_csv(std::ostream& os, const CountHistogram& h) {
  os << "bin_start_us,bin_end_us,counts\n" << std::setprecision(10);
  for (std::size_t i = 0; i < h.bins(); ++i)
    os << h.binEdges[i] << ',' << h.binEdges[i + 1] << ',' << h.counts[i] << '\n';
}

}  // namespace afcmem::detection
