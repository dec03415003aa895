#pragma once

// Hyperfine level scheme of Pr3+:Y2SiO5 (site 1), ion classes, optical-pumping
// simulation of spectral hole burning, and analytic comb synthesis/analysis.
//
// Frequencies are MHz offsets from the comb centre, which is placed on the
// 1/2g-3/2e transition of the reference ion class.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "afcmem/common.hpp"
#include "afcmem/fitkit.hpp"

namespace afcmem::spectrum {

/// Ground (g) and excited (e) hyperfine levels, indexed by |m_I|: 1/2, 3/2, 5/2.
enum Level : int { half = 0, threeHalf = 1, fiveHalf = 2 };

using Table3 = std::array<std::array<double, 3>, 3>;

/// Relative oscillator strengths [ground][excited] for Pr:YSO site 1, taken
/// from published absorption measurements.
/// Normalised to a doubly stochastic table by build_level_scheme.
inline constexpr Table3 kPrYsoStrengths = {{
    {0.55, 0.38, 0.07},
    {0.40, 0.60, 0.01},
    {0.05, 0.02, 0.93},
}};

/// (1/2g-3/2g, 3/2g-5/2g) in MHz.
inline constexpr std::array<double, 2> kPrYsoGroundSplittings = {10.2, 17.3};
/// (1/2e-3/2e, 3/2e-5/2e) in MHz.
inline constexpr std::array<double, 2> kPrYsoExcitedSplittings = {4.6, 4.8};

struct Transition {
  int ground = half;
  int excited = threeHalf;

  friend bool operator==(const Transition&, const Transition&) = default;
};

class HyperfineScheme {
 public:
  std::array<double, 2> groundSplittings{};
  std::array<double, 2> excitedSplittings{};
  Table3 branching{};  // doubly stochastic after construction

  double ground_energy(int g) const {
    return g == 0 ? 0.0 : g == 1 ? groundSplittings[0] : groundSplittings[0] + groundSplittings[1];
  }
  double excited_energy(int e) const {
    return e == 0 ? 0.0 : e == 1 ? excitedSplittings[0] : excitedSplittings[0] + excitedSplittings[1];
  }

  /// Frequency of g->e relative to 1/2g->3/2e of the same ion.
  double transition_offset(int g, int e) const {
    return (excited_energy(e) - ground_energy(g)) - (excited_energy(threeHalf) - ground_energy(half));
  }

  /// Input (1/2g-3/2e) minus control (3/2g-3/2e) frequency.
  double input_control_separation() const {
    return transition_offset(half, threeHalf) - transition_offset(threeHalf, threeHalf);
  }

  double max_abs_transition_offset() const {
    double m = 0.0;
    for (int g = 0; g < 3; ++g)
      for (int e = 0; e < 3; ++e) m = std::max(m, std::abs(transition_offset(g, e)));
    return m;
  }
};

/// Validates splittings and normalises the strength table (Sinkhorn scaling
/// until rows and columns sum to one).
inline HyperfineScheme build_level_scheme(std::array<double, 2> ground,
                                          std::array<double, 2> excited,
                                          Table3 strengths = kPrYsoStrengths) {
  for (double s : ground) afcmem::detail::require(s > 0.0, "hyperfine splittings must be positive");
  for (double s : excited) afcmem::detail::require(s > 0.0, "hyperfine splittings must be positive");
  for (const auto& row : strengths) {
    double sum = 0.0;
    for (double v : row) {
      afcmem::detail::require(v >= 0.0 && std::isfinite(v), "branching table entries must be non-negative");
      sum += v;
    }
    afcmem::detail::require(sum > 0.0, "branching table has a row of zeros");
  }
  for (int e = 0; e < 3; ++e)
    afcmem::detail::require(strengths[0][e] + strengths[1][e] + strengths[2][e] > 0.0,
                    "branching table has a column of zeros");

  Table3 t = strengths;
  for (int iter = 0; iter < 10000; ++iter) {
    double err = 0.0;
    for (auto& row : t) {
      const double s = row[0] + row[1] + row[2];
      for (double& v : row) v /= s;
    }
    for (int e = 0; e < 3; ++e) {
      const double s = t[0][e] + t[1][e] + t[2][e];
      for (int g = 0; g < 3; ++g) t[g][e] /= s;
    }
    for (const auto& row : t) err = std::max(err, std::abs(row[0] + row[1] + row[2] - 1.0));
    if (err < 1e-14) break;
  }
  HyperfineScheme s;
  s.groundSplittings = ground;
  s.excitedSplittings = excited;
  s.branching = t;
  return s;
}

inline HyperfineScheme pr_yso_scheme() {
  return build_level_scheme(kPrYsoGroundSplittings, kPrYsoExcitedSplittings);
}

struct IonClass {
  double classOffset = 0.0;  // MHz; position of this class's 1/2g-3/2e line
  Transition resonantTransition;
};

/// The nine classes whose (g, e) transition falls on the comb centre.
inline std::vector<IonClass> enumerate_classes(const HyperfineScheme& s) {
  std::vector<IonClass> out;
  for (int g = 0; g < 3; ++g)
    for (int e = 0; e < 3; ++e) out.push_back({-s.transition_offset(g, e), {g, e}});
  return out;
}

// ---------------------------------------------------------------------------
// Spectral grid

/// Ground-state populations of a continuum of ions, labelled by the position
/// of their 1/2g-3/2e line. Ion k sits at frequency(0) + (k - margin) * spacing.
struct PopulationModel {
  HyperfineScheme scheme;
  double inhomogeneousDepth = 0.0;  // depth of the unpumped line
  long margin = 0;
  std::vector<std::array<double, 3>> fractions;
};

struct SpectralGrid {
  double spacing = 0.005;            // MHz
  std::vector<double> frequencies;   // symmetric about 0, odd count
  std::vector<double> opticalDepth;  // d(nu) >= 0
  std::optional<PopulationModel> populations;

  std::size_t size() const { return frequencies.size(); }
  double half_width() const { return frequencies.empty() ? 0.0 : frequencies.back(); }

  /// Index of the sample nearest to nu (clamped).
  std::size_t index_of(double nu) const {
    const double pos = (nu - frequencies.front()) / spacing;
    const long i = std::lround(pos);
    return static_cast<std::size_t>(std::clamp<long>(i, 0, static_cast<long>(size()) - 1));
  }

  /// Linear interpolation of d(nu); constant extension beyond the window.
  double depth_at(double nu) const {
    const double pos = (nu - frequencies.front()) / spacing;
    if (pos <= 0) return opticalDepth.front();
    const auto last = static_cast<double>(size() - 1);
    if (pos >= last) return opticalDepth.back();
    const auto i = static_cast<std::size_t>(pos);
    const double w = pos - static_cast<double>(i);
    return opticalDepth[i] * (1 - w) + opticalDepth[i + 1] * w;
  }
};

inline constexpr double kMaxGridSpacing = 0.010;  // MHz

/// Uniform grid over [-halfWidth, halfWidth] with constant depth.
inline SpectralGrid make_flat_grid(double halfWidth, double spacing, double depth = 0.0) {
  afcmem::detail::require(spacing > 0.0 && spacing <= kMaxGridSpacing,
                  "grid spacing must be in (0, 10 kHz]");
  afcmem::detail::require(halfWidth > 0.0, "grid half-width must be positive");
  afcmem::detail::require(depth >= 0.0, "optical depth must be non-negative");
  const long half = std::lround(halfWidth / spacing);
  SpectralGrid g;
  g.spacing = spacing;
  g.frequencies.resize(static_cast<std::size_t>(2 * half + 1));
  for (long i = -half; i <= half; ++i)
    g.frequencies[static_cast<std::size_t>(i + half)] = static_cast<double>(i) * spacing;
  g.opticalDepth.assign(g.frequencies.size(), depth);
  return g;
}

/// d(nu) = D_inh * sum_{g,e} S_ge * rho_g(nu - offset_ge). A uniformly mixed
/// line (rho = 1/3) has depth D_inh.
inline std::vector<double> depth_from_populations(const PopulationModel& pm, std::size_t nFreq,
                                                  double spacing) {
  std::vector<double> d(nFreq, 0.0);
  const auto nIon = static_cast<long>(pm.fractions.size());
  for (int g = 0; g < 3; ++g)
    for (int e = 0; e < 3; ++e) {
      const double w = pm.inhomogeneousDepth * pm.scheme.branching[static_cast<std::size_t>(g)][static_cast<std::size_t>(e)];
      const long shift = std::lround(pm.scheme.transition_offset(g, e) / spacing);
      for (std::size_t i = 0; i < nFreq; ++i) {
        const long k = static_cast<long>(i) + pm.margin - shift;
        if (k >= 0 && k < nIon) d[i] += w * pm.fractions[static_cast<std::size_t>(k)][static_cast<std::size_t>(g)];
      }
    }
  return d;
}

/// Unpumped crystal: equal ground populations, depth D_inh everywhere.
inline SpectralGrid make_crystal_grid(const HyperfineScheme& scheme, double halfWidth,
                                      double spacing, double inhomogeneousDepth) {
  afcmem::detail::require(inhomogeneousDepth >= 0.0, "inhomogeneous depth must be non-negative");
  SpectralGrid g = make_flat_grid(halfWidth, spacing);
  PopulationModel pm;
  pm.scheme = scheme;
  pm.inhomogeneousDepth = inhomogeneousDepth;
  pm.margin = std::lround(scheme.max_abs_transition_offset() / spacing) + 2;
  pm.fractions.assign(g.size() + 2 * static_cast<std::size_t>(pm.margin), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  g.opticalDepth = depth_from_populations(pm, g.size(), spacing);
  g.populations = std::move(pm);
  return g;
}

// ---------------------------------------------------------------------------
// Optical pumping

struct PumpStep {
  double centerFrequency = 0.0;  // MHz
  double sweepWidth = 0.0;       // MHz, 0 for a single-frequency burn
  double durationMs = 1.0;
  std::optional<Transition> targetTransition;  // label only; every resonant line is driven
  double pumpStrength = 1.0;                   // saturation parameter
  double linewidth = 0.02;                     // FWHM of the pump spectral profile, MHz
};

struct PumpSequence {
  std::vector<PumpStep> steps;
};

struct PumpingOptions {
  double roundsPerMs = 10.0;  // pump-decay rounds per millisecond of pumping
};

namespace detail {

using Mat3 = std::array<std::array<double, 3>, 3>;

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k)
      for (int j = 0; j < 3; ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat3 mat_pow(Mat3 base, long n) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i) r[i][i] = 1.0;
  while (n > 0) {
    if (n & 1) r = mat_mul(base, r);
    base = mat_mul(base, base);
    n >>= 1;
  }
  return r;
}

/// Fraction of a sweep's exposure seen by a line at frequency r. Equals 1
/// inside a wide sweep and reduces to the Gaussian pump profile when the
/// sweep width is zero.
inline double addressing(double r, const PumpStep& step) {
  const double sigma = step.linewidth / kFwhmPerSigma;
  const double c = step.centerFrequency;
  if (step.sweepWidth <= 0.0) {
    const double z = (r - c) / sigma;
    return std::exp(-0.5 * z * z);
  }
  const double q = sigma * std::sqrt(2.0);
  const double lo = c - step.sweepWidth / 2, hi = c + step.sweepWidth / 2;
  return (std::erf((hi - r) / q) - std::erf((lo - r) / q)) /
         (2.0 * std::erf(step.sweepWidth / (2.0 * q)));
}

inline void validate_step(const SpectralGrid& grid, const PumpStep& s) {
  afcmem::detail::require(s.durationMs > 0.0, "pump step duration must be positive");
  afcmem::detail::require(s.sweepWidth >= 0.0, "pump sweep width must be non-negative");
  afcmem::detail::require(s.pumpStrength >= 0.0, "pump strength must be non-negative");
  afcmem::detail::require(s.linewidth > 0.0, "pump linewidth must be positive");
  const double narrowest = s.sweepWidth > 0.0 ? std::min(s.sweepWidth, s.linewidth) : s.linewidth;
  if (grid.spacing > narrowest / 3.0)
    throw InvalidArgument("grid too coarse for pump step at " + std::to_string(s.centerFrequency) + " MHz");
  const double lo = s.centerFrequency - s.sweepWidth / 2, hi = s.centerFrequency + s.sweepWidth / 2;
  if (lo < grid.frequencies.front() - 1e-9 || hi > grid.frequencies.back() + 1e-9)
    throw InvalidArgument("pump sweep outside grid window at " + std::to_string(s.centerFrequency) + " MHz");
}

}  // namespace detail

/// Iterated pump-decay rounds. Per round, an ion whose g->e line lies under
/// the pump profile is excited with probability k * S_ge * A (k = s/(2(1+s)))
/// and the excited fraction returns to the ground states with the branching
/// ratios S_g'e. A step of duration T applies ceil(T * roundsPerMs) rounds.
inline SpectralGrid simulate_pumping(const SpectralGrid& grid, const PumpSequence& seq,
                                     const PumpingOptions& opt = {}) {
  if (!grid.populations) throw InvalidArgument("simulate_pumping: grid carries no ion populations");
  for (const auto& s : seq.steps) detail::validate_step(grid, s);
  SpectralGrid out = grid;
  if (seq.steps.empty()) return out;

  auto& pm = *out.populations;
  const auto& S = pm.scheme.branching;
  const auto nIon = static_cast<long>(pm.fractions.size());
  const double f0 = grid.frequencies.front();
  auto ion_freq = [&](long k) { return f0 + static_cast<double>(k - pm.margin) * grid.spacing; };

  for (const auto& step : seq.steps) {
    const long rounds = std::max<long>(1, static_cast<long>(std::ceil(step.durationMs * opt.roundsPerMs - 1e-9)));
    const double k = 0.5 * step.pumpStrength / (1.0 + step.pumpStrength);
    if (k <= 0.0) continue;
    const double reach = step.sweepWidth / 2 + 8.0 * step.linewidth / kFwhmPerSigma;

    // Ions with at least one line under the pump profile.
    std::vector<char> touched(static_cast<std::size_t>(nIon), 0);
    for (int g = 0; g < 3; ++g)
      for (int e = 0; e < 3; ++e) {
        const double off = pm.scheme.transition_offset(g, e);
        const long kLo = std::lround((step.centerFrequency - reach - off - f0) / grid.spacing) + pm.margin - 1;
        const long kHi = std::lround((step.centerFrequency + reach - off - f0) / grid.spacing) + pm.margin + 1;
        for (long i = std::max<long>(kLo, 0); i <= std::min<long>(kHi, nIon - 1); ++i)
          touched[static_cast<std::size_t>(i)] = 1;
      }

    for (long i = 0; i < nIon; ++i) {
      if (!touched[static_cast<std::size_t>(i)]) continue;
      const double x = ion_freq(i);
      // One round as a column-stochastic map on (rho_1/2, rho_3/2, rho_5/2).
      detail::Mat3 M{};
      for (int g = 0; g < 3; ++g) {
        std::array<double, 3> p{};
        double out_g = 0.0;
        for (int e = 0; e < 3; ++e) {
          p[static_cast<std::size_t>(e)] = k * S[static_cast<std::size_t>(g)][static_cast<std::size_t>(e)] *
                                           detail::addressing(x + pm.scheme.transition_offset(g, e), step);
          out_g += p[static_cast<std::size_t>(e)];
        }
        if (out_g > 1.0) {
          for (double& v : p) v /= out_g;
          out_g = 1.0;
        }
        M[static_cast<std::size_t>(g)][static_cast<std::size_t>(g)] += 1.0 - out_g;
        for (int e = 0; e < 3; ++e)
          for (int h = 0; h < 3; ++h)
            M[static_cast<std::size_t>(h)][static_cast<std::size_t>(g)] +=
                p[static_cast<std::size_t>(e)] * S[static_cast<std::size_t>(h)][static_cast<std::size_t>(e)];
      }
      const auto R = detail::mat_pow(M, rounds);
      auto& rho = pm.fractions[static_cast<std::size_t>(i)];
      std::array<double, 3> next{};
      for (int h = 0; h < 3; ++h)
        for (int g = 0; g < 3; ++g)
          next[static_cast<std::size_t>(h)] += R[static_cast<std::size_t>(h)][static_cast<std::size_t>(g)] * rho[static_cast<std::size_t>(g)];
      // Columns of R sum to one; renormalise away the rounding drift.
      const double sum = next[0] + next[1] + next[2];
      for (double& v : next) v = std::max(v, 0.0) / sum;
      rho = next;
    }
  }
  out.opticalDepth = depth_from_populations(pm, out.size(), out.spacing);
  return out;
}

/// Knobs of the memory preparation: pit, burn-back, clean, then repeated
/// comb burning with interleaved clean pulses.
struct PreparationSettings {
  double pitWidth = 14.0;
  double pitDurationMs = 100.0;
  double pitStrength = 10.0;
  double pitLinewidth = 0.02;
  double burnBackWidth = 2.0;
  double burnBackDurationMs = 10.0;
  double burnBackStrength = 10.0;
  double burnBackLinewidth = 2.0;
  double cleanWidth = 3.5;
  double cleanDurationMs = 20.0;
  double cleanStrength = 10.0;
  double cleanLinewidth = 0.02;
  double combPeriod = 0.2;
  double combBandwidth = 3.6;
  double burnDurationMs = 1.0;
  double burnStrength = 1.0;
  double burnLinewidth = 0.07;
  int combCycles = 30;
  double cleanBurstDurationMs = 2.0;
};

/// Preparation sequence for the memory crystal: the burn-back acts on the
/// 5/2g-3/2e line of the reference class, cleaning on its 3/2g-3/2e line.
inline PumpSequence preparation_sequence(const HyperfineScheme& s, const PreparationSettings& p = {}) {
  PumpSequence seq;
  seq.steps.push_back({0.0, p.pitWidth, p.pitDurationMs, Transition{half, threeHalf}, p.pitStrength, p.pitLinewidth});
  seq.steps.push_back({s.transition_offset(fiveHalf, threeHalf), p.burnBackWidth, p.burnBackDurationMs,
                       Transition{fiveHalf, threeHalf}, p.burnBackStrength, p.burnBackLinewidth});
  const double clean = s.transition_offset(threeHalf, threeHalf);
  seq.steps.push_back({clean, p.cleanWidth, p.cleanDurationMs, Transition{threeHalf, threeHalf},
                       p.cleanStrength, p.cleanLinewidth});
  const long nHoles = std::lround(p.combBandwidth / p.combPeriod);
  for (int c = 0; c < p.combCycles; ++c) {
    for (long h = 0; h < nHoles; ++h) {
      const double nu = (static_cast<double>(h) - static_cast<double>(nHoles) / 2.0 + 0.5) * p.combPeriod;
      seq.steps.push_back({nu, 0.0, p.burnDurationMs, Transition{half, threeHalf}, p.burnStrength, p.burnLinewidth});
    }
    seq.steps.push_back({clean, p.cleanWidth, p.cleanBurstDurationMs, Transition{threeHalf, threeHalf},
                         p.cleanStrength, p.cleanLinewidth});
  }
  return seq;
}

/// Spectral filter preparation: a sweep around the input frequency whose
/// power-broadened profile opens a transparency window of ~2 MHz.
inline PumpSequence filter_sequence(double scanWidth = 1.2, double linewidth = 0.8,
                                    double durationMs = 100.0, double strength = 10.0) {
  PumpSequence seq;
  seq.steps.push_back({0.0, scanWidth, durationMs, Transition{half, threeHalf}, strength, linewidth});
  return seq;
}

// ---------------------------------------------------------------------------
// Analytic combs

enum class ToothShape { gaussian, square };

inline const char* to_string(ToothShape t) { return t == ToothShape::gaussian ? "gaussian" : "square"; }

struct CombSpec {
  double delta = 0.2;      // tooth period, MHz
  double bandwidth = 3.5;  // MHz; number of teeth times delta
  ToothShape toothShape = ToothShape::gaussian;
  double peakDepth = 4.5;        // d
  double backgroundDepth = 0.75;  // d0
  double finesse = 4.7;           // F = delta / tooth FWHM

  double effective_depth() const { return peakDepth / finesse; }
  double tooth_width() const { return delta / finesse; }
};

inline void validate(const CombSpec& c) {
  afcmem::detail::require(c.delta > 0.0, "comb period must be positive");
  afcmem::detail::require(c.bandwidth > 0.0, "comb bandwidth must be positive");
  afcmem::detail::require(c.finesse > 1.0, "finesse must exceed 1");
  afcmem::detail::require(c.peakDepth >= 0.0, "comb peak depth must be non-negative");
  afcmem::detail::require(c.backgroundDepth >= 0.0, "comb background depth must be non-negative");
}

struct CombWindow {
  double halfWidth = 20.0;
  double spacing = 0.005;
  double pitWidth = 14.0;
  std::optional<double> outsidePitDepth;  // defaults to d0 (no pit walls)
};

/// d(nu) = d0 + d * sum of teeth centred on k*delta within the bandwidth.
inline SpectralGrid build_comb_analytic(const CombSpec& spec, const CombWindow& win = {}) {
  validate(spec);
  afcmem::detail::require(2.0 * win.halfWidth >= spec.bandwidth + 4.0 * spec.delta,
                  "comb window must cover bandwidth + 4 periods");
  if (win.spacing > spec.tooth_width() / 4.0)
    throw InvalidArgument("grid spacing too coarse for tooth width " + std::to_string(spec.tooth_width()) + " MHz");
  SpectralGrid g = make_flat_grid(win.halfWidth, win.spacing);
  const double gamma = spec.tooth_width();
  // Teeth at k * delta, |k| <= nMax: 2 nMax + 1 teeth filling the bandwidth.
  const long nMax = std::max(0L, static_cast<long>(std::floor((spec.bandwidth / spec.delta - 1.0) / 2.0 + 1e-9)));
  const double wall = win.outsidePitDepth.value_or(spec.backgroundDepth);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double nu = g.frequencies[i];
    if (std::abs(nu) > win.pitWidth / 2.0) {
      g.opticalDepth[i] = wall;
      continue;
    }
    double teeth = 0.0;
    if (spec.peakDepth > 0.0) {
      const long k0 = std::lround(nu / spec.delta);
      for (long k = std::max(-nMax, k0 - 40); k <= std::min(nMax, k0 + 40); ++k) {
        const double x = nu - static_cast<double>(k) * spec.delta;
        if (spec.toothShape == ToothShape::gaussian)
          teeth += std::exp(-4.0 * kLn2 * x * x / (gamma * gamma));
        else if (std::abs(x) <= gamma / 2.0 + 1e-12)
          teeth += 1.0;
      }
    }
    g.opticalDepth[i] = spec.backgroundDepth + spec.peakDepth * teeth;
  }
  return g;
}

/// Extracts comb parameters from a sampled profile by locating a periodic run
/// of peaks and fitting a Gaussian-tooth comb model to it.
inline CombSpec measure_comb(const SpectralGrid& grid) {
  const auto& d = grid.opticalDepth;
  const std::size_t n = d.size();
  if (n < 16) throw InvalidArgument("no periodic structure: grid too small");
  const double dMax = *std::max_element(d.begin(), d.end());
  const double dMin = *std::min_element(d.begin(), d.end());
  const double span = dMax - dMin;
  if (!(span > 1e-9)) throw InvalidArgument("no periodic structure detected");

  // Local maxima with prominence above 10 % of the full range.
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(d[i] > d[i - 1] && d[i] >= d[i + 1])) continue;
    double left = d[i], right = d[i];
    for (std::size_t j = i; j-- > 0;) {
      if (d[j] > d[i]) break;
      left = std::min(left, d[j]);
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (d[j] > d[i]) break;
      right = std::min(right, d[j]);
    }
    if (d[i] - std::max(left, right) > 0.1 * span) peaks.push_back(i);
  }
  if (peaks.size() < 5) throw InvalidArgument("no periodic structure detected");

  // Maximal runs of equally spaced peaks (within 10 % of the run's spacing).
  // The comb is the run of at least 5 peaks centred closest to the grid
  // centre; hole patterns burned into neighbouring classes form weaker copies.
  std::size_t bestStart = 0, bestLen = 1;
  double bestDist = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s + 1 < peaks.size();) {
    const double ref = static_cast<double>(peaks[s + 1] - peaks[s]);
    std::size_t len = 2;
    while (s + len < peaks.size() &&
           std::abs(static_cast<double>(peaks[s + len] - peaks[s + len - 1]) - ref) <= 0.1 * ref + 1.0)
      ++len;
    const double centre = 0.5 * (grid.frequencies[peaks[s]] + grid.frequencies[peaks[s + len - 1]]);
    if (len >= 5 && std::abs(centre) < bestDist) {
      bestDist = std::abs(centre);
      bestLen = len;
      bestStart = s;
    }
    s += len - 1;
  }
  if (bestLen < 5) throw InvalidArgument("no periodic structure detected");
  std::vector<std::size_t> run(peaks.begin() + static_cast<long>(bestStart),
                               peaks.begin() + static_cast<long>(bestStart + bestLen));

  const double delta0 = (grid.frequencies[run.back()] - grid.frequencies[run.front()]) /
                        static_cast<double>(run.size() - 1);
  std::vector<double> floors, heights;
  for (std::size_t k = 0; k + 1 < run.size(); ++k)
    floors.push_back(*std::min_element(d.begin() + static_cast<long>(run[k]), d.begin() + static_cast<long>(run[k + 1])));
  for (auto p : run) heights.push_back(d[p]);
  // Direct estimates: mean floor, mean height above it, and the mean
  // half-maximum width found by interpolating each tooth's flanks.
  double floorMean = 0.0, peakMean = 0.0;
  for (double f : floors) floorMean += f;
  for (double h : heights) peakMean += h;
  floorMean /= static_cast<double>(floors.size());
  peakMean /= static_cast<double>(heights.size());
  const double halfLevel = 0.5 * (floorMean + peakMean);
  const auto reachIdx = static_cast<std::size_t>(std::max(1.0, 0.5 * delta0 / grid.spacing));
  double widthSum = 0.0;
  std::size_t widthCount = 0;
  for (auto p : run) {
    if (d[p] <= halfLevel) continue;
    std::size_t lo = p, hi = p;
    while (lo > 0 && p - lo < reachIdx && d[lo] > halfLevel) --lo;
    while (hi + 1 < n && hi - p < reachIdx && d[hi] > halfLevel) ++hi;
    if (d[lo] > halfLevel || d[hi] > halfLevel) continue;
    const double xl = grid.frequencies[lo] + (halfLevel - d[lo]) / (d[lo + 1] - d[lo]) * grid.spacing;
    const double xh = grid.frequencies[hi - 1] + (d[hi - 1] - halfLevel) / (d[hi - 1] - d[hi]) * grid.spacing;
    widthSum += xh - xl;
    ++widthCount;
  }
  if (widthCount == 0) throw InvalidArgument("no periodic structure detected (teeth unresolved)");
  const double gammaDirect = widthSum / static_cast<double>(widthCount);

  // A Gaussian-comb fit removes the bias from overlapping tooth tails; it is
  // used only when the model describes the profile (RMS residual below 3 % of
  // the tooth height). Pumped teeth are often flat-topped and keep the direct
  // estimates.
  const long nTeeth = static_cast<long>(run.size());
  const double origin = grid.frequencies[run.front()];
  fitkit::Data data;
  for (std::size_t i = run.front(); i <= run.back(); ++i) {
    data.x.push_back(grid.frequencies[i]);
    data.y.push_back(d[i]);
    data.sigma.push_back(1.0);
  }
  const fitkit::ModelFn model = [nTeeth](std::span<const double> q, double nu) {
    // q = (d0, d, gamma, delta, origin)
    double s = 0.0;
    const double g2 = q[2] * q[2];
    const long k0 = std::lround((nu - q[4]) / q[3]);
    for (long k = std::max(0L, k0 - 6); k <= std::min(nTeeth - 1, k0 + 6); ++k) {
      const double x = nu - q[4] - static_cast<double>(k) * q[3];
      s += std::exp(-4.0 * kLn2 * x * x / g2);
    }
    return q[0] + q[1] * s;
  };
  fitkit::LmOptions lm;
  lm.maxIterations = 100;
  const auto fit = fitkit::levenberg_marquardt(
      data, model, {floorMean, peakMean - floorMean, gammaDirect, delta0, origin},
      {"d0", "d", "gamma", "delta", "origin"}, {}, lm);
  const double rms = fit.residualNorm / std::sqrt(static_cast<double>(data.size()));
  const bool gaussianTeeth = std::isfinite(rms) && rms <= 0.03 * (peakMean - floorMean) &&
                             fit.params[0] >= -1e-6 && fit.params[1] > 0.0;

  CombSpec out;
  out.toothShape = ToothShape::gaussian;
  if (gaussianTeeth) {
    out.delta = std::abs(fit.params[3]);
    out.backgroundDepth = std::max(fit.params[0], 0.0);
    out.peakDepth = fit.params[1];
    out.finesse = out.delta / std::abs(fit.params[2]);
  } else {
    out.delta = delta0;
    out.backgroundDepth = floorMean;
    out.peakDepth = peakMean - floorMean;
    out.finesse = delta0 / gammaDirect;
  }
  out.bandwidth = static_cast<double>(run.size()) * out.delta;
  if (!std::isfinite(out.finesse) || out.peakDepth <= 0.0)
    throw InvalidArgument("no periodic structure detected (comb fit failed)");
  return out;
}

}  // namespace afcmem::spectrum
