#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "afcmem/qubit.hpp"

using namespace afcmem;
using namespace afcmem::qubit;

namespace {

constexpr double kEta = 0.028;

TimeBinQubit equal_qubit(double dAlpha, double mu) { return make_qubit(kPi / 4, dAlpha, mu); }

}  // namespace

TEST(StoreTimebin, EarlyQubitOnlyFillsEarlyBins) {
  DoubleWriteConfig dw;
  const auto o = store_timebin(make_qubit(0.0, 0.0, 3.0), dw, 1e-3, kEta);
  EXPECT_EQ(o.ll, 0.0);
  EXPECT_NEAR(o.ee, o.central, 1e-15);
  EXPECT_NEAR(o.ee, kEta / (2 * dw.alpha) * 3.0, 1e-15);
  EXPECT_EQ(o.ll_total(), 1e-3);
}

TEST(StoreTimebin, ConstructiveCentralIsFourTimesSideBin) {
  DoubleWriteConfig dw;
  dw.deltaBeta = 90.0;
  const auto o = store_timebin(equal_qubit(90.0, 1.5), dw, 0.0, kEta);
  EXPECT_NEAR(o.central, 4.0 * o.ll, 1e-15);
  EXPECT_NEAR(o.central, 4.0 * o.ee, 1e-15);
  // Central maximum equals S / alpha with S the single-bin pole signal.
  EXPECT_NEAR(o.central, kEta * 1.5 / dw.alpha, 1e-15);
  EXPECT_NEAR(o.ee, kEta * 1.5 / (4 * dw.alpha), 1e-15);
}

TEST(StoreTimebin, DestructiveCentralIsNoiseOnly) {
  DoubleWriteConfig dw;
  dw.deltaBeta = 135.0 + 180.0;
  const auto o = store_timebin(equal_qubit(135.0, 1.5), dw, 2e-3, kEta);
  EXPECT_NEAR(o.central, 0.0, 1e-16);
  EXPECT_NEAR(o.central_total(), 2e-3, 1e-16);
}

TEST(StoreTimebin, BinSumClosedForm) {
  DoubleWriteConfig dw;
  for (double theta : {0.2, 0.7, 1.1}) {
    auto q = make_qubit(theta, 30.0, 2.0);
    dw.deltaBeta = 30.0;  // maximal interference
    const auto o = store_timebin(q, dw, 0.0, kEta);
    const double k = kEta / (2 * dw.alpha);
    const double expected = q.muQ * k * (q.c1 * q.c1 + (q.c1 + q.c2) * (q.c1 + q.c2) + q.c2 * q.c2);
    EXPECT_NEAR(o.ee + o.central + o.ll, expected, 1e-15);
  }
}

TEST(StoreTimebin, Guards) {
  DoubleWriteConfig dw;
  dw.writeSeparation = 0.5;
  EXPECT_THROW(store_timebin(equal_qubit(0, 1), dw, 0, kEta), InvalidArgument);
  dw.writeSeparation = 0.6;
  dw.alpha = 0.9;
  EXPECT_THROW(store_timebin(equal_qubit(0, 1), dw, 0, kEta), InvalidArgument);
  TimeBinQubit bad;
  bad.c1 = 0.9;
  EXPECT_THROW(store_timebin(bad, DoubleWriteConfig{}, 0, kEta), InvalidArgument);
}

TEST(Fidelity, PoleIdentities) {
  EXPECT_NEAR(fidelity_poles(0.11, 0.11), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(fidelity_poles(1e9, 0.11), 1.0, 1e-9);
  EXPECT_NEAR(fidelity_poles(5.9, 0.11), 0.982, 0.0005);
  for (double mu : {0.3, 1.0, 4.0}) {
    const double snr = mu / 0.11;
    EXPECT_NEAR(fidelity_poles(mu, 0.11), (snr + 1) / (snr + 2), 1e-15);
  }
}

TEST(Fidelity, VisibilityValues) {
  EXPECT_NEAR(visibility_model(1.5, 0.11, 2.5), 0.732, 0.0005);
  EXPECT_EQ(visibility_model(0.0, 0.11, 2.5), 0.0);
  EXPECT_NEAR(visibility_model(1e9, 0.11, 2.5), 1.0, 1e-8);
}

TEST(Fidelity, VisibilityEqualsMaxMinOfStoredFringe) {
  // (max - min)/(max + min) over the central bin reproduces the model.
  const double mu1p = 0.11, pN = mu1p * kEta;
  DoubleWriteConfig dw;
  for (double mu : {0.6, 1.5, 5.9}) {
    dw.deltaBeta = 0.0;
    const double mx = store_timebin(equal_qubit(0.0, mu), dw, pN, kEta).central_total();
    dw.deltaBeta = 180.0;
    const double mn = store_timebin(equal_qubit(0.0, mu), dw, pN, kEta).central_total();
    EXPECT_NEAR((mx - mn) / (mx + mn), visibility_model(mu, mu1p, dw.alpha), 1e-12);
  }
}

TEST(Fidelity, TotalValues) {
  EXPECT_NEAR(fidelity_total(1.5, 0.11, 2.5).Ftotal, 0.889, 0.0005);
  EXPECT_NEAR(fidelity_total(5.9, 0.11, 2.5).Ftotal, 0.966, 0.0005);
  EXPECT_NEAR(fidelity_total(1e9, 0.11, 2.5).Ftotal, 1.0, 1e-8);
}

TEST(Fidelity, CompositionExact) {
  for (double mu : {0.1, 0.6, 1.1, 1.5, 3.2, 5.9}) {
    const auto r = fidelity_total(mu, 0.11, 2.5);
    EXPECT_NEAR(r.Ftotal, r.Fel / 3 + 2 * r.Fpm / 3, 1e-12);
    EXPECT_NEAR(r.Ftotal, fidelity_poles(mu, 0.11) / 3 + 2.0 / 3 * (1 + visibility_model(mu, 0.11, 2.5)) / 2, 1e-12);
    EXPECT_EQ(r.Ftotal, fitkit::fidelity_total_value(mu, 0.11, 2.5));
    for (double f : {r.Fel, r.Fpm, r.Ftotal}) {
      EXPECT_GE(f, 0.0);
      EXPECT_LE(f, 1.0);
    }
  }
}

TEST(Fidelity, Monotonicity) {
  double prev[3] = {0, 0, 0};
  for (double mu = 0.05; mu < 10; mu *= 1.3) {
    const auto r = fidelity_total(mu, 0.11, 2.5);
    EXPECT_GT(r.Fel, prev[0]);
    EXPECT_GT(r.Fpm, prev[1]);
    EXPECT_GT(r.Ftotal, prev[2]);
    prev[0] = r.Fel, prev[1] = r.Fpm, prev[2] = r.Ftotal;
  }
  double last[3] = {2, 2, 2};
  for (double m1 = 0.02; m1 < 1; m1 *= 1.4) {
    const auto r = fidelity_total(1.5, m1, 2.5);
    EXPECT_LT(r.Fel, last[0]);
    EXPECT_LT(r.Fpm, last[1]);
    EXPECT_LT(r.Ftotal, last[2]);
    last[0] = r.Fel, last[1] = r.Fpm, last[2] = r.Ftotal;
  }
  double lastA = 2;
  for (double a = 1; a < 6; a += 0.5) {
    const double f = fidelity_total(1.5, 0.11, a).Fpm;
    EXPECT_LT(f, lastA);
    lastA = f;
  }
}

TEST(Fidelity, UncertaintyPropagationMatchesFiniteDifference) {
  const double mu = 1.5, m = 0.11, a = 2.5, sm = 0.01, sa = 0.6, h = 1e-6;
  const auto r = fidelity_total(mu, m, a, sm, sa);
  const double dm = (fidelity_total(mu, m + h, a).Ftotal - fidelity_total(mu, m - h, a).Ftotal) / (2 * h);
  const double da = (fidelity_total(mu, m, a + h).Ftotal - fidelity_total(mu, m, a - h).Ftotal) / (2 * h);
  EXPECT_NEAR(r.sigmaFtotal, std::hypot(dm * sm, da * sa), 1e-8);
}

TEST(Fringe, MonteCarloRecoversVisibility) {
  const double mu1p = 0.11, pN = mu1p * kEta;
  const detection::DetectionChain chain;
  DoubleWriteConfig dw;
  for (double mu : {0.6, 1.5, 5.9}) {
    const auto s = simulate_fringe(equal_qubit(90.0, mu), dw, default_fringe_phases(), pN, kEta, chain, 1000000,
                                   static_cast<std::uint64_t>(mu * 100), 4);
    const double v = visibility_model(mu, mu1p, dw.alpha);
    EXPECT_TRUE(s.fit.converged);
    EXPECT_NEAR(s.visibility, v, 2.0 * s.sigmaVisibility) << "mu_q = " << mu;
    EXPECT_NEAR(s.fit.param("phi"), 90.0, 20.0);
  }
}

TEST(Fringe, CsvColumns) {
  const detection::DetectionChain chain;
  const auto s = simulate_fringe(equal_qubit(0.0, 1.5), {}, default_fringe_phases(), 0.11 * kEta, kEta, chain,
                                 200000, 1);
  std::ostringstream os;
  write_fringe_csv(os, s);
  EXPECT_EQ(os.str().rfind("delta_beta_deg,counts,fit_value\n", 0), 0u);
  EXPECT_EQ(s.counts.size(), 8u);
}
