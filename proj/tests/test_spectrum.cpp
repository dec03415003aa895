#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "afcmem/spectrum.hpp"

using namespace afcmem;
using namespace afcmem::spectrum;

namespace {

double max_in(const SpectralGrid& g, double lo, double hi) {
  double m = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.frequencies[i] >= lo && g.frequencies[i] <= hi) m = std::max(m, g.opticalDepth[i]);
  return m;
}

SpectralGrid prepared_crystal(const PreparationSettings& p = {}) {
  const auto scheme = pr_yso_scheme();
  auto g = make_crystal_grid(scheme, 30.0, 0.005, 7.0);
  return simulate_pumping(g, preparation_sequence(scheme, p));
}

}  // namespace

TEST(LevelScheme, InputControlSeparationIsFirstGroundSplitting) {
  const auto s = build_level_scheme({10.2, 17.3}, {4.6, 4.8});
  EXPECT_DOUBLE_EQ(s.input_control_separation(), 10.2);
}

TEST(LevelScheme, BranchingRowsAndColumnsNormalised) {
  const auto s = pr_yso_scheme();
  for (int g = 0; g < 3; ++g) {
    double row = 0.0, col = 0.0;
    for (int e = 0; e < 3; ++e) {
      row += s.branching[g][e];
      col += s.branching[e][g];
      EXPECT_GE(s.branching[g][e], 0.0);
      EXPECT_LE(s.branching[g][e], 1.0);
    }
    EXPECT_NEAR(row, 1.0, 1e-9);
    EXPECT_NEAR(col, 1.0, 1e-9);
  }
}

TEST(LevelScheme, RejectsBadInput) {
  EXPECT_THROW(build_level_scheme({0.0, 17.3}, {4.6, 4.8}), InvalidArgument);
  EXPECT_THROW(build_level_scheme({10.2, 17.3}, {-1.0, 4.8}), InvalidArgument);
  Table3 t = kPrYsoStrengths;
  t[1] = {0.0, 0.0, 0.0};
  EXPECT_THROW(build_level_scheme({10.2, 17.3}, {4.6, 4.8}, t), InvalidArgument);
}

TEST(LevelScheme, NineClassesWithReferenceAtZero) {
  const auto classes = enumerate_classes(pr_yso_scheme());
  ASSERT_EQ(classes.size(), 9u);
  int refs = 0;
  for (const auto& c : classes)
    if (c.resonantTransition.ground == half && c.resonantTransition.excited == threeHalf) {
      EXPECT_DOUBLE_EQ(c.classOffset, 0.0);
      ++refs;
    }
  EXPECT_EQ(refs, 1);
}

TEST(Pumping, EmptySequenceIsIdentity) {
  const auto g = make_crystal_grid(pr_yso_scheme(), 20.0, 0.005, 7.0);
  const auto out = simulate_pumping(g, {});
  EXPECT_EQ(out.opticalDepth, g.opticalDepth);
  EXPECT_EQ(out.populations->fractions, g.populations->fractions);
}

TEST(Pumping, UnpumpedCrystalHasInhomogeneousDepth) {
  const auto g = make_crystal_grid(pr_yso_scheme(), 20.0, 0.005, 7.0);
  for (double d : g.opticalDepth) EXPECT_NEAR(d, 7.0, 1e-12);
}

TEST(Pumping, PitIsClearedAcrossCentralBand) {
  const auto scheme = pr_yso_scheme();
  auto g = make_crystal_grid(scheme, 20.0, 0.005, 7.0);
  PumpSequence seq;
  seq.steps.push_back({0.0, 14.0, 100.0, Transition{half, threeHalf}, 10.0, 0.02});
  const auto out = simulate_pumping(g, seq);
  EXPECT_LT(max_in(out, -6.0, 6.0), 0.1 * 0.75);
}

TEST(Pumping, PitResidualMonotoneInStrength) {
  const auto scheme = pr_yso_scheme();
  const auto g = make_crystal_grid(scheme, 20.0, 0.005, 7.0);
  std::vector<double> prev;
  for (double s : {0.05, 0.2, 1.0, 5.0, 20.0}) {
    PumpSequence seq;
    seq.steps.push_back({0.0, 14.0, 5.0, Transition{half, threeHalf}, s, 0.02});
    const auto out = simulate_pumping(g, seq);
    std::vector<double> cur;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (std::abs(out.frequencies[i]) <= 7.0) cur.push_back(out.opticalDepth[i]);
    if (!prev.empty()) {
      for (std::size_t i = 0; i < cur.size(); ++i) EXPECT_LE(cur[i], prev[i] + 1e-12);
    }
    prev = cur;
  }
}

TEST(Pumping, PopulationsConserved) {
  const auto out = prepared_crystal();
  for (const auto& rho : out.populations->fractions) {
    EXPECT_NEAR(rho[0] + rho[1] + rho[2], 1.0, 1e-9);
    for (double v : rho) EXPECT_GE(v, 0.0);
  }
  for (double d : out.opticalDepth) EXPECT_GE(d, 0.0);
}

TEST(Pumping, DepthLinearInPopulations) {
  auto g = make_crystal_grid(pr_yso_scheme(), 20.0, 0.005, 7.0);
  auto pm = *g.populations;
  for (auto& r : pm.fractions) r = {0.0, 0.0, 0.0};
  const std::size_t k = pm.fractions.size() / 2;
  pm.fractions[k] = {0.3, 0.0, 0.0};
  const auto d1 = depth_from_populations(pm, g.size(), g.spacing);
  pm.fractions[k] = {0.6, 0.0, 0.0};
  const auto d2 = depth_from_populations(pm, g.size(), g.spacing);
  double total = 0.0;
  for (std::size_t i = 0; i < d1.size(); ++i) {
    EXPECT_NEAR(d2[i], 2.0 * d1[i], 1e-12);
    total += d1[i];
  }
  EXPECT_GT(total, 0.0);
}

TEST(Pumping, BurnBackFeatureWidth) {
  const auto scheme = pr_yso_scheme();
  auto g = make_crystal_grid(scheme, 30.0, 0.005, 7.0);
  PreparationSettings p;
  auto seq = preparation_sequence(scheme, p);
  seq.steps.resize(2);  // pit + burn-back
  const auto out = simulate_pumping(g, seq);
  const double peak = max_in(out, -4.0, 4.0);
  ASSERT_GT(peak, 0.5);
  std::size_t c = out.index_of(0.0);
  for (std::size_t i = out.index_of(-4.0); i <= out.index_of(4.0); ++i)
    if (out.opticalDepth[i] > out.opticalDepth[c]) c = i;
  std::size_t lo = c, hi = c;
  while (out.opticalDepth[lo] > peak / 2) --lo;
  while (out.opticalDepth[hi] > peak / 2) ++hi;
  const double width = (hi - lo) * out.spacing;
  EXPECT_GE(width, 3.0);
  EXPECT_LE(width, 4.0);
}

TEST(Pumping, FullPreparationYieldsComb) {
  const auto out = prepared_crystal();
  const auto spec = measure_comb(out);
  EXPECT_NEAR(spec.delta, 0.2, 0.01);
  EXPECT_GE(spec.peakDepth, 3.0);
  EXPECT_LE(spec.peakDepth, 6.0);
  EXPECT_GE(spec.backgroundDepth, 0.3);
  EXPECT_LE(spec.backgroundDepth, 1.2);
}

TEST(Pumping, RejectsCoarseGridAndOutOfWindowSweep) {
  const auto g = make_crystal_grid(pr_yso_scheme(), 20.0, 0.01, 7.0);
  PumpSequence narrow;
  narrow.steps.push_back({0.0, 0.0, 1.0, std::nullopt, 1.0, 0.02});
  EXPECT_THROW(simulate_pumping(g, narrow), InvalidArgument);
  PumpSequence outside;
  outside.steps.push_back({25.0, 2.0, 1.0, std::nullopt, 1.0, 0.2});
  EXPECT_THROW(simulate_pumping(g, outside), InvalidArgument);
}

TEST(AnalyticComb, PeakDepthAtToothCentre) {
  CombSpec c;
  c.peakDepth = 4.5;
  c.backgroundDepth = 0.75;
  c.finesse = 4.7;
  const auto g = build_comb_analytic(c);
  EXPECT_NEAR(g.opticalDepth[g.index_of(0.0)], 5.25, 1e-6);
}

TEST(AnalyticComb, ZeroDepthIsFlat) {
  CombSpec c;
  c.peakDepth = 0.0;
  const auto g = build_comb_analytic(c);
  for (std::size_t i = 0; i < g.size(); ++i)
    if (std::abs(g.frequencies[i]) < 7.0) {
      EXPECT_DOUBLE_EQ(g.opticalDepth[i], c.backgroundDepth);
    }
}

TEST(AnalyticComb, Guards) {
  CombSpec c;
  c.finesse = 0.5;
  try {
    build_comb_analytic(c);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("finesse must exceed 1"), std::string::npos);
  }
  CombSpec fine;
  fine.finesse = 10.0;
  CombWindow w;
  w.spacing = 0.01;
  EXPECT_THROW(build_comb_analytic(fine, w), InvalidArgument);
  CombSpec wide;
  wide.bandwidth = 40.0;
  EXPECT_THROW(build_comb_analytic(wide), InvalidArgument);
}

TEST(AnalyticComb, EffectiveDepth) {
  CombSpec c;
  c.peakDepth = 4.5;
  c.finesse = 4.7;
  EXPECT_NEAR(c.effective_depth(), 4.5 / 4.7, 1e-12);
}

TEST(MeasureComb, RoundTripsReferenceComb) {
  CombSpec c;
  c.delta = 0.2;
  c.peakDepth = 4.5;
  c.backgroundDepth = 0.75;
  c.finesse = 0.2 / 0.043;
  const auto m = measure_comb(build_comb_analytic(c));
  EXPECT_NEAR(m.finesse, 4.65, 0.05);
  EXPECT_NEAR(m.delta, c.delta, 0.02 * c.delta);
  EXPECT_NEAR(m.peakDepth, c.peakDepth, 0.02 * c.peakDepth);
  EXPECT_NEAR(m.backgroundDepth, c.backgroundDepth, 0.02 * c.backgroundDepth);
}

class MeasureCombBox : public ::testing::TestWithParam<std::tuple<double, double>> {};

TEST_P(MeasureCombBox, RoundTripWithinTwoPercent) {
  const auto [F, d] = GetParam();
  CombSpec c;
  c.finesse = F;
  c.peakDepth = d;
  c.backgroundDepth = 0.5;
  CombWindow w;
  w.spacing = std::min(0.005, c.tooth_width() / 5.0);
  const auto m = measure_comb(build_comb_analytic(c, w));
  EXPECT_NEAR(m.finesse, F, 0.02 * F);
  EXPECT_NEAR(m.peakDepth, d, 0.02 * d);
  EXPECT_NEAR(m.delta, c.delta, 0.02 * c.delta);
  EXPECT_NEAR(m.backgroundDepth, 0.5, 0.01);
}

INSTANTIATE_TEST_SUITE_P(Box, MeasureCombBox,
                         ::testing::Combine(::testing::Values(2.0, 4.7, 10.0),
                                            ::testing::Values(0.5, 4.5, 8.0)));

TEST(MeasureComb, FlatGridHasNoStructure) {
  const auto g = make_flat_grid(20.0, 0.005, 1.0);
  try {
    measure_comb(g);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("no periodic structure"), std::string::npos);
  }
}
