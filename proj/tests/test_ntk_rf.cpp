// Tests for the arc-cosine random-feature module. The Gibbs conditional CDF
// is checked against values computed independently from the closed form
// Phi(x) - x phi(x)/(z+1) at 40-digit precision; feature maps are checked
// against the arc-cosine kernels (exact identities where the estimator is
// deterministic, 3-standard-error Monte-Carlo bands where it is not); the
// audit helpers are checked against dense linear-algebra oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "tsk/errors.hpp"
#include "tsk/kernels.hpp"
#include "tsk/ntk_rf.hpp"
#include "tsk/rng.hpp"

namespace {

double dot_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> random_unit(tsk::RngStream& rng, std::size_t d) {
  std::vector<double> x(d);
  double n2 = 0.0;
  for (double& v : x) {
    v = rng.normal();
    n2 += v * v;
  }
  const double n = std::sqrt(n2);
  for (double& v : x) v /= n;
  return x;
}

void expect_mean_within_3se(const std::vector<double>& samples, double target) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  var /= (n - 1.0);
  const double se = std::sqrt(var / n);
  EXPECT_NEAR(target, mean, 3.0 * se) << "n=" << samples.size() << " se=" << se;
}

// Standard normal density, for the CDF-derivative identity.
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / 2.5066282746310005024157652848110;
}

// ---------------------------------------------------------------------------
// Gibbs conditional CDF and its inverse
// ---------------------------------------------------------------------------

TEST(GibbsCdf, MatchesClosedFormOracle) {
  // Reference values computed from erf at 40-digit precision.
  EXPECT_NEAR(0.59937402154939959879, tsk::gibbs_conditional_cdf(1.0, 0.0), 1e-15);
  EXPECT_NEAR(0.78085206493875711114, tsk::gibbs_conditional_cdf(1.0, 3.0), 1e-15);
  EXPECT_NEAR(0.094738087299096609801, tsk::gibbs_conditional_cdf(-2.0, 0.5), 1e-15);
  EXPECT_NEAR(0.9898066300165946518, tsk::gibbs_conditional_cdf(2.5, 10.0), 1e-15);
  EXPECT_NEAR(0.30191171041556930056, tsk::gibbs_conditional_cdf(-0.75, 2.0), 1e-15);
}

TEST(GibbsCdf, ZeroIsTheMedianForEveryConditioner) {
  // The x phi(x) correction vanishes at x = 0, so F(0 | z) = 1/2 exactly.
  for (double z : {0.0, 0.5, 3.0, 7.5, 100.0}) {
    EXPECT_EQ(0.5, tsk::gibbs_conditional_cdf(0.0, z)) << "z=" << z;
  }
}

TEST(GibbsCdf, DerivativeMatchesConditionalDensity) {
  // dF/dx = phi(x) (z + x^2) / (z + 1): the density the chain resamples from.
  const double h = 1e-5;
  for (double z : {0.0, 0.25, 2.0, 9.0}) {
    for (double x : {-3.0, -1.0, -0.2, 0.0, 0.7, 2.5}) {
      const double numeric = (tsk::gibbs_conditional_cdf(x + h, z) -
                              tsk::gibbs_conditional_cdf(x - h, z)) /
                             (2.0 * h);
      const double closed = normal_pdf(x) * (z + x * x) / (z + 1.0);
      EXPECT_NEAR(closed, numeric, 1e-8) << "x=" << x << " z=" << z;
    }
  }
}

TEST(GibbsCdf, StrictlyIncreasingInX) {
  for (double z : {0.0, 1.0, 5.0}) {
    double prev = tsk::gibbs_conditional_cdf(-6.0, z);
    for (double x = -5.5; x <= 6.0; x += 0.5) {
      const double cur = tsk::gibbs_conditional_cdf(x, z);
      EXPECT_GT(cur, prev) << "x=" << x << " z=" << z;
      prev = cur;
    }
  }
}

TEST(GibbsCdf, RejectsBadArguments) {
  EXPECT_THROW(tsk::gibbs_conditional_cdf(0.0, -1.0), tsk::DomainError);
  EXPECT_THROW(tsk::gibbs_conditional_cdf(0.0, std::nan("")), tsk::DomainError);
  EXPECT_THROW(tsk::gibbs_inverse_cdf(-0.1, 1.0), tsk::DomainError);
  EXPECT_THROW(tsk::gibbs_inverse_cdf(1.1, 1.0), tsk::DomainError);
}

TEST(GibbsInverse, FrozenValues) {
  // Roots of F(x | z) = u computed independently by bracketed root finding.
  EXPECT_NEAR(1.6861365687691498, tsk::gibbs_inverse_cdf(0.9, 2.0), 1e-8);
  EXPECT_NEAR(-2.4111988639239145, tsk::gibbs_inverse_cdf(0.05, 0.25), 1e-8);
  EXPECT_NEAR(-1.3329605830660398, tsk::gibbs_inverse_cdf(0.31, 0.0), 1e-8);
  // At z = 0 the conditional density vanishes quadratically at the origin, so
  // F(x | 0) - 1/2 ~ 0.13 x^3 sinks below double rounding for |x| < ~1e-5 and
  // bisection cannot localize the median more finely in x. That is harmless:
  // the error in probability mass is ~1e-17, as the round-trip test confirms.
  EXPECT_NEAR(0.0, tsk::gibbs_inverse_cdf(0.5, 0.0), 1e-4);
  // With z > 0 the density is positive at the origin and the median is sharp.
  EXPECT_NEAR(0.0, tsk::gibbs_inverse_cdf(0.5, 2.0), 1e-9);
}

TEST(GibbsInverse, RoundTripStaysWithinTolerance) {
  // 2,000 (u, z) pairs across the bulk of both ranges; the bisection tolerance
  // of 1e-10 in x and a CDF slope bounded by ~1 keep |F(F^{-1}(u)) - u| tiny.
  tsk::RngStream rng(31415, 0);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double u = rng.uniform_pos();
    const double z = 20.0 * rng.uniform();
    const double x = tsk::gibbs_inverse_cdf(u, z);
    worst = std::max(worst, std::fabs(tsk::gibbs_conditional_cdf(x, z) - u));
  }
  EXPECT_LE(worst, 1e-8);
}

// ---------------------------------------------------------------------------
// Gibbs sampler
// ---------------------------------------------------------------------------

TEST(GibbsSampler, MeanSquaredNormNearDimensionPlusTwo) {
  // The norm-reweighted density has E|w|^2 = d + 2 (its radial part is
  // chi-squared with d+2 degrees of freedom). One sweep from a Gaussian start
  // already lands the moment: measured 10.13 +/- 0.06 at d = 8.
  const std::size_t d = 8;
  tsk::RngStream rng(42, 0);
  double sum = 0.0;
  const int n = 5000;
  for (int i = 0; i < n; ++i) {
    tsk::RngStream r = rng.child(i);
    const std::vector<double> w = tsk::gibbs_sample_direction(d, 1, r);
    sum += dot_oracle(w, w);
  }
  const double mean = sum / n;
  EXPECT_GT(mean, static_cast<double>(d));
  EXPECT_LT(mean, static_cast<double>(d) + 4.0);
}

TEST(GibbsSampler, ExtraSweepsPreserveTheMoment) {
  const std::size_t d = 8;
  tsk::RngStream rng(42, 0);
  double sum = 0.0;
  const int n = 2000;
  for (int i = 0; i < n; ++i) {
    tsk::RngStream r = rng.child(100000 + i);
    const std::vector<double> w = tsk::gibbs_sample_direction(d, 3, r);
    sum += dot_oracle(w, w);
  }
  const double mean = sum / n;
  EXPECT_GT(mean, static_cast<double>(d));
  EXPECT_LT(mean, static_cast<double>(d) + 4.0);
}

TEST(GibbsSampler, DeterministicGivenStream) {
  tsk::RngStream a(7, 9);
  tsk::RngStream b(7, 9);
  EXPECT_EQ(tsk::gibbs_sample_direction(6, 2, a), tsk::gibbs_sample_direction(6, 2, b));
  tsk::RngStream c(8, 9);
  EXPECT_NE(tsk::gibbs_sample_direction(6, 2, a), tsk::gibbs_sample_direction(6, 2, c));
}

TEST(GibbsSampler, RejectsBadArguments) {
  tsk::RngStream rng(1, 0);
  EXPECT_THROW(tsk::gibbs_sample_direction(0, 1, rng), tsk::ConfigError);
  EXPECT_THROW(tsk::gibbs_sample_direction(4, 0, rng), tsk::ConfigError);
}

// ---------------------------------------------------------------------------
// Per-layer feature maps
// ---------------------------------------------------------------------------

TEST(StepFeatures, ValuesAreScaledIndicators) {
  const std::size_t d = 8, m0 = 32;
  tsk::LayerWeights w(tsk::RngStream(11, 0), d, m0, 4, tsk::RandomFeatureMode::kPlain);
  tsk::RngStream data(12, 0);
  const std::vector<double> x = random_unit(data, d);
  const double scale = std::sqrt(2.0 / static_cast<double>(m0));
  for (double v : w.phi0(x)) {
    EXPECT_TRUE(v == 0.0 || v == scale) << v;
  }
  // Step(0) = 0 by convention, so the zero vector maps to all-zero features.
  const std::vector<double> zeros(d, 0.0);
  for (double v : w.phi0(zeros)) EXPECT_EQ(0.0, v);
  for (double v : w.phi1(zeros)) EXPECT_EQ(0.0, v);
}

TEST(StepFeatures, AntipodalPairHasExactlyZeroProduct) {
  // w.y > 0 and w.(-y) > 0 cannot hold together, so the estimate of
  // kappa0(-1) = 0 is exact for every draw, not just in expectation.
  const std::size_t d = 8;
  tsk::LayerWeights w(tsk::RngStream(13, 0), d, 64, 4, tsk::RandomFeatureMode::kPlain);
  tsk::RngStream data(14, 0);
  const std::vector<double> y = random_unit(data, d);
  std::vector<double> neg(y);
  for (double& v : neg) v = -v;
  EXPECT_EQ(0.0, dot_oracle(w.phi0(y), w.phi0(neg)));
  EXPECT_EQ(0.0, dot_oracle(w.phi1(y), w.phi1(neg)));
}

TEST(StepFeatures, UnbiasedForDerivativeArcCosine) {
  // Orthogonal unit pair: target kappa0(0) = 1/2.
  const std::size_t d = 16;
  std::vector<double> y(d, 0.0), z(d, 0.0);
  y[0] = 1.0;
  z[1] = 1.0;
  tsk::RngStream rng(15, 0);
  std::vector<double> samples;
  for (int t = 0; t < 500; ++t) {
    tsk::LayerWeights w(rng.child(t), d, 64, 4, tsk::RandomFeatureMode::kPlain);
    samples.push_back(dot_oracle(w.phi0(y), w.phi0(z)));
  }
  expect_mean_within_3se(samples, tsk::kappa0(0.0));
}

TEST(ReluFeatures, HomogeneousDegreeOne) {
  const std::size_t d = 8;
  tsk::LayerWeights w(tsk::RngStream(16, 0), d, 4, 32, tsk::RandomFeatureMode::kPlain);
  tsk::RngStream data(17, 0);
  const std::vector<double> x = random_unit(data, d);
  std::vector<double> twice(x);
  for (double& v : twice) v *= 2.0;
  const std::vector<double> fx = w.phi1(x);
  const std::vector<double> f2x = w.phi1(twice);
  for (std::size_t i = 0; i < fx.size(); ++i) {
    EXPECT_EQ(2.0 * fx[i], f2x[i]);  // exact: scaling by 2 is lossless
  }
}

TEST(ReluFeatures, UnbiasedForArcCosine) {
  // General pair with non-unit norms: target |y||z| kappa1(cos angle).
  const std::size_t d = 16;
  tsk::RngStream data(18, 0);
  std::vector<double> y = random_unit(data, d);
  std::vector<double> z = random_unit(data, d);
  for (double& v : y) v *= 1.7;
  for (double& v : z) v *= 0.6;
  const double cosine = dot_oracle(y, z) / (1.7 * 0.6);
  const double target = 1.7 * 0.6 * tsk::kappa1(cosine);

  tsk::RngStream rng(19, 0);
  std::vector<double> samples;
  for (int t = 0; t < 500; ++t) {
    tsk::LayerWeights w(rng.child(t), d, 4, 64, tsk::RandomFeatureMode::kPlain);
    samples.push_back(dot_oracle(w.phi1(y), w.phi1(z)));
  }
  expect_mean_within_3se(samples, target);
}

TEST(ReluFeatures, LeverageModeUnbiasedOnRandomDirections) {
  // With a fresh uniform direction y each trial, E|phi1(y)|^2 = 1 holds for
  // any law of the rows (only E[y y^T] = I/d enters), so the test does not
  // depend on how well one Gibbs sweep has mixed.
  const std::size_t d = 16, m1 = 64;
  tsk::RngStream rng(77, 0);
  std::vector<double> samples;
  for (int t = 0; t < 500; ++t) {
    tsk::RngStream r = rng.child(t);
    tsk::LayerWeights w(r.child(1), d, 4, m1,
                        tsk::RandomFeatureMode::kLeverageModified, 1);
    tsk::RngStream yr = r.child(2);
    const std::vector<double> y = random_unit(yr, d);
    const std::vector<double> f = w.phi1(y);
    samples.push_back(dot_oracle(f, f));
  }
  expect_mean_within_3se(samples, 1.0);
}

TEST(LayerWeights, RejectsWrongInputLength) {
  tsk::LayerWeights w(tsk::RngStream(20, 0), 8, 4, 4, tsk::RandomFeatureMode::kPlain);
  const std::vector<double> x(7, 1.0);
  EXPECT_THROW(w.phi0(x), tsk::ShapeError);
  EXPECT_THROW(w.phi1(x), tsk::ShapeError);
}

// ---------------------------------------------------------------------------
// Depth-L feature stacks
// ---------------------------------------------------------------------------

tsk::RandomFeatureConfig small_rf_config(int depth) {
  tsk::RandomFeatureConfig cfg;
  cfg.depth = depth;
  cfg.m0 = 64;
  cfg.m1 = 64;
  cfg.ms = 64;
  return cfg;
}

TEST(NtkRfStack, FeatureDimIsReluPlusSketchWidth) {
  const tsk::NtkRfStack stack(small_rf_config(2), 8, 5);
  EXPECT_EQ(128u, stack.feature_dim());
  tsk::RngStream data(21, 0);
  const std::vector<double> x = random_unit(data, 8);
  EXPECT_EQ(stack.feature_dim(), stack.featurize(x).size());
}

TEST(NtkRfStack, DeterministicAndSeedSensitive) {
  tsk::RngStream data(22, 0);
  const std::vector<double> x = random_unit(data, 8);
  const tsk::NtkRfStack a(small_rf_config(2), 8, 41);
  const tsk::NtkRfStack b(small_rf_config(2), 8, 41);
  const tsk::NtkRfStack c(small_rf_config(2), 8, 42);
  EXPECT_EQ(a.featurize(x), b.featurize(x));
  EXPECT_NE(a.featurize(x), c.featurize(x));
}

TEST(NtkRfStack, HomogeneousDegreeOne) {
  // featurize(2x) = 2 featurize(x) exactly: the unit direction is bit-equal
  // and the output scale doubles losslessly.
  tsk::RngStream data(23, 0);
  const std::vector<double> x = random_unit(data, 8);
  std::vector<double> twice(x);
  for (double& v : twice) v *= 2.0;
  const tsk::NtkRfStack stack(small_rf_config(2), 8, 43);
  const std::vector<double> fx = stack.featurize(x);
  const std::vector<double> f2x = stack.featurize(twice);
  ASSERT_EQ(fx.size(), f2x.size());
  for (std::size_t i = 0; i < fx.size(); ++i) EXPECT_EQ(2.0 * fx[i], f2x[i]);
}

TEST(NtkRfStack, RejectsBadInputs) {
  const tsk::NtkRfStack stack(small_rf_config(1), 8, 44);
  EXPECT_THROW(stack.featurize(std::vector<double>(8, 0.0)), tsk::DomainError);
  EXPECT_THROW(stack.featurize(std::vector<double>(7, 1.0)), tsk::ShapeError);

  tsk::RandomFeatureConfig bad = small_rf_config(1);
  bad.depth = 0;
  EXPECT_THROW(tsk::NtkRfStack(bad, 8, 1), tsk::ConfigError);
  bad = small_rf_config(1);
  bad.m0 = 0;
  EXPECT_THROW(tsk::NtkRfStack(bad, 8, 1), tsk::ConfigError);
  bad = small_rf_config(1);
  bad.gibbs_sweeps = 0;
  EXPECT_THROW(tsk::NtkRfStack(bad, 8, 1), tsk::ConfigError);
}

TEST(NtkRfStack, DepthOneUnbiasedForExactKernel) {
  // At depth 1 the estimator is exactly unbiased: the layer weights and the
  // pair sketch are fresh and independent across trials.
  const std::size_t d = 16;
  tsk::RngStream data(601, 0);
  const std::vector<double> y = random_unit(data, d);
  const std::vector<double> z = random_unit(data, d);
  const double target = tsk::ntk_exact(y, z, 1);
  std::vector<double> samples;
  for (int t = 0; t < 500; ++t) {
    const tsk::NtkRfStack stack(small_rf_config(1), d, 9000 + t);
    samples.push_back(dot_oracle(stack.featurize(y), stack.featurize(z)));
  }
  expect_mean_within_3se(samples, target);
}

// Shared protocol for the depth-2 concentration checks: one stack, 60 random
// unit pairs, relative error against the exact kernel normalized by the
// self-value depth+1.
double median_relative_error(const tsk::RandomFeatureConfig& cfg, std::size_t d,
                             std::uint64_t stack_seed, std::uint64_t pair_seed) {
  const tsk::NtkRfStack stack(cfg, d, stack_seed);
  tsk::RngStream pairs(pair_seed, 0);
  std::vector<double> rel;
  for (int p = 0; p < 60; ++p) {
    const std::vector<double> y = random_unit(pairs, d);
    const std::vector<double> z = random_unit(pairs, d);
    const double exact = tsk::ntk_exact(y, z, cfg.depth);
    const double est = dot_oracle(stack.featurize(y), stack.featurize(z));
    rel.push_back(std::fabs(est - exact) / (cfg.depth + 1));
  }
  std::nth_element(rel.begin(), rel.begin() + 30, rel.end());
  return rel[30];
}

TEST(NtkRfStack, DepthTwoConcentratesAtModerateWidths) {
  // Measured 0.0307 at these widths and seeds; the bar leaves 4x slack.
  tsk::RandomFeatureConfig cfg;
  cfg.depth = 2;
  cfg.m0 = 256;
  cfg.m1 = 1024;
  cfg.ms = 512;
  EXPECT_LE(median_relative_error(cfg, 16, 5000, 777), 0.12);
}

TEST(NtkRfStack, LeverageModeConcentratesAtModerateWidths) {
  // Measured 0.0497 at these widths and seeds.
  tsk::RandomFeatureConfig cfg;
  cfg.depth = 2;
  cfg.m0 = 256;
  cfg.m1 = 1024;
  cfg.ms = 512;
  cfg.mode = tsk::RandomFeatureMode::kLeverageModified;
  EXPECT_LE(median_relative_error(cfg, 16, 5000, 777), 0.15);
}

// ---------------------------------------------------------------------------
// Config plans and advisory bounds
// ---------------------------------------------------------------------------

TEST(RandomFeatureConfig, FromAccuracyFrozenCounts) {
  const tsk::RandomFeatureConfig cfg = tsk::RandomFeatureConfig::from_accuracy(2, 0.5, 0.1);
  EXPECT_EQ(48u, cfg.m0);
  EXPECT_EQ(3068u, cfg.m1);
  EXPECT_EQ(804u, cfg.ms);

  const tsk::RandomFeatureConfig tiny = tsk::RandomFeatureConfig::from_accuracy(1, 1.0, 0.5);
  EXPECT_EQ(1u, tiny.m0);
  EXPECT_EQ(1u, tiny.m1);
  EXPECT_EQ(1u, tiny.ms);
}

TEST(RandomFeatureConfig, FromAccuracyRejectsBadArguments) {
  EXPECT_THROW(tsk::RandomFeatureConfig::from_accuracy(0, 0.5, 0.1), tsk::ConfigError);
  EXPECT_THROW(tsk::RandomFeatureConfig::from_accuracy(1, 0.0, 0.1), tsk::ConfigError);
  EXPECT_THROW(tsk::RandomFeatureConfig::from_accuracy(1, 0.5, 1.0), tsk::ConfigError);
  // Counts past 2^53 cannot be represented faithfully; refuse them.
  EXPECT_THROW(tsk::RandomFeatureConfig::from_accuracy(1, 1e-9, 0.1), tsk::ConfigError);
}

TEST(SpectralBounds, FrozenArithmetic) {
  EXPECT_EQ(185u, tsk::spectral_m0_bound(128, 12.8, 10.0, 0.5, 0.1));
  EXPECT_EQ(2948u, tsk::spectral_m1_bound(16, 4, 128.0, 12.8, 10.0, 0.5, 0.1));
  EXPECT_EQ(17932u, tsk::spectral_ms_bound(128, 12.8, 0.5, 0.1));
  EXPECT_THROW(tsk::spectral_m0_bound(0, 1.0, 1.0, 0.5, 0.1), tsk::ConfigError);
  EXPECT_THROW(tsk::spectral_m0_bound(8, -1.0, 1.0, 0.5, 0.1), tsk::DomainError);
  EXPECT_THROW(tsk::spectral_m1_bound(8, 0, 1.0, 1.0, 1.0, 0.5, 0.1), tsk::ConfigError);
  EXPECT_THROW(tsk::spectral_ms_bound(8, 1.0, 0.0, 0.1), tsk::DomainError);
}

// ---------------------------------------------------------------------------
// Ridge-regression audits
// ---------------------------------------------------------------------------

TEST(StatisticalDimension, IdentityMatrixHasClosedForm) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(12, 12);
  // Every eigenvalue is 1: the trace is n / (1 + lambda).
  EXPECT_NEAR(6.0, tsk::statistical_dimension(eye, 1.0), 1e-12);
  EXPECT_NEAR(12.0 / (1.0 + 1e9), tsk::statistical_dimension(eye, 1e9), 1e-20);
  EXPECT_NEAR(12.0, tsk::statistical_dimension(eye, 1e-12), 1e-9);
}

TEST(StatisticalDimension, MatchesDenseInverseOracle) {
  tsk::RngStream rng(88, 0);
  Eigen::MatrixXd b(6, 6);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) b(i, j) = rng.normal();
  }
  const Eigen::MatrixXd k = b.transpose() * b;
  const double lambda = 0.7;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(6, 6);
  const double oracle = (k * (k + lambda * eye).inverse()).trace();
  EXPECT_NEAR(oracle, tsk::statistical_dimension(k, lambda), 1e-10);
}

TEST(StatisticalDimension, RejectsBadArguments) {
  EXPECT_THROW(tsk::statistical_dimension(Eigen::MatrixXd::Zero(3, 4), 1.0),
               tsk::ShapeError);
  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(3, 3);
  skew(0, 1) = 1.0;
  EXPECT_THROW(tsk::statistical_dimension(skew, 1.0), tsk::ShapeError);
  EXPECT_THROW(tsk::statistical_dimension(Eigen::MatrixXd::Identity(3, 3), 0.0),
               tsk::DomainError);
}

TEST(SpectralAudit, ExactFeaturesGiveUnitRange) {
  // If Phi^T Phi equals the kernel exactly, the whitened matrix is the
  // identity regardless of lambda.
  tsk::RngStream rng(89, 0);
  Eigen::MatrixXd phi(8, 5);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 5; ++j) phi(i, j) = rng.normal();
  }
  const Eigen::MatrixXd k = phi.transpose() * phi;
  const tsk::SpectralRange range = tsk::spectral_audit(phi, k, 0.3);
  EXPECT_NEAR(1.0, range.min_eig, 1e-10);
  EXPECT_NEAR(1.0, range.max_eig, 1e-10);
}

TEST(SpectralAudit, ZeroFeaturesCollapseToRidgeFloor) {
  // Phi = 0 leaves lambda (K + lambda I)^{-1}: the range is
  // [lambda/(max_eig + lambda), lambda/(min_eig + lambda)].
  tsk::RngStream rng(90, 0);
  Eigen::MatrixXd b(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) b(i, j) = rng.normal();
  }
  const Eigen::MatrixXd k = b.transpose() * b;
  const double lambda = 0.9;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  const double lo = std::max(0.0, eig.eigenvalues().minCoeff());
  const double hi = eig.eigenvalues().maxCoeff();
  const tsk::SpectralRange range =
      tsk::spectral_audit(Eigen::MatrixXd::Zero(3, 5), k, lambda);
  EXPECT_NEAR(lambda / (hi + lambda), range.min_eig, 1e-10);
  EXPECT_NEAR(lambda / (lo + lambda), range.max_eig, 1e-10);
}

TEST(SpectralAudit, WidthShrinksAsFeatureCountGrows) {
  // 32 unit rows in d = 8, exact depth-1 kernel, lambda = 0.1 n. Quadrupling
  // every feature count tightened the whitened range from width 1.02 to 0.32
  // at these seeds.
  const std::size_t n = 32, d = 8;
  tsk::RngStream data(321, 0);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(random_unit(data, d));
  Eigen::MatrixXd gram(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      gram(i, j) = tsk::ntk_exact(rows[i], rows[j], 1);
    }
  }
  const double lambda = 0.1 * static_cast<double>(n);

  auto width_at = [&](std::size_t base) {
    tsk::RandomFeatureConfig cfg;
    cfg.depth = 1;
    cfg.m0 = base;
    cfg.m1 = 2 * base;
    cfg.ms = base;
    const tsk::NtkRfStack stack(cfg, d, 1);
    Eigen::MatrixXd phi(stack.feature_dim(), n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::vector<double> f = stack.featurize(rows[i]);
      for (std::size_t r = 0; r < f.size(); ++r) {
        phi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = f[r];
      }
    }
    return tsk::spectral_audit(phi, gram, lambda).width();
  };

  EXPECT_LT(width_at(512), width_at(32));
}

TEST(SpectralAudit, RejectsBadArguments) {
  const Eigen::MatrixXd k = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, 4);
  EXPECT_THROW(tsk::spectral_audit(phi, k, 0.0), tsk::DomainError);
  EXPECT_THROW(tsk::spectral_audit(Eigen::MatrixXd::Zero(3, 5), k, 1.0),
               tsk::ShapeError);
  Eigen::MatrixXd skew = Eigen::MatrixXd::Zero(4, 4);
  skew(0, 1) = 1.0;
  EXPECT_THROW(tsk::spectral_audit(phi, skew, 1.0), tsk::ShapeError);
}

}  // namespace
