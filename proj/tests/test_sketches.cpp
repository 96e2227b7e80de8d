// Tests for the dimension-reduction transforms. Unbiasedness is checked
// against explicit tensor-product oracles on small dims (Monte-Carlo over
// fresh sketches, 3-standard-error bands, fixed seeds); structural fast
// paths are checked bit-exactly against their naive equivalents.

#include <cmath>
#include <cstddef>
#include <vector>

#include <gtest/gtest.h>

#include "tsk/errors.hpp"
#include "tsk/rng.hpp"
#include "tsk/sketches.hpp"

namespace {

// ---------------------------------------------------------------------------
// Oracles (independent of the library's tensor utilities)
// ---------------------------------------------------------------------------

double dot_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2_oracle(const std::vector<double>& a) {
  return std::sqrt(dot_oracle(a, a));
}

std::vector<double> outer_oracle(const std::vector<double>& a,
                                 const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() * b.size());
  for (double ai : a) {
    for (double bj : b) out.push_back(ai * bj);
  }
  return out;
}

std::vector<double> random_vector(tsk::RngStream& rng, std::size_t d) {
  std::vector<double> x(d);
  for (double& v : x) v = rng.normal();
  return x;
}

std::vector<double> e1_vector(std::size_t d) {
  std::vector<double> e(d, 0.0);
  e[0] = 1.0;
  return e;
}

// Sample mean and the 3-standard-error band check used by every
// Monte-Carlo unbiasedness test below.
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

double sample_variance(const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  return var / (n - 1.0);
}

// ---------------------------------------------------------------------------
// Srht
// ---------------------------------------------------------------------------

TEST(Srht, SquarePowerOfTwoIsExactIsometry) {
  tsk::RngStream rng(501, 0);
  const tsk::Srht s(rng.child(1), 16, 16);
  tsk::RngStream data(502, 0);
  const std::vector<double> x = random_vector(data, 16);
  const std::vector<double> y = random_vector(data, 16);
  const std::vector<double> sx = s.apply(x), sy = s.apply(y);
  EXPECT_NEAR(norm2_oracle(x), norm2_oracle(sx), 1e-12);
  EXPECT_NEAR(dot_oracle(x, y), dot_oracle(sx, sy), 1e-12);
}

TEST(Srht, ZeroAndShortInputs) {
  tsk::RngStream rng(503, 0);
  const tsk::Srht s(rng.child(1), 10, 8);
  const std::vector<double> zero10(10, 0.0);
  for (double v : s.apply(zero10)) EXPECT_EQ(0.0, v);

  // Short inputs are zero-padded up to the configured dim.
  const std::vector<double> shorter = {1.0, -2.0, 0.5};
  std::vector<double> padded = shorter;
  padded.resize(10, 0.0);
  EXPECT_EQ(s.apply(padded), s.apply(shorter));
}

TEST(Srht, MeanSquaredNormRatioNearOne) {
  tsk::RngStream data(504, 0);
  const std::vector<double> x = random_vector(data, 64);
  const double nx2 = dot_oracle(x, x);
  tsk::RngStream rng(505, 0);
  double mean = 0.0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const tsk::Srht s(rng.child(k), 64, 32);
    const std::vector<double> sx = s.apply(x);
    mean += dot_oracle(sx, sx) / nx2;
  }
  mean /= trials;
  EXPECT_GT(mean, 0.9);
  EXPECT_LT(mean, 1.1);
}

TEST(Srht, LinearAndDeterministic) {
  tsk::RngStream rng(506, 0);
  const tsk::Srht s(rng.child(1), 12, 20);
  tsk::RngStream data(507, 0);
  const std::vector<double> x = random_vector(data, 12);
  const std::vector<double> y = random_vector(data, 12);
  std::vector<double> combo(12);
  for (int i = 0; i < 12; ++i) combo[i] = 0.7 * x[i] - 1.9 * y[i];
  const std::vector<double> sx = s.apply(x), sy = s.apply(y), sc = s.apply(combo);
  for (std::size_t i = 0; i < sc.size(); ++i) {
    ASSERT_NEAR(0.7 * sx[i] - 1.9 * sy[i], sc[i], 1e-10);
  }

  // Same stream => bit-identical transform; different stream => different.
  const tsk::Srht s_same(tsk::RngStream(506, 0).child(1), 12, 20);
  EXPECT_EQ(sx, s_same.apply(x));
  const tsk::Srht s_other(tsk::RngStream(506, 0).child(2), 12, 20);
  EXPECT_NE(sx, s_other.apply(x));
}

TEST(Srht, RejectsBadShapes) {
  tsk::RngStream rng(508, 0);
  const tsk::Srht s(rng.child(1), 8, 4);
  EXPECT_THROW(s.apply(std::vector<double>(9, 1.0)), tsk::ShapeError);
  EXPECT_THROW(tsk::Srht(rng.child(2), 0, 4), tsk::ConfigError);
  EXPECT_THROW(tsk::Srht(rng.child(3), 8, 0), tsk::ConfigError);
}

// ---------------------------------------------------------------------------
// TensorSrht
// ---------------------------------------------------------------------------

TEST(TensorSrht, ZeroFactorGivesZero) {
  tsk::RngStream rng(510, 0);
  const tsk::TensorSrht t(rng.child(1), 6, 6, 32);
  tsk::RngStream data(511, 0);
  const std::vector<double> a = random_vector(data, 6);
  const std::vector<double> zero(6, 0.0);
  for (double v : t.apply(a, zero)) EXPECT_EQ(0.0, v);
  for (double v : t.apply(zero, a)) EXPECT_EQ(0.0, v);
}

TEST(TensorSrht, UnbiasedAgainstExplicitTensorOracle) {
  tsk::RngStream data(512, 0);
  const std::vector<double> a = random_vector(data, 8);
  const std::vector<double> b = random_vector(data, 8);
  const std::vector<double> c = random_vector(data, 8);
  const std::vector<double> d = random_vector(data, 8);
  const double target = dot_oracle(outer_oracle(a, b), outer_oracle(c, d));

  tsk::RngStream rng(513, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::TensorSrht t(rng.child(k), 8, 8, 64);
    samples.push_back(dot_oracle(t.apply(a, b), t.apply(c, d)));
  }
  expect_mean_within_3se(samples, target);
}

TEST(TensorSrht, NormConcentrationAtModerateWidth) {
  tsk::RngStream data(514, 0);
  const std::vector<double> a = random_vector(data, 8);
  const std::vector<double> b = random_vector(data, 8);
  const double target = dot_oracle(a, a) * dot_oracle(b, b);

  tsk::RngStream rng(515, 0);
  int hits = 0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const tsk::TensorSrht t(rng.child(k), 8, 8, 256);
    const std::vector<double> tv = t.apply(a, b);
    const double ratio = dot_oracle(tv, tv) / target;
    if (ratio > 0.7 && ratio < 1.3) ++hits;
  }
  EXPECT_GE(hits, 900);
}

TEST(TensorSrht, VarianceDecreasesWithWidth) {
  tsk::RngStream data(516, 0);
  const std::vector<double> a = random_vector(data, 8);
  const std::vector<double> b = random_vector(data, 8);

  tsk::RngStream rng(517, 0);
  std::vector<double> variances;
  for (std::size_t m : {64u, 256u, 1024u}) {
    std::vector<double> norms;
    for (int k = 0; k < 400; ++k) {
      const tsk::TensorSrht t(rng.child(1000 * m + k), 8, 8, m);
      const std::vector<double> tv = t.apply(a, b);
      norms.push_back(dot_oracle(tv, tv));
    }
    variances.push_back(sample_variance(norms));
  }
  EXPECT_GT(variances[0], variances[1]);
  EXPECT_GT(variances[1], variances[2]);
}

TEST(TensorSrht, BilinearInEachArgument) {
  tsk::RngStream rng(518, 0);
  const tsk::TensorSrht t(rng.child(1), 5, 7, 16);
  tsk::RngStream data(519, 0);
  const std::vector<double> a1 = random_vector(data, 5);
  const std::vector<double> a2 = random_vector(data, 5);
  const std::vector<double> b = random_vector(data, 7);
  std::vector<double> combo(5);
  for (int i = 0; i < 5; ++i) combo[i] = 2.5 * a1[i] + 0.3 * a2[i];
  const std::vector<double> lhs = t.apply(combo, b);
  const std::vector<double> t1 = t.apply(a1, b), t2 = t.apply(a2, b);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    ASSERT_NEAR(2.5 * t1[i] + 0.3 * t2[i], lhs[i], 1e-10);
  }
}

// ---------------------------------------------------------------------------
// PolySketch
// ---------------------------------------------------------------------------

TEST(PolySketch, DegreeOneIsASingleLeafSketch) {
  tsk::RngStream data(520, 0);
  const std::vector<double> y = random_vector(data, 8);
  const std::vector<double> z = random_vector(data, 8);

  tsk::RngStream rng(521, 0);
  std::vector<double> samples;
  for (int k = 0; k < 800; ++k) {
    const tsk::PolySketch q(rng.child(k), 1, 32, 8);
    const auto zy = q.apply_power(y);
    const auto zz = q.apply_power(z);
    ASSERT_EQ(2u, zy.size());
    samples.push_back(dot_oracle(zy[1], zz[1]));
    // The distinct-product path with one factor is the same computation.
    ASSERT_EQ(zy[1], q.apply_distinct({y}));
  }
  expect_mean_within_3se(samples, dot_oracle(y, z));
}

TEST(PolySketch, PowerSketchUnbiasedAtDegreeTwo) {
  tsk::RngStream data(522, 0);
  const std::vector<double> y = random_vector(data, 4);
  const std::vector<double> z = random_vector(data, 4);
  const double target = dot_oracle(outer_oracle(y, y), outer_oracle(z, z));

  tsk::RngStream rng(523, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::PolySketch q(rng.child(k), 2, 64, 4);
    samples.push_back(dot_oracle(q.apply_power(y)[2], q.apply_power(z)[2]));
  }
  expect_mean_within_3se(samples, target);
}

TEST(PolySketch, DistinctProductUnbiasedAtDegreeTwo) {
  tsk::RngStream data(524, 0);
  const std::vector<double> v1 = random_vector(data, 4);
  const std::vector<double> v2 = random_vector(data, 4);
  const std::vector<double> w1 = random_vector(data, 4);
  const std::vector<double> w2 = random_vector(data, 4);
  const double target = dot_oracle(outer_oracle(v1, v2), outer_oracle(w1, w2));

  tsk::RngStream rng(525, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::PolySketch q(rng.child(k), 2, 64, 4);
    samples.push_back(dot_oracle(q.apply_distinct({v1, v2}), q.apply_distinct({w1, w2})));
  }
  expect_mean_within_3se(samples, target);
}

TEST(PolySketch, PowerFastPathMatchesDistinctBitExactly) {
  // Z[l] from the leaf-switching pass must equal the naive product sketch of
  // l copies of x and (degree - l) copies of e1: same leaves, same tree.
  tsk::RngStream data(526, 0);
  const std::vector<double> x = random_vector(data, 6);
  const std::vector<double> e1 = e1_vector(6);

  for (int degree : {1, 2, 3, 5, 8}) {
    tsk::RngStream rng(527, degree);
    const tsk::PolySketch q(rng.child(1), degree, 32, 6);
    const auto z = q.apply_power(x);
    ASSERT_EQ(static_cast<std::size_t>(degree) + 1, z.size());
    for (int l = 0; l <= degree; ++l) {
      std::vector<std::vector<double>> factors;
      for (int i = 0; i < degree; ++i) factors.push_back(i < l ? x : e1);
      ASSERT_EQ(q.apply_distinct(factors), z[l]) << "degree=" << degree << " l=" << l;
    }
  }
}

TEST(PolySketch, OddDegreePaddedTreeStaysUnbiased) {
  tsk::RngStream data(528, 0);
  const std::vector<double> v1 = random_vector(data, 4);
  const std::vector<double> v2 = random_vector(data, 4);
  const std::vector<double> v3 = random_vector(data, 4);
  const std::vector<double> w1 = random_vector(data, 4);
  const std::vector<double> w2 = random_vector(data, 4);
  const std::vector<double> w3 = random_vector(data, 4);
  const double target =
      dot_oracle(v1, w1) * dot_oracle(v2, w2) * dot_oracle(v3, w3);

  tsk::RngStream rng(529, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::PolySketch q(rng.child(k), 3, 64, 4);
    samples.push_back(
        dot_oracle(q.apply_distinct({v1, v2, v3}), q.apply_distinct({w1, w2, w3})));
  }
  expect_mean_within_3se(samples, target);
}

TEST(PolySketch, ZeroFactorGivesZero) {
  tsk::RngStream rng(530, 0);
  const tsk::PolySketch q(rng.child(1), 3, 32, 5);
  tsk::RngStream data(531, 0);
  const std::vector<double> a = random_vector(data, 5);
  const std::vector<double> b = random_vector(data, 5);
  const std::vector<double> zero(5, 0.0);
  for (double v : q.apply_distinct({a, zero, b})) EXPECT_EQ(0.0, v);
}

TEST(PolySketch, MixedLeafDimsSketchCrossSpaceProducts) {
  tsk::RngStream data(532, 0);
  const std::vector<double> a = random_vector(data, 3);
  const std::vector<double> b = random_vector(data, 5);
  const std::vector<double> c = random_vector(data, 3);
  const std::vector<double> d = random_vector(data, 5);
  const double target = dot_oracle(a, c) * dot_oracle(b, d);

  tsk::RngStream rng(533, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::PolySketch q(rng.child(k), 2, 64, std::vector<std::size_t>{3, 5});
    samples.push_back(dot_oracle(q.apply_distinct({a, b}), q.apply_distinct({c, d})));
  }
  expect_mean_within_3se(samples, target);

  const tsk::PolySketch q(rng.child(999999), 2, 64, std::vector<std::size_t>{3, 5});
  EXPECT_THROW(q.apply_power(a), tsk::ConfigError);
}

TEST(PolySketch, SparseLeafStaysUnbiased) {
  tsk::RngStream data(534, 0);
  const std::vector<double> y = random_vector(data, 4);
  const std::vector<double> z = random_vector(data, 4);
  const double target = dot_oracle(outer_oracle(y, y), outer_oracle(z, z));

  tsk::RngStream rng(535, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::PolySketch q(rng.child(k), 2, 64, 4, tsk::LeafKind::kSparse);
    samples.push_back(dot_oracle(q.apply_power(y)[2], q.apply_power(z)[2]));
  }
  expect_mean_within_3se(samples, target);
}

TEST(PolySketch, RejectsBadConfigAndArity) {
  tsk::RngStream rng(536, 0);
  EXPECT_THROW(tsk::PolySketch(rng.child(1), 0, 32, 4), tsk::ConfigError);
  EXPECT_THROW(tsk::PolySketch(rng.child(2), 2, 0, 4), tsk::ConfigError);
  EXPECT_THROW(tsk::PolySketch(rng.child(3), 3, 32, std::vector<std::size_t>{4, 4}),
               tsk::ConfigError);

  const tsk::PolySketch q(rng.child(4), 2, 32, 4);
  const std::vector<double> a = {1.0, 2.0, 3.0, 4.0};
  EXPECT_THROW(q.apply_distinct({a}), tsk::ArityError);
  EXPECT_THROW(q.apply_distinct({a, a, a}), tsk::ArityError);
  EXPECT_THROW(q.apply_power(std::vector<double>(5, 1.0)), tsk::ShapeError);
}

// ---------------------------------------------------------------------------
// CountSketchLeaf
// ---------------------------------------------------------------------------

TEST(CountSketchLeaf, UnbiasedLinearAndSparse) {
  tsk::RngStream data(537, 0);
  const std::vector<double> x = random_vector(data, 16);
  const std::vector<double> y = random_vector(data, 16);

  tsk::RngStream rng(538, 0);
  std::vector<double> samples;
  for (int k = 0; k < 2000; ++k) {
    const tsk::CountSketchLeaf cs(rng.child(k), 16, 8);
    samples.push_back(dot_oracle(cs.apply(x), cs.apply(y)));
  }
  expect_mean_within_3se(samples, dot_oracle(x, y));

  const tsk::CountSketchLeaf cs(rng.child(424242), 16, 8);
  std::vector<double> combo(16);
  for (int i = 0; i < 16; ++i) combo[i] = -1.1 * x[i] + 0.4 * y[i];
  const std::vector<double> cx = cs.apply(x), cy = cs.apply(y), cc = cs.apply(combo);
  for (std::size_t i = 0; i < cc.size(); ++i) {
    ASSERT_NEAR(-1.1 * cx[i] + 0.4 * cy[i], cc[i], 1e-10);
  }
  EXPECT_THROW(cs.apply(std::vector<double>(17, 1.0)), tsk::ShapeError);
}

// ---------------------------------------------------------------------------
// GaussianJl
// ---------------------------------------------------------------------------

TEST(GaussianJl, IdentityOverrideAndZero) {
  const tsk::GaussianJl id = tsk::GaussianJl::identity(5);
  EXPECT_TRUE(id.is_identity());
  const std::vector<double> x = {1.0, -2.0, 3.0, -4.0, 5.0};
  EXPECT_EQ(x, id.apply(x));
  EXPECT_THROW(id.apply(std::vector<double>(4, 0.0)), tsk::ShapeError);

  tsk::RngStream rng(540, 0);
  const tsk::GaussianJl g(rng.child(1), 6, 12);
  EXPECT_FALSE(g.is_identity());
  for (double v : g.apply(std::vector<double>(6, 0.0))) EXPECT_EQ(0.0, v);
  EXPECT_THROW(g.apply(std::vector<double>(5, 0.0)), tsk::ShapeError);
}

TEST(GaussianJl, NormConcentrationAndLinearity) {
  tsk::RngStream data(541, 0);
  const std::vector<double> x = random_vector(data, 32);
  const double nx2 = dot_oracle(x, x);

  tsk::RngStream rng(542, 0);
  double mean = 0.0;
  const int trials = 1000;
  for (int k = 0; k < trials; ++k) {
    const tsk::GaussianJl g(rng.child(k), 32, 256);
    const std::vector<double> gx = g.apply(x);
    mean += dot_oracle(gx, gx) / nx2;
  }
  mean /= trials;
  EXPECT_GT(mean, 0.9);
  EXPECT_LT(mean, 1.1);

  const tsk::GaussianJl g(rng.child(31337), 32, 64);
  const std::vector<double> y = random_vector(data, 32);
  std::vector<double> combo(32);
  for (int i = 0; i < 32; ++i) combo[i] = 0.25 * x[i] + 4.0 * y[i];
  const std::vector<double> gx = g.apply(x), gy = g.apply(y), gc = g.apply(combo);
  for (std::size_t i = 0; i < gc.size(); ++i) {
    ASSERT_NEAR(0.25 * gx[i] + 4.0 * gy[i], gc[i], 1e-10);
  }
}

}  // namespace
