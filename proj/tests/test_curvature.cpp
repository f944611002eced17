#include <gtest/gtest.h>

#include <cmath>

#include "cl_lab/curvature.hpp"
#include "cl_lab/error.hpp"
#include "cl_lab/stats.hpp"
#include "support.hpp"

using namespace cl_lab;
using namespace cl_lab::testing;

namespace {

Vec fd_hvp(const DlnParams& p, const Task& t, const DlnParams& v, double h) {
  return (grad(p + h * v, t, 0.0).flatten() - grad(p - h * v, t, 0.0).flatten()) / (2 * h);
}

Mat kron(const Mat& a, const Mat& b) {
  Mat k(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return k;
}

struct Instance {
  DlnParams p;
  Task t;
};

Instance whitened_instance(int d, int L, int rank, Rng& rng) {
  Instance in;
  in.t = synth_teacher_task(d, 4 * d, rank, 0.1, rng);
  in.p = random_params(d, L, 1.0, rng);
  return in;
}

}  // namespace

TEST(Hvp, MatchesFiniteDifferences) {
  Rng rng(1);
  for (int d : {3, 6, 8})
    for (int L : {1, 2, 3, 4}) {
      const DlnParams p = random_params(d, L, 1.0, rng);
      const Task t = random_task(d, 2 * d, rng);
      const DlnParams v = random_params(d, L, 1.0, rng);
      EXPECT_LE(rel_err(hvp(p, t, v).flatten(), fd_hvp(p, t, v, 1e-5)), 1e-5) << "d=" << d << " L=" << L;
      EXPECT_LE(rel_err(hvp(p, gram_stats(t), v).flatten(), hvp(p, t, v).flatten()), 1e-10);
    }
}

TEST(Hvp, SingleLayerIsRightMultiplication) {
  Rng rng(2);
  const DlnParams p = random_params(5, 1, 1.0, rng);
  const Task t = random_task(5, 11, rng);
  const DlnParams v = random_params(5, 1, 1.0, rng);
  EXPECT_LE(rel_err(hvp(p, t, v).weights[0], Mat(v.weights[0] * t.inputs * t.inputs.transpose())), 1e-12);
  EXPECT_EQ(norm_sq(hvp(p, t, DlnParams::zeros(5, 1))), 0.0);
}

TEST(Hvp, Linear) {
  Rng rng(3);
  const DlnParams p = random_params(5, 3, 1.0, rng);
  const Task t = random_task(5, 10, rng);
  const DlnParams v = random_params(5, 3, 1.0, rng), w = random_params(5, 3, 1.0, rng);
  const Vec lhs = hvp(p, t, 2.0 * v + (-0.7) * w).flatten();
  const Vec rhs = 2.0 * hvp(p, t, v).flatten() - 0.7 * hvp(p, t, w).flatten();
  EXPECT_LE((lhs - rhs).norm(), 1e-10 * rhs.norm());
}

TEST(Hvp, Symmetric) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const DlnParams p = random_params(6, 3, 1.0, rng);
    const Task t = random_task(6, 12, rng);
    const DlnParams v = random_params(6, 3, 1.0, rng), w = random_params(6, 3, 1.0, rng);
    const double a = dot(v, hvp(p, t, w)), b = dot(w, hvp(p, t, v));
    EXPECT_LE(std::abs(a - b), 1e-8 * std::max(std::abs(a), 1.0));
  }
}

TEST(HessianFull, SingleLayerKronecker) {
  Rng rng(5);
  const DlnParams p = random_params(4, 1, 1.0, rng);
  const Task t = random_task(4, 9, rng);
  const Mat want = kron(t.inputs * t.inputs.transpose(), Mat::Identity(4, 4));
  EXPECT_LE(rel_err(hessian_full(p, t), want), 1e-12);
}

TEST(HessianFull, SymmetricAndTraceMatchesClosedForm) {
  Rng rng(6);
  for (int L : {2, 3, 4}) {
    const DlnParams p = random_params(5, L, 1.0, rng);
    const Task t = random_task(5, 10, rng);
    const Mat h = hessian_full(p, t);
    EXPECT_LE((h - h.transpose()).norm(), 1e-8 * h.norm());
    EXPECT_NEAR(h.trace(), hessian_trace_closed(p, t), 1e-8 * std::abs(h.trace()));
  }
  EXPECT_THROW(hessian_full(random_params(30, 6, 1.0, rng), random_task(30, 30, rng)), Error);
}

TEST(Trace, ClosedFormValues) {
  Rng rng(7);
  Task t;
  t.inputs = Mat::Identity(6, 6);
  t.labels = rng.gaussian_matrix(6, 6);
  EXPECT_NEAR(hessian_trace_closed(init_params(6, 1, 1.0, rng), t), 36.0, 1e-12);
  EXPECT_NEAR(hessian_trace_closed(DlnParams::zeros(6, 1), t), 36.0, 1e-12);
  EXPECT_EQ(hessian_trace_closed(DlnParams::zeros(6, 3), t), 0.0);
  const Task w = synth_teacher_task(5, 20, 2, 0.0, rng);
  EXPECT_NEAR(hessian_trace_closed(DlnParams::zeros(5, 1), w), 25.0, 1e-8);
}

TEST(Trace, Hutchinson) {
  Rng rng(8);
  const DlnParams p = random_params(6, 3, 1.0, rng);
  const Task t = random_task(6, 12, rng);
  const TraceEstimate e = hessian_trace_hutchinson(p, t, 400, rng);
  EXPECT_LE(std::abs(e.estimate - hessian_trace_closed(p, t)), 4 * e.std_err);

  Task id;
  id.inputs = Mat::Identity(5, 5);
  id.labels = rng.gaussian_matrix(5, 5);
  const TraceEstimate f = hessian_trace_hutchinson(random_params(5, 1, 1.0, rng), id, 1000, rng);
  EXPECT_LE(std::abs(f.estimate - 25.0), 4 * f.std_err + 1e-9);

  const TraceEstimate z = hessian_trace_hutchinson(DlnParams::zeros(4, 3), random_task(4, 8, rng), 10, rng);
  EXPECT_EQ(z.estimate, 0.0);
  EXPECT_THROW(hessian_trace_hutchinson(p, t, 1, rng), Error);
}

TEST(Alpha, DefinitionExamples) {
  EXPECT_NEAR(alignment_alpha(3.0, 5.0, 3.0, 5).alpha, 1.0, 1e-15);  // A = I_5, r^T r = 3
  EXPECT_NEAR(alignment_alpha(1.0, 1.0, 1.0, 7).alpha, 7.0, 1e-15);  // A = v v^T, r = v
  EXPECT_NEAR(alignment_alpha(4.0, 4.0, 1.0, 2).alpha, 2.0, 1e-15);  // A = diag(4, 0), r = e1
  const AlignmentRecord r = alignment_alpha(2.0, 3.0, 4.0, 10);
  EXPECT_EQ(r.alpha, 10 * 2.0 / (3.0 * 4.0));
  EXPECT_EQ(r.dim_theta, 10u);
  EXPECT_THROW(alignment_alpha(1.0, 0.0, 1.0, 3), Error);
  EXPECT_THROW(alignment_alpha(1.0, 1.0, 0.0, 3), Error);
}

TEST(Alpha, ScaleInvariant) {
  for (double c : {0.5, 2.0, 8.0}) {
    EXPECT_EQ(alignment_alpha(c * 3.0, c * 7.0, 2.0, 9).alpha, alignment_alpha(3.0, 7.0, 2.0, 9).alpha);
    EXPECT_EQ(alignment_alpha(c * c * 3.0, 7.0, c * c * 2.0, 9).alpha, alignment_alpha(3.0, 7.0, 2.0, 9).alpha);
  }
}

TEST(Alpha, RandomDirectionBaseline) {
  Rng rng(9);
  const DlnParams p = random_params(5, 2, 1.0, rng);
  const Task t = random_task(5, 10, rng);
  const GramStats s = gram_stats(t);
  const double n = double(p.dim_theta());
  RunningStats quad;
  for (int k = 0; k < 4000; ++k) {
    const DlnParams r = DlnParams::unflatten(rng.gaussian_vector(Eigen::Index(n)) / std::sqrt(n), 5, 2);
    quad.add(dot(r, hvp(p, s, r)));
  }
  // E[r^T H r] = tr(H) / dim for r ~ N(0, I / dim)
  EXPECT_LE(std::abs(quad.mean() - hessian_trace_closed(p, t) / n), 4 * quad.std_err());
}

TEST(Alpha, EigenvectorDirection) {
  Rng rng(10);
  const DlnParams p = random_params(4, 2, 1.0, rng);
  const Task t = random_task(4, 8, rng);
  const Mat h = hessian_full(p, t);
  const EigenDecomp e = eigh(h);
  const DlnParams top = DlnParams::unflatten(e.vectors.col(0), 4, 2);
  EXPECT_NEAR(alignment_of(p, t, top).alpha, 32.0 * e.values.values(0) / h.trace(), 1e-8);
}

TEST(ClosedForm, ZeroWeightsGradNorm) {
  Rng rng(11);
  const Task t = synth_teacher_task(6, 24, 3, 0.0, rng);
  const Mat yx = t.labels * t.inputs.transpose();
  EXPECT_NEAR(grad_norm_expected_closed(DlnParams::zeros(6, 1), t), yx.squaredNorm(), 1e-8 * yx.squaredNorm());
}

TEST(ClosedForm, RequiresWhitenedTask) {
  Rng rng(12);
  const DlnParams p = random_params(4, 2, 1.0, rng);
  const Task t = random_task(4, 12, rng);
  EXPECT_THROW(grad_norm_expected_closed(p, t), Error);
  EXPECT_THROW(ghg_expected_closed(p, t), Error);
  EXPECT_THROW(alpha_closed(p, t), Error);
}

TEST(ClosedForm, InterpolatingErrorTermVanishes) {
  Rng rng(13);
  const Task t = synth_teacher_task(6, 24, 3, 0.0, rng);
  DlnParams p;
  p.weights = {t.labels * pinv(t.inputs)};
  EXPECT_LE((product_range(p, 1, 1) * t.inputs - t.labels).norm(), 1e-10);
  Rng mc(14);
  const RotationMoments m = rotation_moments(p, t, 2000, mc);
  EXPECT_LE(std::abs(m.mean_ghg() - ghg_expected_closed(p, t)), 5 * m.se_ghg());
}

class ClosedVsMonteCarlo : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(ClosedVsMonteCarlo, Agree) {
  const auto [L, d] = GetParam();
  Rng rng(100 + std::uint64_t(L));
  const Instance in = whitened_instance(d, L, 3, rng);
  Rng mc(200 + std::uint64_t(L));
  const RotationMoments m = rotation_moments(in.p, in.t, 2000, mc);
  EXPECT_LE(std::abs(m.mean_ghg() - ghg_expected_closed(in.p, in.t)), 5 * m.se_ghg());
  EXPECT_LE(std::abs(m.mean_norm_sq() - grad_norm_expected_closed(in.p, in.t)), 5 * m.se_norm_sq());
  Rng mc2(200 + std::uint64_t(L));
  const AlignmentRecord a = expected_alpha_monte_carlo(in.p, in.t, 2000, mc2);
  const AlignmentRecord c = alpha_closed(in.p, in.t);
  EXPECT_EQ(a.estimator, Estimator::MonteCarlo);
  EXPECT_EQ(c.estimator, Estimator::ClosedForm);
  EXPECT_EQ(a.n_samples, 2000u);
  EXPECT_LE(std::abs(a.alpha - c.alpha), 5 * a.std_err + 1e-10 * c.alpha);
  EXPECT_NEAR(c.alpha, double(c.dim_theta) * c.quad_form / (c.hessian_trace * c.vec_norm_sq), 1e-12 * c.alpha);
}

INSTANTIATE_TEST_SUITE_P(Shapes, ClosedVsMonteCarlo,
                         ::testing::Values(std::make_pair(1, 8), std::make_pair(2, 12), std::make_pair(3, 12),
                                           std::make_pair(4, 16)));

TEST(MonteCarlo, SingleRotationIsPointAlignment) {
  Rng rng(15);
  const Instance in = whitened_instance(6, 2, 2, rng);
  Rng mc(16);
  const AlignmentRecord a = expected_alpha_monte_carlo(in.p, in.t, 1, mc);
  Rng replay(16);
  Rng rk(child_seed(replay.next_u64(), 0));
  const Task rotated = rotate_task_with(in.t, haar_orthogonal(6, rk)).new_task;
  const AlignmentRecord b = alignment_of(in.p, in.t, grad(in.p, rotated, 0.0));
  EXPECT_NEAR(a.alpha, b.alpha, 1e-10 * b.alpha);
}

TEST(MonteCarlo, IndependentOfThreadCount) {
  Rng rng(17);
  const Instance in = whitened_instance(6, 2, 2, rng);
  Rng a(18), b(18);
  const RotationMoments x = rotation_moments(in.p, in.t, 64, a);
  const RotationMoments y = rotation_moments(in.p, in.t, 64, b);
  EXPECT_EQ(x.ghg, y.ghg);
  EXPECT_EQ(x.norm_sq, y.norm_sq);
}

TEST(Lanczos, DiagonalWithBasisStart) {
  const Vec diag = (Vec(4) << 5, 3, 2, 1).finished();
  const LinearOp op = [&](const Vec& v) { return Vec(diag.cwiseProduct(v)); };
  const RitzSpectrum s = lanczos(op, Vec::Unit(4, 0), 4);
  ASSERT_EQ(s.nodes.size(), 1);
  EXPECT_NEAR(s.nodes(0), 5.0, 1e-12);
  EXPECT_NEAR(s.weights(0), 1.0, 1e-12);
  EXPECT_THROW(lanczos(op, Vec::Ones(4), 2), Error);
}

TEST(Lanczos, OrthogonalEigenvectorGetsNoWeight) {
  const Vec diag = (Vec(4) << 5, 3, 2, 1).finished();
  const LinearOp op = [&](const Vec& v) { return Vec(diag.cwiseProduct(v)); };
  const Vec start = (Vec(4) << 0, 1, 1, 1).finished().normalized();
  const RitzSpectrum s = lanczos(op, start, 4);
  EXPECT_NEAR(s.weights.sum(), 1.0, 1e-10);
  for (Eigen::Index i = 0; i < s.nodes.size(); ++i)
    if (std::abs(s.nodes(i) - 5.0) < 1e-6) EXPECT_LE(s.weights(i), 1e-12);
}

TEST(Lanczos, FullStepsMatchExactProjection) {
  Rng rng(19);
  const DlnParams p = random_params(4, 2, 1.0, rng);
  const Task t = random_task(4, 8, rng);
  const Mat h = hessian_full(p, t);
  const EigenDecomp e = eigh(h);
  const Vec u = rng.gaussian_vector(h.rows()).normalized();
  const RitzSpectrum s = lanczos(hessian_operator(p, t), u, int(h.rows()));
  EXPECT_NEAR(s.weights.sum(), 1.0, 1e-10);
  const std::vector<double> grid = cdf_grid(e.values.values, 1e-3, 2000);
  const std::vector<double> exact = exact_projection_cdf(e, u, grid);
  double sup = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double ritz = 0.0;
    for (Eigen::Index i = 0; i < s.nodes.size(); ++i)
      if (s.nodes(i) <= grid[g]) ritz += s.weights(i);
    sup = std::max(sup, std::abs(ritz - exact[g]));
  }
  EXPECT_LE(sup, 1e-6);
}

TEST(Cdf, SingleNodeIsGaussian) {
  RitzSpectrum s;
  s.nodes = Vec::Constant(1, 2.0);
  s.weights = Vec::Ones(1);
  const CdfCurve c = projection_cdf(s, 0.5, 101);
  for (std::size_t g = 0; g < c.grid.size(); ++g)
    EXPECT_NEAR(c.cdf[g], 0.5 * (1 + std::erf((c.grid[g] - 2.0) / (0.5 * std::sqrt(2.0)))), 1e-12);
  EXPECT_NEAR(c.cdf.back(), 1.0, 1e-6);
  EXPECT_NEAR(c.cdf.front(), 0.0, 1e-6);
  EXPECT_THROW(projection_cdf(s, 0.0, 10), Error);
}

TEST(Cdf, UniformWeightsGiveEqualSteps) {
  RitzSpectrum s;
  s.nodes = (Vec(3) << 0, 1, 2).finished();
  s.weights = Vec::Constant(3, 1.0 / 3);
  const CdfCurve c = projection_cdf(s, 0.01, std::vector<double>{-0.5, 0.5, 1.5, 2.5});
  EXPECT_NEAR(c.cdf[0], 0.0, 1e-9);
  EXPECT_NEAR(c.cdf[1], 1.0 / 3, 1e-9);
  EXPECT_NEAR(c.cdf[2], 2.0 / 3, 1e-9);
  EXPECT_NEAR(c.cdf[3], 1.0, 1e-9);
}

TEST(Cdf, BroadenedMatchesExactForSmallSigma) {
  Rng rng(20);
  const DlnParams p = random_params(3, 2, 1.0, rng);
  const Task t = random_task(3, 6, rng);
  const EigenDecomp e = eigh(hessian_full(p, t));
  const Vec u = rng.gaussian_vector(18).normalized();
  const RitzSpectrum s = exact_projection_spectrum(e, u);
  const double sigma = 1e-4 * e.values.values.maxCoeff();
  const std::vector<double> grid = cdf_grid(e.values.values, sigma, 4000);
  const CdfCurve c = projection_cdf(s, sigma, grid);
  const std::vector<double> exact = exact_projection_cdf(e, u, grid);
  double sup = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    bool near_node = false;
    for (Eigen::Index i = 0; i < s.nodes.size(); ++i) near_node |= std::abs(grid[g] - s.nodes(i)) < 4 * sigma;
    if (!near_node) sup = std::max(sup, std::abs(c.cdf[g] - exact[g]));
  }
  EXPECT_LE(sup, 0.02);
}

TEST(Cdf, TopTraceRegion) {
  const Vec ev = (Vec(4) << 1, 4, 2, 3).finished();
  EXPECT_EQ(top_trace_threshold(ev, 0.1), 4.0);
  EXPECT_EQ(top_trace_threshold(ev, 0.5), 3.0);
  EXPECT_EQ(top_trace_threshold(ev, 1.0), 1.0);
  RitzSpectrum s;
  s.nodes = (Vec(3) << 1, 2, 3).finished();
  s.weights = (Vec(3) << 0.2, 0.3, 0.5).finished();
  EXPECT_NEAR(mass_above(s, 2.0), 0.8, 1e-15);
  EXPECT_NEAR(mass_above(s, 3.5), 0.0, 1e-15);
}
