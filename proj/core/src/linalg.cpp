#include "cl_lab/linalg.hpp"

#include <cmath>
#include <string>

#include "cl_lab/error.hpp"

namespace cl_lab {

namespace {

constexpr double kClampRel = 1e-10;

std::string dims(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

// Flip column k of `a` (and of `b`) so the largest-magnitude entry of a's column is positive.
void fix_signs(Mat& a, Mat* b) {
  for (Eigen::Index k = 0; k < a.cols(); ++k) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      // first index wins ties so the choice is deterministic
      if (std::abs(a(i, k)) > best + 1e-14) {
        best = std::abs(a(i, k));
        arg = i;
      }
    }
    if (a(arg, k) < 0) {
      a.col(k) *= -1.0;
      if (b) b->col(k) *= -1.0;
    }
  }
}

}  // namespace

bool is_finite(const Mat& m) { return m.allFinite(); }

Mat SpectralDecomp::reconstruct() const { return left * singular_values.asDiagonal() * right.transpose(); }

SpectralDecomp svd(const Mat& m) {
  if (!m.allFinite()) fail(ErrorKind::Numerical, "svd: non-finite entries in " + dims(m) + " matrix");
  Eigen::JacobiSVD<Mat> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (solver.info() != Eigen::Success)
    fail(ErrorKind::Numerical, "svd: no convergence for " + dims(m) + " matrix");
  SpectralDecomp out{solver.matrixU(), solver.singularValues(), solver.matrixV()};
  fix_signs(out.left, &out.right);
  return out;
}

EigenDecomp eigh(const Mat& s) {
  require(s.rows() == s.cols(), "eigh: matrix must be square, got " + dims(s));
  const double scale = s.norm();
  if ((s - s.transpose()).norm() > 1e-8 * std::max(scale, 1e-300))
    fail(ErrorKind::Domain, "eigh: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> solver(s);
  if (solver.info() != Eigen::Success)
    fail(ErrorKind::Numerical, "eigh: no convergence for " + dims(s) + " matrix");
  EigenDecomp out;
  out.values.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  fix_signs(out.vectors, nullptr);
  return out;
}

Mat haar_orthogonal(int d, Rng& rng) {
  require(d >= 1, "haar_orthogonal: d must be >= 1");
  Mat g = rng.gaussian_matrix(d, d);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ() * Mat::Identity(d, d);
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < d; ++k) {
    if (r(k, k) < 0) q.col(k) *= -1.0;
  }
  return q;
}

Vec clamp_psd_eigenvalues(const Vec& values) {
  Vec out = values;
  if (out.size() == 0) return out;
  const double top = std::max(out.maxCoeff(), 0.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (out(i) < 0) {
      if (out(i) < -kClampRel * top && out(i) < -1e-300)
        fail(ErrorKind::Domain, "matrix is not positive semidefinite (eigenvalue " + std::to_string(out(i)) + ")");
      out(i) = 0.0;
    }
  }
  return out;
}

double effective_rank(const Mat& s) {
  const EigenDecomp e = eigh(s);
  const Vec lam = clamp_psd_eigenvalues(e.values.values);
  const double tr = lam.sum();
  const double tr2 = lam.squaredNorm();
  if (tr2 <= 0) fail(ErrorKind::Domain, "effective_rank: zero matrix");
  return tr * tr / tr2;
}

double erank_of_powered_spectrum(const Spectrum& sp, double p) {
  require(sp.size() > 0, "erank_of_powered_spectrum: empty spectrum");
  require(p >= 0, "erank_of_powered_spectrum: negative exponent");
  double s1 = 0.0;
  double s2 = 0.0;
  for (Eigen::Index i = 0; i < sp.size(); ++i) {
    const double v = sp.values(i);
    require(v >= 0, "erank_of_powered_spectrum: negative spectrum entry");
    const double x = (p == 0.0) ? 1.0 : std::pow(v, p);
    s1 += x;
    s2 += x * x;
  }
  if (s2 <= 0) fail(ErrorKind::Domain, "erank_of_powered_spectrum: zero spectrum");
  return s1 * s1 / s2;
}

Mat psd_power(const Mat& s, double p) {
  require(p >= 0, "psd_power: negative exponent");
  const EigenDecomp e = eigh(s);
  Vec lam = clamp_psd_eigenvalues(e.values.values);
  for (Eigen::Index i = 0; i < lam.size(); ++i) lam(i) = (p == 0.0) ? 1.0 : std::pow(lam(i), p);
  return e.vectors * lam.asDiagonal() * e.vectors.transpose();
}

Mat pinv(const Mat& m, double rtol) {
  require(rtol > 0 && rtol < 1, "pinv: rtol must lie in (0,1)");
  const SpectralDecomp sd = svd(m);
  const double top = sd.singular_values.size() ? sd.singular_values(0) : 0.0;
  Vec inv = Vec::Zero(sd.singular_values.size());
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    const double s = sd.singular_values(i);
    if (s > rtol * top && s > 0) inv(i) = 1.0 / s;
  }
  return sd.right * inv.asDiagonal() * sd.left.transpose();
}

FourthMomentCoeffs pq_fourth_moment_coeffs(double erank_a, int d) {
  require(d >= 2, "pq_fourth_moment_coeffs: d must be >= 2");
  require(erank_a >= 1.0 - 1e-12 && erank_a <= d + 1e-12, "pq_fourth_moment_coeffs: erank out of [1, d]");
  const double dd = d;
  const double p = (dd - erank_a) / ((dd - 1.0) * (dd + 2.0));
  const double q = (erank_a + 1.0 + (erank_a - 1.0) / (dd - 1.0)) / (dd + 2.0);
  return {p, q};
}

Spectrum singular_spectrum(const Mat& m) { return Spectrum{svd(m).singular_values}; }

}  // namespace cl_lab
