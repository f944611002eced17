#pragma once

#include <Eigen/Dense>

#include "cl_lab/rng.hpp"

namespace cl_lab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Thin SVD m = left * diag(singular_values) * right^T.
// Singular values nonincreasing; the largest-magnitude entry of each left
// vector is positive.
struct SpectralDecomp {
  Mat left;
  Vec singular_values;
  Mat right;

  Mat reconstruct() const;
};

// Nonincreasing nonnegative values.
struct Spectrum {
  Vec values;

  Eigen::Index size() const { return values.size(); }
};

struct EigenDecomp {
  Spectrum values;  // descending
  Mat vectors;      // column k pairs with values.values(k)
};

SpectralDecomp svd(const Mat& m);

// Symmetric eigendecomposition, eigenvalues descending.
EigenDecomp eigh(const Mat& s);

// Haar-distributed orthogonal d x d matrix.
Mat haar_orthogonal(int d, Rng& rng);

// tr(s)^2 / tr(s^2) after clamping roundoff negatives.
double effective_rank(const Mat& s);

// erank(diag(sp)^p) with 0^0 = 1.
double erank_of_powered_spectrum(const Spectrum& sp, double p);

// Clamped eigenvalues of a PSD matrix raised to p.
Mat psd_power(const Mat& s, double p);

// Moore-Penrose pseudo-inverse; singular values <= rtol * sigma_max are dropped.
Mat pinv(const Mat& m, double rtol = 1e-10);

struct FourthMomentCoeffs {
  double p;
  double q;
};

FourthMomentCoeffs pq_fourth_moment_coeffs(double erank_a, int d);

// Eigenvalues in [-1e-10 * lambda_max, 0) become 0.
Vec clamp_psd_eigenvalues(const Vec& values);

bool is_finite(const Mat& m);

Spectrum singular_spectrum(const Mat& m);

}  // namespace cl_lab
