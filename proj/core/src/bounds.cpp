#include "cl_lab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cl_lab/error.hpp"

namespace cl_lab {

namespace {

// erank of the per-layer spectrum Sigma^{1/L} raised to integer power k.
using ErankFn = std::function<double(int k)>;

ErankFn spectrum_path(const Spectrum& sigma, int L) {
  return [sigma, L](int k) { return erank_of_powered_spectrum(sigma, double(k) / L); };
}

ErankFn matrix_path(const Spectrum& sigma, int L) {
  const Mat diag = sigma.values.asDiagonal();
  return [diag, L](int k) { return effective_rank(psd_power(diag, double(k) / L)); };
}

void check_inputs(const BoundInputs& in) {
  require(in.L >= 1, "bounds: depth must be >= 1");
  require(in.d >= 1, "bounds: dimension must be >= 1");
  require(in.sigma.size() > 0, "bounds: empty spectrum");
  require(in.dim_theta > 0, "bounds: dim_theta must be positive");
}

double tighter_with(const BoundInputs& in, const ErankFn& er) {
  check_inputs(in);
  const int L = in.L;
  const double d = in.d;
  const double rho = in.rho;
  const double tau = in.tau;
  double pair_sum = 0.0;
  for (int i = 1; i <= L; ++i)
    for (int j = 1; j <= L; ++j) pair_sum += er(2 * std::max(i + j - 2, 3 * L - (i + j)));
  double left_sum = 0.0;
  double right_sum = 0.0;
  for (int i = 1; i <= L; ++i) {
    left_sum += er(2 * std::min(i - 1, L - i));
    right_sum += er(2 * std::min(i - 1, 2 * L - i));
  }
  const double num = 1.0 - rho - rho * (1 + rho) * (1 + rho) / d + (1.0 - tau - 2.0 * rho) / (double(L) * L * d) * pair_sum;
  const double den = (left_sum / L) * (1.0 + (1 + rho) * (1 + rho) * right_sum / (L * d));
  return num / den * double(in.dim_theta) / er(2 * (L - 1));
}

double nonwhitened_with(const BoundInputs& in, const ErankFn& er) {
  check_inputs(in);
  require(in.input_spectrum.has_value(), "bound_nonwhitened: input spectrum is required");
  const int L = in.L;
  const double kappa = condition_number(*in.input_spectrum);
  double pair_sum = 0.0;
  for (int i = 1; i <= L; ++i)
    for (int j = 1; j <= L; ++j) pair_sum += er(std::max(i + j - 2, 3 * L - i - j));
  double mid_sum = 0.0;
  double left_sum = 0.0;
  for (int i = 1; i <= L; ++i) {
    mid_sum += er(std::min(i - 1, 2 * L - i));
    left_sum += er(2 * std::min(i - 1, L - i));
  }
  return (1.0 / (kappa * kappa * kappa)) * (pair_sum / mid_sum) * double(in.dim_theta) /
         (er(2 * (L - 1)) * left_sum);
}

}  // namespace

bool BoundInputs::regime_ok() const { return rho >= 0 && rho < 1.0 / 3.0 && tau >= 0 && tau < 1.0 / 3.0; }

double condition_number(const Spectrum& s) {
  require(s.size() > 0, "condition_number: empty spectrum");
  const double top = s.values.maxCoeff();
  require(top > 0, "condition_number: zero spectrum");
  double low = top;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s.values(i) > 1e-12 * top) low = std::min(low, s.values(i));
  return top / low;
}

double bound_interpretable(const BoundInputs& in) {
  check_inputs(in);
  const double d = in.d;
  const double rho = in.rho;
  const double pref = (1.0 - rho - rho * (1 + rho) * (1 + rho) / d) / (1.0 + (1 + rho) * (1 + rho));
  const double er = erank_of_powered_spectrum(in.sigma, 2.0 * (1.0 - 1.0 / in.L));
  return pref * double(in.dim_theta) / (d * er);
}

double bound_tighter(const BoundInputs& in) { return tighter_with(in, spectrum_path(in.sigma, in.L)); }

double bound_tighter_matrix_path(const BoundInputs& in) { return tighter_with(in, matrix_path(in.sigma, in.L)); }

double bound_nonwhitened(const BoundInputs& in) { return nonwhitened_with(in, spectrum_path(in.sigma, in.L)); }

double bound_nonwhitened_matrix_path(const BoundInputs& in) {
  return nonwhitened_with(in, matrix_path(in.sigma, in.L));
}

BoundReport check_bounds(const DlnParams& p, const Task& old_task, std::optional<double> alpha_measured) {
  validate(p);
  const InterpolationReport ir = interpolation_diagnostics(p, old_task);
  BoundInputs in;
  in.sigma = singular_spectrum(product_range(p, 1, p.depth()));
  in.L = p.depth();
  in.d = p.dim();
  in.dim_theta = p.dim_theta();
  in.rho = ir.rho;
  in.tau = ir.tau;
  in.input_spectrum = Spectrum{clamp_psd_eigenvalues(eigh(old_task.inputs * old_task.inputs.transpose()).values.values)};

  BoundReport rep;
  rep.rho = ir.rho;
  rep.tau = ir.tau;
  rep.regime_ok = in.regime_ok() && !ir.rank_deficient;
  rep.kappa = condition_number(*in.input_spectrum);
  rep.interpretable = bound_interpretable(in);
  rep.tighter = bound_tighter(in);
  const double alt = bound_tighter_matrix_path(in);
  if (std::abs(alt - rep.tighter) > 1e-8 * std::max(std::abs(rep.tighter), 1e-300))
    fail(ErrorKind::Numerical, "check_bounds: tighter bound disagrees between evaluation paths");

  // The relaxation is stated on the spectrum of the least-squares target Y1 X1^+.
  BoundInputs target = in;
  target.sigma = singular_spectrum(old_task.labels * pinv(old_task.inputs, 1e-10));
  if (target.sigma.values.maxCoeff() > 0) {
    rep.nonwhitened = bound_nonwhitened(target);
    const double alt_nw = bound_nonwhitened_matrix_path(target);
    if (std::abs(alt_nw - *rep.nonwhitened) > 1e-8 * std::max(std::abs(*rep.nonwhitened), 1e-300))
      fail(ErrorKind::Numerical, "check_bounds: non-whitened bound disagrees between evaluation paths");
  }
  rep.measured_alpha = alpha_measured;
  return rep;
}

}  // namespace cl_lab
