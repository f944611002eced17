#pragma once

#include <cstddef>
#include <optional>

#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"
#include "cl_lab/linalg.hpp"

namespace cl_lab {

struct BoundInputs {
  Spectrum sigma;  // singular values of the end-to-end map W_{L:1}
  int L = 1;
  int d = 1;
  std::size_t dim_theta = 0;
  double rho = 0.0;
  double tau = 0.0;
  std::optional<Spectrum> input_spectrum;  // eigenvalues of X1 X1^T

  bool regime_ok() const;
};

struct BoundReport {
  double interpretable = 0.0;
  double tighter = 0.0;
  std::optional<double> nonwhitened;
  std::optional<double> measured_alpha;
  bool regime_ok = false;
  double rho = 0.0;
  double tau = 0.0;
  double kappa = 1.0;
};

double bound_interpretable(const BoundInputs& in);
double bound_tighter(const BoundInputs& in);
double bound_nonwhitened(const BoundInputs& in);

// Same formulas evaluated through psd_power/effective_rank on diagonal matrices.
double bound_tighter_matrix_path(const BoundInputs& in);
double bound_nonwhitened_matrix_path(const BoundInputs& in);

// sigma_max / smallest nonzero value.
double condition_number(const Spectrum& s);

BoundReport check_bounds(const DlnParams& p, const Task& old_task, std::optional<double> alpha_measured);

}  // namespace cl_lab
