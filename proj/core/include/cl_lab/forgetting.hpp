#pragma once

#include <vector>

#include "cl_lab/curvature.hpp"
#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"

namespace cl_lab {

struct RandomBaseline {
  double mean = 0.0;
  double std_err = 0.0;
  int n = 0;
};

struct ForgettingBreakdown {
  double actual = 0.0;
  double first_order = 0.0;
  double second_order = 0.0;
  RandomBaseline random_baseline;
  double alpha = 0.0;
  double update_norm_sq = 0.0;
  double mean_random_quad = 0.0;  // tr(H) / dim_theta
};

double forgetting_actual(const DlnParams& p1, const DlnParams& p2, const Task& old_task);

struct TaylorTerms {
  double first = 0.0;
  double second = 0.0;
};

TaylorTerms taylor_terms(const DlnParams& p1, const DlnParams& delta, const Task& old_task);

// Random baseline uses `k_random` Gaussian perturbations rescaled to ||delta||.
ForgettingBreakdown decompose(const DlnParams& p1, const DlnParams& delta, const Task& old_task, Rng& rng,
                              int k_random = 64);

struct PowerIterationStep {
  int step = 0;
  double alpha = 0.0;
  double norm_sq = 0.0;
  bool valid = false;  // false when the cumulative update vanishes
};

// `steps` gradient steps on the new task (no regularizer); after each, alignment of the
// cumulative update against the old task's data Hessian at p1.
std::vector<PowerIterationStep> power_iteration_trace(const DlnParams& p1, const Task& new_task,
                                                      const Task& old_task, double lr, int steps);

// Median of successive differences over the first `window` valid entries is >= 0.
bool series_trend_nondecreasing(const std::vector<PowerIterationStep>& series, int window = 10);

}  // namespace cl_lab
