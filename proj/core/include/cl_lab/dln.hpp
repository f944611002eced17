#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cl_lab/data.hpp"
#include "cl_lab/linalg.hpp"
#include "cl_lab/rng.hpp"

namespace cl_lab {

// weights[0] is W_1 (applied first), weights[L-1] is W_L.
struct DlnParams {
  std::vector<Mat> weights;

  int depth() const { return static_cast<int>(weights.size()); }
  int dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()); }
  std::size_t dim_theta() const;

  static DlnParams zeros_like(const DlnParams& p);
  static DlnParams zeros(int d, int depth);

  DlnParams& operator+=(const DlnParams& o);
  DlnParams& operator-=(const DlnParams& o);
  DlnParams& operator*=(double s);

  Vec flatten() const;
  static DlnParams unflatten(const Vec& v, int d, int depth);
};

DlnParams operator+(DlnParams a, const DlnParams& b);
DlnParams operator-(DlnParams a, const DlnParams& b);
DlnParams operator*(double s, DlnParams a);
double dot(const DlnParams& a, const DlnParams& b);
double norm_sq(const DlnParams& a);

void validate(const DlnParams& p);

// i.i.d. N(0, scale^2 / d) entries.
DlnParams init_params(int d, int depth, double scale, Rng& rng);

// W_b ... W_a (1-based, inclusive); identity when b < a.
Mat product_range(const DlnParams& p, int a, int b);

// prefix[i] = W_{i:1} (prefix[0] = I), suffix[i] = W_{L:i+1} (suffix[L] = I), i = 0..L.
struct LayerProducts {
  std::vector<Mat> prefix;
  std::vector<Mat> suffix;
};

LayerProducts layer_products(const DlnParams& p);

// Sufficient statistics of a task: X X^T, Y X^T, tr(Y Y^T).
struct GramStats {
  Mat xx;
  Mat yx;
  double yy = 0.0;
};

GramStats gram_stats(const Task& t);

double loss(const DlnParams& p, const Task& t, double l2);
DlnParams grad(const DlnParams& p, const Task& t, double l2);

double loss(const DlnParams& p, const GramStats& s, double l2);
DlnParams grad(const DlnParams& p, const GramStats& s, double l2);

struct TrainConfig {
  double lr = 0.5;
  double l2 = 1e-3;
  int epochs = 200;
  double grad_tol = 0.0;
  double momentum = 0.0;
  int record_every = 10;
  bool record_diagnostics = true;
};

struct TrainLogRow {
  int epoch;
  double loss;
  double grad_norm;
  double rho;
  double tau;
};

struct TrainResult {
  DlnParams params;
  std::vector<TrainLogRow> log;
  int epochs_run = 0;
};

// Full-batch gradient descent on the regularized loss.
TrainResult train(const DlnParams& p0, const Task& t, const TrainConfig& cfg, Rng& rng);

// Optional modifications of the descent step: `project` maps the loss gradient to the
// applied direction; `extra_grad` is added after projection and `extra_loss` joins the
// objective used for backtracking.
struct TrainHooks {
  std::function<DlnParams(const DlnParams&)> project;
  std::function<double(const DlnParams&)> extra_loss;
  std::function<DlnParams(const DlnParams&)> extra_grad;
};

TrainResult train(const DlnParams& p0, const Task& t, const TrainConfig& cfg, const TrainHooks& hooks);

std::string training_log_csv(const std::vector<TrainLogRow>& log);

struct InterpolationReport {
  double rho = 0.0;
  double tau = 0.0;
  double residual_loss = 0.0;
  bool rank_deficient = false;
};

InterpolationReport interpolation_diagnostics(const DlnParams& p, const Task& t);

struct BalanceReport {
  double imbalance = 0.0;       // max_i ||W_{i+1}^T W_{i+1} - W_i W_i^T||_F / mean_i ||W_i W_i^T||_F
  double spectrum_gap = 0.0;    // max_{i,j} ||sigma(W_i) - sigma(W_j)||_inf
  double spectrum_spread = 0.0; // spectrum_gap / max_i sigma_1(W_i)
};

BalanceReport balance_diagnostics(const DlnParams& p);

}  // namespace cl_lab
