#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cl_lab/curvature.hpp"
#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"

namespace cl_lab {

enum class ClMode { Vanilla, ForwardGP, ForwardBackGP };

std::string to_string(ClMode m);
ClMode parse_cl_mode(const std::string& s);

struct ProjectorSet {
  std::vector<Mat> forward;        // F_i, applied on the right of G_i
  std::vector<Mat> backward;       // B_i, applied on the left of G_i
  std::vector<Mat> forward_cov;    // accumulated hidden-input covariance per layer
  std::vector<Mat> backward_cov;   // accumulated output-gradient covariance M_{t,i}

  static ProjectorSet identity(int d, int depth);
};

// T x T; a(t, i) is the metric of task i after training task t (entries with i <= t are used).
using AccMatrix = Mat;

// (W_{i-1:1} X)(W_{i-1:1} X)^T, 1-based layer i.
Mat input_covariance(const DlnParams& p, const Task& t, int layer);

// G_z G_z^T with G_z = W_{L:i+1}^T (W_{L:1} X - Y), one column per sample.
Mat output_grad_covariance(const DlnParams& p, const Task& t, int layer);

// Projector onto the trailing eigenvectors whose eigenvalues sum to at most eps * trace.
Mat nullspace_projector(const Mat& s, double eps);

Mat accumulate(const Mat& cov_prev, const Mat& cov_new);

// B_i G_i F_i per layer.
DlnParams project_update(const DlnParams& g, const ProjectorSet& ps);

// ||W W^T - I||_F^2 and its gradient 4 (W W^T - I) W.
double spectral_reg_loss(const Mat& w);
Mat spectral_reg_grad(const Mat& w);

struct ClMetrics {
  double acc = 0.0;
  double bwt = 0.0;
  double imm_acc = 0.0;
};

ClMetrics cl_metrics(const AccMatrix& a);

struct ClConfig {
  ClMode mode = ClMode::Vanilla;
  int depth = 2;
  double eps_forward = 0.05;
  double eps_backward = 0.05;
  double spectral_lambda = 0.0;
  TrainConfig first_task;  // training of task 1
  TrainConfig later_tasks; // training of tasks 2..T
  double init_scale = 1.0;
};

struct ClTaskRecord {
  int task = 0;                // 1-based
  int epochs = 0;
  double alpha = 0.0;          // alignment of this task's update against the previous task's Hessian
  double forget_prev = 0.0;    // loss increase of the previous task caused by this task's update
  double loss_first_min = 0.0; // loss of task 1 right after training it
  ClMetrics metrics;           // over tasks 1..t (t >= 2)
};

struct ClResult {
  AccMatrix acc;                       // exp(-loss)
  Mat losses;                          // raw losses, same layout
  std::optional<Mat> class_accuracy;   // argmax accuracy when labels are one-hot
  std::vector<ClTaskRecord> records;   // one per task
  DlnParams final_params;
  ProjectorSet projectors;
};

// Sequential training with the chosen mitigation; projectors are refreshed after every task.
ClResult cl_run(const std::vector<Task>& tasks, const ClConfig& cfg, Rng& rng);

// Argmax accuracy of W_{L:1} X against one-hot labels; nullopt when labels are not one-hot.
std::optional<double> class_accuracy(const DlnParams& p, const Task& t);

}  // namespace cl_lab
