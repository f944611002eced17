#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cl_lab/linalg.hpp"
#include "cl_lab/rng.hpp"

namespace cl_lab {

struct TaskMeta {
  std::string name;
  std::uint64_t seed = 0;
  bool whitened = false;
  std::optional<int> rank_cap;
};

// Columns are samples.
struct Task {
  Mat inputs;  // d_x x n
  Mat labels;  // d_y x n
  TaskMeta meta;

  Eigen::Index n() const { return inputs.cols(); }
  Eigen::Index dim_x() const { return inputs.rows(); }
  Eigen::Index dim_y() const { return labels.rows(); }
};

struct TaskPair {
  Task old_task;
  Task new_task;
  std::optional<Mat> rotation;
};

// IDX file as a matrix. Image files (3 dims) become (rows*cols) x n scaled to [0,1];
// label files (1 dim) become 1 x n with raw values.
Mat load_idx(const std::string& path);

Mat whiten(const Mat& x0, double noise_std, Rng& rng);

TaskPair rotate_task(const Task& old_task, Rng& rng);
TaskPair rotate_task_with(const Task& old_task, const Mat& rotation);

std::vector<int> modulo_rank_labels(const std::vector<int>& labels, int r);

// One-hot columns in R^d.
Mat embed_labels(const std::vector<int>& classes, int d);

// Whitened Gaussian inputs with labels G X + noise, G = rank-r partial isometry.
Task synth_teacher_task(int d, int n, int r, double label_noise, Rng& rng, double whiten_noise = 0.01);

// MNIST-style task: top-d principal components of the images, whitened, labels mod r embedded in R^d.
Task idx_task(const Mat& images, const Mat& labels, int d, int n, int r, double whiten_noise, Rng& rng);

void save_task(const Task& t, const std::string& path);
Task load_task(const std::string& path);

// ||X X^T - I||_F
double whitening_error(const Mat& x);

}  // namespace cl_lab
