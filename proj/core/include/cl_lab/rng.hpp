#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace cl_lab {

// Seeded generator. Every random draw in the library goes through one of these.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double rademacher() { return (engine_() >> 63) ? 1.0 : -1.0; }
  std::uint64_t next_u64() { return engine_(); }

  Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::VectorXd gaussian_vector(Eigen::Index n);
  Eigen::VectorXd rademacher_vector(Eigen::Index n);

  // Independent generator for sub-stream `index`.
  Rng child(std::uint64_t index) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Child seed for trial `index` of a run seeded with `master`.
std::uint64_t child_seed(std::uint64_t master, std::uint64_t index);

}  // namespace cl_lab
