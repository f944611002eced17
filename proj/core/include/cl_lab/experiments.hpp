#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cl_lab/bounds.hpp"
#include "cl_lab/curvature.hpp"
#include "cl_lab/forgetting.hpp"
#include "cl_lab/projections.hpp"

namespace cl_lab {

struct ExperimentConfig {
  int dim = 32;
  std::vector<int> depths{1, 2, 4, 6};
  std::vector<int> ranks{1, 2, 4, 8, 16, 32};
  int n_samples = 512;
  int trials = 10;
  double lr = 0.5;
  double l2 = 1e-3;
  int epochs = 4000;
  double momentum = 0.0;
  double init_scale = 0.5;
  double label_noise = 0.0;
  std::string estimator = "mc";  // mc | closed
  int rotations = 200;
  int new_task_epochs = 50;
  int record_every = 5;
  int baseline_samples = 64;
  int power_steps = 10;
  double power_lr = 0.02;
  int cl_depth = 2;
  int cl_rank = 4;
  int cl_tasks = 3;
  int cl_task_epochs = 200;
  std::vector<std::string> modes{"vanilla", "forwardGP", "forward+backGP"};
  double eps_forward = 0.3;
  double eps_backward = 0.3;
  double spectral_lambda = 0.0;
  double sigma_broaden = 0.0;  // 0 selects 0.01 * largest Ritz value
  int lanczos_steps = 0;       // 0 selects dim_theta up to 2000, else 200
  int cdf_points = 512;
  std::uint64_t master_seed = 0;
  std::string output_dir = ".";

  void set(const std::string& key, const std::string& value);
  void validate() const;
  // Every key in schema order as "key = value" lines.
  std::string to_key_values() const;
  // (key, description) pairs.
  static const std::vector<std::pair<std::string, std::string>>& keys();
};

// Lines of "key = value"; '#' starts a comment.
ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

std::uint64_t trial_seed(std::uint64_t master, int depth, int rank, int trial);

struct TrainedInstance {
  Task task;
  DlnParams params;
  int epochs_run = 0;
};

// Synthetic whitened teacher task of the given rank and a DLN trained on it.
TrainedInstance train_old_task(const ExperimentConfig& cfg, int depth, int rank, std::uint64_t seed);

TrainConfig train_config(const ExperimentConfig& cfg, int epochs);

struct InstanceKey {
  std::uint64_t seed = 0;
  int d = 0;
  int L = 0;
  int rank = 0;
};

struct PhaseRow {
  InstanceKey key;
  AlignmentRecord rec;
};

struct BoundsRow {
  InstanceKey key;
  BoundReport report;
};

struct ForgettingRow {
  InstanceKey key;
  int step = 0;
  ForgettingBreakdown breakdown;
};

struct PowerRow {
  InstanceKey key;
  PowerIterationStep step;
};

struct ForgettingResult {
  std::vector<ForgettingRow> rows;
  std::vector<PowerRow> power;
};

struct ClRow {
  std::uint64_t seed = 0;
  std::string mode;
  ClTaskRecord record;
  bool has_metrics = false;
};

struct CdfRow {
  InstanceKey key;
  std::string source;  // update | rademacher
  std::string method;  // lanczos | exact
  double lambda = 0.0;
  double cdf = 0.0;
};

struct CdfSummaryRow {
  InstanceKey key;
  std::string source;
  int lanczos_steps = 0;
  double sigma = 0.0;
  double threshold = 0.0;  // top-10%-trace eigenvalue threshold (nan without the exact spectrum)
  double mass_top = 0.0;
  double sup_vs_exact = 0.0;  // nan without the exact spectrum
};

struct CdfResult {
  std::vector<CdfRow> curves;
  std::vector<CdfSummaryRow> summary;
};

std::vector<PhaseRow> run_phase_transition(const ExperimentConfig& cfg);
std::vector<BoundsRow> run_bounds(const ExperimentConfig& cfg);
ForgettingResult run_forgetting(const ExperimentConfig& cfg);
std::vector<ClRow> run_cl(const ExperimentConfig& cfg);
CdfResult run_cdf(const ExperimentConfig& cfg);

std::string phase_csv(const std::vector<PhaseRow>& rows);
std::string bounds_csv(const std::vector<BoundsRow>& rows);
std::string forgetting_csv(const std::vector<ForgettingRow>& rows);
std::string power_csv(const std::vector<PowerRow>& rows);
std::string cl_csv(const std::vector<ClRow>& rows, const ExperimentConfig& cfg);
std::string cdf_csv(const std::vector<CdfRow>& rows);
std::string cdf_summary_csv(const std::vector<CdfSummaryRow>& rows);

// Writes each (file name, body) into cfg.output_dir plus <command>.manifest.json; returns the paths.
std::vector<std::string> write_outputs(const ExperimentConfig& cfg, const std::string& command,
                                       const std::vector<std::pair<std::string, std::string>>& files);

const char* tool_version();

}  // namespace cl_lab
