#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cl_lab/csv.hpp"
#include "cl_lab/data.hpp"
#include "cl_lab/error.hpp"
#include "cl_lab/experiments.hpp"
#include "cl_lab/linalg.hpp"
#include "cl_lab/parallel.hpp"
#include "cl_lab/report.hpp"

using namespace cl_lab;

namespace {

std::string flag_name(std::string key) {
  for (char& c : key)
    if (c == '_') c = '-';
  return key;
}

struct ExperimentFlags {
  std::string config_path;
  std::map<std::string, std::string> values;
};

void add_experiment_flags(CLI::App* sub, ExperimentFlags& f) {
  sub->add_option("--config", f.config_path, "key = value config file (flags override it)");
  for (const auto& [key, help] : ExperimentConfig::keys()) {
    const std::string name = key == "output_dir" ? "--out,--output-dir" : "--" + flag_name(key);
    sub->add_option(name, f.values[key], help);
  }
}

ExperimentConfig resolve(CLI::App* sub, const ExperimentFlags& f) {
  ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  for (const auto& [key, help] : ExperimentConfig::keys()) {
    const std::string opt = key == "output_dir" ? "--out" : "--" + flag_name(key);
    if (sub->count(opt) > 0) cfg.set(key, f.values.at(key));
  }
  cfg.validate();
  return cfg;
}

void report_written(const std::vector<std::string>& paths) {
  for (const auto& p : paths) std::cout << "wrote " << p << "\n";
}

struct GenTaskFlags {
  int dim = 32;
  int n = 512;
  int rank = 4;
  std::uint64_t seed = 0;
  double label_noise = 0.0;
  double whiten_noise = 0.01;
  std::string out;
  std::string idx_images;
  std::string idx_labels;
};

int gen_task(const GenTaskFlags& g) {
  Rng rng(g.seed);
  Task t;
  if (!g.idx_images.empty() || !g.idx_labels.empty()) {
    if (g.idx_images.empty() || g.idx_labels.empty())
      fail(ErrorKind::Config, "gen-task: --idx-images and --idx-labels must be given together");
    t = idx_task(load_idx(g.idx_images), load_idx(g.idx_labels), g.dim, g.n, g.rank, g.whiten_noise, rng);
  } else {
    if (g.rank < 1 || g.rank > g.dim) fail(ErrorKind::Config, "gen-task: --rank must lie in [1, dim]");
    if (g.n < g.dim) fail(ErrorKind::Config, "gen-task: --n must be >= --dim");
    t = synth_teacher_task(g.dim, g.n, g.rank, g.label_noise, rng, g.whiten_noise);
  }
  t.meta.seed = g.seed;
  save_task(t, g.out);
  const Spectrum s = singular_spectrum(t.labels * pinv(t.inputs));
  std::cout << "wrote " << g.out << "\n"
            << "d = " << t.dim_x() << "\n"
            << "n = " << t.n() << "\n"
            << "erank(Y X^+) = " << format_double(erank_of_powered_spectrum(s, 1.0)) << "\n"
            << "whitening error = " << format_double(whitening_error(t.inputs)) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial-alignment laboratory for continual learning in deep linear networks.\n"
               "Environment: CL_LAB_THREADS caps worker threads. Exit codes: 0 ok, 2 config, 3 numerical, 4 I/O."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  GenTaskFlags g;
  auto* gen = app.add_subcommand("gen-task", "Generate a task file (synthetic teacher or IDX images)");
  gen->add_option("--dim", g.dim, "input and label dimension")->capture_default_str();
  gen->add_option("--n", g.n, "number of samples")->capture_default_str();
  gen->add_option("--rank", g.rank, "rank of the label map (labels modulo rank for IDX input)")->capture_default_str();
  gen->add_option("--seed", g.seed, "seed")->capture_default_str();
  gen->add_option("--label-noise", g.label_noise, "label noise standard deviation")->capture_default_str();
  gen->add_option("--whiten-noise", g.whiten_noise, "noise added before whitening")->capture_default_str();
  gen->add_option("--idx-images", g.idx_images, "IDX image file");
  gen->add_option("--idx-labels", g.idx_labels, "IDX label file");
  gen->add_option("--out", g.out, "output task file")->required();

  struct Command {
    const char* name;
    const char* help;
    ExperimentFlags flags;
    CLI::App* sub = nullptr;
  };
  Command commands[] = {
      {"phase-transition", "Alignment vs target rank per depth (phase.csv)", {}},
      {"bounds", "Measured alignment against the three lower bounds (bounds.csv)", {}},
      {"forgetting", "Forgetting decomposition during new-task training (forgetting.csv, power.csv)", {}},
      {"cl-run", "Vanilla / forwardGP / forward+backGP over a rotated task sequence (cl.csv)", {}},
      {"cdf", "Projection CDFs of the update and a Rademacher probe (cdf.csv, cdf_summary.csv)", {}},
  };
  for (auto& c : commands) {
    c.sub = app.add_subcommand(c.name, c.help);
    add_experiment_flags(c.sub, c.flags);
  }
  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summary tables and SVG plots from the CSVs in a directory");
  rep->add_option("dir", report_dir, "directory holding experiment CSVs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_task(g);
    if (*rep) {
      const ReportResult r = write_report(report_dir);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      report_written(r.written);
      return 0;
    }
    for (auto& c : commands) {
      if (!*c.sub) continue;
      const ExperimentConfig cfg = resolve(c.sub, c.flags);
      const std::string name = c.name;
      std::vector<std::pair<std::string, std::string>> files;
      if (name == "phase-transition") {
        files = {{"phase.csv", phase_csv(run_phase_transition(cfg))}};
      } else if (name == "bounds") {
        files = {{"bounds.csv", bounds_csv(run_bounds(cfg))}};
      } else if (name == "forgetting") {
        const ForgettingResult r = run_forgetting(cfg);
        files = {{"forgetting.csv", forgetting_csv(r.rows)}, {"power.csv", power_csv(r.power)}};
      } else if (name == "cl-run") {
        files = {{"cl.csv", cl_csv(run_cl(cfg), cfg)}};
      } else if (name == "cdf") {
        const CdfResult r = run_cdf(cfg);
        files = {{"cdf.csv", cdf_csv(r.curves)}, {"cdf_summary.csv", cdf_summary_csv(r.summary)}};
      }
      report_written(write_outputs(cfg, name, files));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
