#include "cl_lab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cl_lab/csv.hpp"
#include "cl_lab/error.hpp"
#include "cl_lab/parallel.hpp"

#ifndef CL_LAB_VERSION
#define CL_LAB_VERSION "0.0.0"
#endif

namespace cl_lab {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size() || x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(ErrorKind::Config, "config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  for (const auto& s : split_list(v)) out.push_back(to_int(key, s));
  if (out.empty()) fail(ErrorKind::Config, "config key '" + key + "': empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, std::string>) out += v[i];
    else out += std::to_string(v[i]);
  }
  return out;
}

std::string u64(std::uint64_t v) { return std::to_string(v); }

struct Job {
  int L;
  int rank;
  int trial;
};

std::vector<Job> jobs_for(const ExperimentConfig& cfg) {
  std::vector<Job> jobs;
  for (int L : cfg.depths)
    for (int r : cfg.ranks)
      for (int t = 0; t < cfg.trials; ++t) jobs.push_back({L, r, t});
  return jobs;
}

InstanceKey key_for(const ExperimentConfig& cfg, const Job& j) {
  return {trial_seed(cfg.master_seed, j.L, j.rank, j.trial), cfg.dim, j.L, j.rank};
}

// Runs body for every job; failures of a single trial are reported and skipped.
template <typename R>
std::vector<R> run_jobs(const std::vector<Job>& jobs, const std::string& what,
                        const std::function<R(const Job&)>& body) {
  std::vector<std::optional<R>> slots(jobs.size());
  std::vector<std::string> errors(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    try {
      slots[i] = body(jobs[i]);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Config || e.kind() == ErrorKind::Io) throw;
      errors[i] = e.what();
    }
  });
  std::vector<R> out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (slots[i]) out.push_back(std::move(*slots[i]));
    else
      std::cerr << what << ": trial L=" << jobs[i].L << " rank=" << jobs[i].rank << " trial=" << jobs[i].trial
                << " failed: " << errors[i] << "\n";
  }
  return out;
}

AlignmentRecord measure_alpha(const ExperimentConfig& cfg, const TrainedInstance& inst, std::uint64_t seed) {
  if (cfg.estimator == "mc") {
    Rng rng(child_seed(seed, 2));
    return expected_alpha_monte_carlo(inst.params, inst.task, cfg.rotations, rng);
  }
  return alpha_closed(inst.params, inst.task);
}

}  // namespace

const std::vector<std::pair<std::string, std::string>>& ExperimentConfig::keys() {
  static const std::vector<std::pair<std::string, std::string>> k = {
      {"dim", "network and input dimension d"},
      {"depths", "comma-separated depths L, each in [1,12]"},
      {"ranks", "comma-separated target ranks, each in [1,dim]"},
      {"n_samples", "samples per task"},
      {"trials", "trials per (depth, rank)"},
      {"lr", "learning rate (backtracked when the objective rises)"},
      {"l2", "L2 regularization strength"},
      {"epochs", "full-batch epochs for the old task"},
      {"momentum", "heavy-ball momentum"},
      {"init_scale", "initialization scale s, entries N(0, s^2/d)"},
      {"label_noise", "label noise standard deviation"},
      {"estimator", "alignment estimator over rotations: closed or mc"},
      {"rotations", "rotations for the mc estimator"},
      {"new_task_epochs", "epochs on the rotated new task (forgetting)"},
      {"record_every", "new-task epochs between forgetting rows"},
      {"baseline_samples", "random perturbations for the forgetting baseline"},
      {"power_steps", "steps of the power-iteration trace"},
      {"power_lr", "learning rate of the power-iteration trace"},
      {"cl_depth", "depth for cl-run"},
      {"cl_rank", "target rank for cl-run"},
      {"cl_tasks", "tasks in the cl-run rotated sequence"},
      {"cl_task_epochs", "epochs for tasks 2..T in cl-run"},
      {"modes", "cl-run modes: vanilla, forwardGP, forward+backGP"},
      {"eps_forward", "forward projector tail fraction in (0,1)"},
      {"eps_backward", "backward projector tail fraction in (0,1)"},
      {"spectral_lambda", "spectral regularization weight (0 disables)"},
      {"sigma_broaden", "CDF broadening sigma (0 selects 0.01 * top Ritz value)"},
      {"lanczos_steps", "Lanczos steps (0 selects dim_theta up to 2000, else 200)"},
      {"cdf_points", "CDF grid points"},
      {"seed", "master seed"},
      {"output_dir", "directory for CSV outputs and the run manifest"},
  };
  return k;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "dim") dim = to_int(key, v);
  else if (key == "depths") depths = to_int_list(key, v);
  else if (key == "ranks") ranks = to_int_list(key, v);
  else if (key == "n_samples") n_samples = to_int(key, v);
  else if (key == "trials") trials = to_int(key, v);
  else if (key == "lr") lr = to_double(key, v);
  else if (key == "l2") l2 = to_double(key, v);
  else if (key == "epochs") epochs = to_int(key, v);
  else if (key == "momentum") momentum = to_double(key, v);
  else if (key == "init_scale") init_scale = to_double(key, v);
  else if (key == "label_noise") label_noise = to_double(key, v);
  else if (key == "estimator") estimator = v;
  else if (key == "rotations") rotations = to_int(key, v);
  else if (key == "new_task_epochs") new_task_epochs = to_int(key, v);
  else if (key == "record_every") record_every = to_int(key, v);
  else if (key == "baseline_samples") baseline_samples = to_int(key, v);
  else if (key == "power_steps") power_steps = to_int(key, v);
  else if (key == "power_lr") power_lr = to_double(key, v);
  else if (key == "cl_depth") cl_depth = to_int(key, v);
  else if (key == "cl_rank") cl_rank = to_int(key, v);
  else if (key == "cl_tasks") cl_tasks = to_int(key, v);
  else if (key == "cl_task_epochs") cl_task_epochs = to_int(key, v);
  else if (key == "modes") modes = split_list(v);
  else if (key == "eps_forward") eps_forward = to_double(key, v);
  else if (key == "eps_backward") eps_backward = to_double(key, v);
  else if (key == "spectral_lambda") spectral_lambda = to_double(key, v);
  else if (key == "sigma_broaden") sigma_broaden = to_double(key, v);
  else if (key == "lanczos_steps") lanczos_steps = to_int(key, v);
  else if (key == "cdf_points") cdf_points = to_int(key, v);
  else if (key == "seed" || key == "master_seed") master_seed = to_u64(key, v);
  else if (key == "output_dir") output_dir = v;
  else fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) fail(ErrorKind::Config, "config: " + msg);
  };
  need(dim >= 1, "dim must be >= 1");
  need(!depths.empty(), "depths must not be empty");
  for (int L : depths) need(L >= 1 && L <= 12, "depths must lie in [1,12]");
  need(!ranks.empty(), "ranks must not be empty");
  for (int r : ranks) need(r >= 1 && r <= dim, "ranks must lie in [1,dim]");
  need(n_samples >= dim, "n_samples must be >= dim for whitening");
  need(trials >= 1, "trials must be >= 1");
  need(lr > 0, "lr must be positive");
  need(l2 >= 0, "l2 must be nonnegative");
  need(epochs >= 1, "epochs must be >= 1");
  need(momentum >= 0 && momentum < 1, "momentum must lie in [0,1)");
  need(init_scale > 0, "init_scale must be positive");
  need(label_noise >= 0, "label_noise must be nonnegative");
  need(estimator == "closed" || estimator == "mc", "estimator must be closed or mc");
  need(rotations >= 2, "rotations must be >= 2");
  need(new_task_epochs >= 1, "new_task_epochs must be >= 1");
  need(record_every >= 1, "record_every must be >= 1");
  need(baseline_samples >= 2, "baseline_samples must be >= 2");
  need(power_steps >= 2, "power_steps must be >= 2");
  need(power_lr > 0, "power_lr must be positive");
  need(cl_depth >= 1 && cl_depth <= 12, "cl_depth must lie in [1,12]");
  need(cl_rank >= 1 && cl_rank <= dim, "cl_rank must lie in [1,dim]");
  need(cl_tasks >= 2, "cl_tasks must be >= 2");
  need(cl_task_epochs >= 1, "cl_task_epochs must be >= 1");
  need(!modes.empty(), "modes must not be empty");
  for (const auto& m : modes) parse_cl_mode(m);
  need(eps_forward > 0 && eps_forward < 1, "eps_forward must lie in (0,1)");
  need(eps_backward > 0 && eps_backward < 1, "eps_backward must lie in (0,1)");
  need(spectral_lambda >= 0, "spectral_lambda must be nonnegative");
  need(sigma_broaden >= 0, "sigma_broaden must be nonnegative");
  need(lanczos_steps >= 0, "lanczos_steps must be nonnegative");
  need(cdf_points >= 2, "cdf_points must be >= 2");
  need(!output_dir.empty(), "output_dir must not be empty");
}

std::string ExperimentConfig::to_key_values() const {
  std::ostringstream o;
  o << "dim = " << dim << "\n"
    << "depths = " << join(depths) << "\n"
    << "ranks = " << join(ranks) << "\n"
    << "n_samples = " << n_samples << "\n"
    << "trials = " << trials << "\n"
    << "lr = " << format_double(lr) << "\n"
    << "l2 = " << format_double(l2) << "\n"
    << "epochs = " << epochs << "\n"
    << "momentum = " << format_double(momentum) << "\n"
    << "init_scale = " << format_double(init_scale) << "\n"
    << "label_noise = " << format_double(label_noise) << "\n"
    << "estimator = " << estimator << "\n"
    << "rotations = " << rotations << "\n"
    << "new_task_epochs = " << new_task_epochs << "\n"
    << "record_every = " << record_every << "\n"
    << "baseline_samples = " << baseline_samples << "\n"
    << "power_steps = " << power_steps << "\n"
    << "power_lr = " << format_double(power_lr) << "\n"
    << "cl_depth = " << cl_depth << "\n"
    << "cl_rank = " << cl_rank << "\n"
    << "cl_tasks = " << cl_tasks << "\n"
    << "cl_task_epochs = " << cl_task_epochs << "\n"
    << "modes = " << join(modes) << "\n"
    << "eps_forward = " << format_double(eps_forward) << "\n"
    << "eps_backward = " << format_double(eps_backward) << "\n"
    << "spectral_lambda = " << format_double(spectral_lambda) << "\n"
    << "sigma_broaden = " << format_double(sigma_broaden) << "\n"
    << "lanczos_steps = " << lanczos_steps << "\n"
    << "cdf_points = " << cdf_points << "\n"
    << "seed = " << master_seed << "\n"
    << "output_dir = " << output_dir << "\n";
  return o.str();
}

ExperimentConfig parse_config_text(const std::string& text, ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "config line " + std::to_string(lineno) + ": expected key = value");
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

std::uint64_t trial_seed(std::uint64_t master, int depth, int rank, int trial) {
  return child_seed(child_seed(child_seed(master, std::uint64_t(depth)), std::uint64_t(rank)), std::uint64_t(trial));
}

TrainConfig train_config(const ExperimentConfig& cfg, int epochs) {
  TrainConfig tc;
  tc.lr = cfg.lr;
  tc.l2 = cfg.l2;
  tc.epochs = epochs;
  tc.momentum = cfg.momentum;
  tc.record_diagnostics = false;
  return tc;
}

TrainedInstance train_old_task(const ExperimentConfig& cfg, int depth, int rank, std::uint64_t seed) {
  Rng task_rng(child_seed(seed, 0));
  Rng init_rng(child_seed(seed, 1));
  TrainedInstance inst;
  inst.task = synth_teacher_task(cfg.dim, cfg.n_samples, rank, cfg.label_noise, task_rng);
  const DlnParams p0 = init_params(cfg.dim, depth, cfg.init_scale, init_rng);
  TrainResult tr = train(p0, inst.task, train_config(cfg, cfg.epochs), init_rng);
  inst.params = std::move(tr.params);
  inst.epochs_run = tr.epochs_run;
  return inst;
}

std::vector<PhaseRow> run_phase_transition(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_jobs<PhaseRow>(jobs_for(cfg), "phase-transition", [&](const Job& j) {
    const InstanceKey key = key_for(cfg, j);
    const TrainedInstance inst = train_old_task(cfg, j.L, j.rank, key.seed);
    return PhaseRow{key, measure_alpha(cfg, inst, key.seed)};
  });
}

std::vector<BoundsRow> run_bounds(const ExperimentConfig& cfg) {
  cfg.validate();
  return run_jobs<BoundsRow>(jobs_for(cfg), "bounds", [&](const Job& j) {
    const InstanceKey key = key_for(cfg, j);
    const TrainedInstance inst = train_old_task(cfg, j.L, j.rank, key.seed);
    const AlignmentRecord a = measure_alpha(cfg, inst, key.seed);
    return BoundsRow{key, check_bounds(inst.params, inst.task, a.alpha)};
  });
}

ForgettingResult run_forgetting(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Out {
    std::vector<ForgettingRow> rows;
    std::vector<PowerRow> power;
  };
  const auto outs = run_jobs<Out>(jobs_for(cfg), "forgetting", [&](const Job& j) {
    const InstanceKey key = key_for(cfg, j);
    const TrainedInstance inst = train_old_task(cfg, j.L, j.rank, key.seed);
    Rng rot_rng(child_seed(key.seed, 3));
    const TaskPair pair = rotate_task(inst.task, rot_rng);
    Out out;
    DlnParams p = inst.params;
    int step = 0;
    while (step < cfg.new_task_epochs) {
      const int chunk = std::min(cfg.record_every, cfg.new_task_epochs - step);
      p = train(p, pair.new_task, train_config(cfg, chunk), rot_rng).params;
      step += chunk;
      Rng base_rng(child_seed(child_seed(key.seed, 4), std::uint64_t(step)));
      out.rows.push_back({key, step, decompose(inst.params, p - inst.params, inst.task, base_rng, cfg.baseline_samples)});
    }
    for (const auto& s : power_iteration_trace(inst.params, pair.new_task, inst.task, cfg.power_lr, cfg.power_steps))
      out.power.push_back({key, s});
    return out;
  });
  ForgettingResult res;
  for (const auto& o : outs) {
    res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
    res.power.insert(res.power.end(), o.power.begin(), o.power.end());
  }
  return res;
}

std::vector<ClRow> run_cl(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<Job> jobs;
  for (int t = 0; t < cfg.trials; ++t) jobs.push_back({cfg.cl_depth, cfg.cl_rank, t});
  const auto outs = run_jobs<std::vector<ClRow>>(jobs, "cl-run", [&](const Job& j) {
    const std::uint64_t seed = trial_seed(cfg.master_seed, j.L, j.rank, j.trial);
    Rng task_rng(child_seed(seed, 0));
    std::vector<Task> tasks;
    tasks.push_back(synth_teacher_task(cfg.dim, cfg.n_samples, j.rank, cfg.label_noise, task_rng));
    Rng rot_rng(child_seed(seed, 3));
    for (int k = 1; k < cfg.cl_tasks; ++k) tasks.push_back(rotate_task(tasks.front(), rot_rng).new_task);
    std::vector<ClRow> rows;
    for (const auto& m : cfg.modes) {
      ClConfig c;
      c.mode = parse_cl_mode(m);
      c.depth = j.L;
      c.eps_forward = cfg.eps_forward;
      c.eps_backward = cfg.eps_backward;
      c.spectral_lambda = cfg.spectral_lambda;
      c.init_scale = cfg.init_scale;
      c.first_task = train_config(cfg, cfg.epochs);
      c.later_tasks = train_config(cfg, cfg.cl_task_epochs);
      Rng rng(child_seed(seed, 1));  // same initialization for every mode
      const ClResult res = cl_run(tasks, c, rng);
      for (const auto& rec : res.records) rows.push_back({seed, to_string(c.mode), rec, rec.task >= 2});
    }
    return rows;
  });
  std::vector<ClRow> rows;
  for (const auto& o : outs) rows.insert(rows.end(), o.begin(), o.end());
  return rows;
}

CdfResult run_cdf(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto outs = run_jobs<CdfResult>(jobs_for(cfg), "cdf", [&](const Job& j) {
    const InstanceKey key = key_for(cfg, j);
    const TrainedInstance inst = train_old_task(cfg, j.L, j.rank, key.seed);
    Rng rot_rng(child_seed(key.seed, 3));
    const TaskPair pair = rotate_task(inst.task, rot_rng);
    const std::size_t n = inst.params.dim_theta();
    const bool oracle = n <= 2000;

    // The first new-task step direction and a Rademacher probe.
    Vec update = -grad(inst.params, pair.new_task, cfg.l2).flatten();
    require(update.norm() > 0, "cdf: the new-task update vanishes");
    update.normalize();
    Rng probe_rng(child_seed(key.seed, 5));
    Vec rad = probe_rng.rademacher_vector(Eigen::Index(n));
    rad.normalize();

    const int m = cfg.lanczos_steps > 0 ? std::min<int>(cfg.lanczos_steps, int(n)) : (oracle ? int(n) : 200);
    const LinearOp op = hessian_operator(inst.params, inst.task);
    const RitzSpectrum lz_u = lanczos(op, update, m);
    const RitzSpectrum lz_r = lanczos(op, rad, m);
    const double top = std::max(lz_u.nodes.maxCoeff(), lz_r.nodes.maxCoeff());
    const double sigma = cfg.sigma_broaden > 0 ? cfg.sigma_broaden : 0.01 * std::max(top, 1e-12);

    std::optional<EigenDecomp> exact;
    if (oracle) exact = eigh(hessian_full(inst.params, inst.task));
    const Vec grid_nodes = exact ? exact->values.values : Vec(lz_u.nodes);
    const std::vector<double> grid = cdf_grid(grid_nodes, sigma, cfg.cdf_points);
    const double threshold = exact ? top_trace_threshold(exact->values.values, 0.1) : kNan;

    CdfResult out;
    const std::pair<const char*, std::pair<const Vec*, const RitzSpectrum*>> sources[] = {
        {"update", {&update, &lz_u}}, {"rademacher", {&rad, &lz_r}}};
    for (const auto& [name, vs] : sources) {
      const CdfCurve lc = projection_cdf(*vs.second, sigma, grid);
      for (std::size_t g = 0; g < grid.size(); ++g) out.curves.push_back({key, name, "lanczos", grid[g], lc.cdf[g]});
      CdfSummaryRow s{key, name, m, sigma, threshold, kNan, kNan};
      if (exact) {
        const RitzSpectrum ex = exact_projection_spectrum(*exact, *vs.first);
        const CdfCurve ec = projection_cdf(ex, sigma, grid);
        double sup = 0.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
          out.curves.push_back({key, name, "exact", grid[g], ec.cdf[g]});
          sup = std::max(sup, std::abs(ec.cdf[g] - lc.cdf[g]));
        }
        s.sup_vs_exact = sup;
        s.mass_top = mass_above(*vs.second, threshold);
      }
      out.summary.push_back(s);
    }
    return out;
  });
  CdfResult res;
  for (const auto& o : outs) {
    res.curves.insert(res.curves.end(), o.curves.begin(), o.curves.end());
    res.summary.insert(res.summary.end(), o.summary.begin(), o.summary.end());
  }
  return res;
}

std::string phase_csv(const std::vector<PhaseRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "step", "alpha", "quad_form", "trace", "norm_sq", "estimator", "n_samples",
               "std_err"});
  for (const auto& r : rows)
    w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, 0, r.rec.alpha, r.rec.quad_form, r.rec.hessian_trace,
          r.rec.vec_norm_sq, to_string(r.rec.estimator), r.rec.n_samples, r.rec.std_err);
  return w.str();
}

std::string bounds_csv(const std::vector<BoundsRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "rho", "tau", "kappa", "alpha_measured", "bound_interp", "bound_tight",
               "bound_nonwhite", "regime_ok"});
  for (const auto& r : rows) {
    const BoundReport& b = r.report;
    w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, b.rho, b.tau, b.kappa, b.measured_alpha.value_or(kNan),
          b.interpretable, b.tighter, b.nonwhitened.value_or(kNan), b.regime_ok);
  }
  return w.str();
}

std::string forgetting_csv(const std::vector<ForgettingRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "step", "actual", "first", "second", "random_mean", "random_se", "alpha"});
  for (const auto& r : rows) {
    const ForgettingBreakdown& b = r.breakdown;
    w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, r.step, b.actual, b.first_order, b.second_order,
          b.random_baseline.mean, b.random_baseline.std_err, b.alpha);
  }
  return w.str();
}

std::string power_csv(const std::vector<PowerRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "step", "alpha", "norm_sq", "valid"});
  for (const auto& r : rows)
    w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, r.step.step, r.step.valid ? r.step.alpha : kNan,
          r.step.norm_sq, r.step.valid);
  return w.str();
}

std::string cl_csv(const std::vector<ClRow>& rows, const ExperimentConfig& cfg) {
  CsvWriter w({"seed", "mode", "task", "step", "loss_old_min", "alpha", "forget_task2", "ACC", "BWT", "immACC",
               "eps_f", "eps_b"});
  for (const auto& r : rows) {
    const ClTaskRecord& rec = r.record;
    const bool m = r.has_metrics;
    w.row(u64(r.seed), r.mode, rec.task, rec.epochs, rec.loss_first_min, m ? rec.alpha : kNan,
          m ? rec.forget_prev : kNan, m ? rec.metrics.acc : kNan, m ? rec.metrics.bwt : kNan,
          m ? rec.metrics.imm_acc : kNan, cfg.eps_forward, cfg.eps_backward);
  }
  return w.str();
}

std::string cdf_csv(const std::vector<CdfRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "source", "method", "lambda", "cdf"});
  for (const auto& r : rows) w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, r.source, r.method, r.lambda, r.cdf);
  return w.str();
}

std::string cdf_summary_csv(const std::vector<CdfSummaryRow>& rows) {
  CsvWriter w({"seed", "d", "L", "rank", "source", "lanczos_steps", "sigma", "threshold", "mass_top",
               "sup_vs_exact"});
  for (const auto& r : rows)
    w.row(u64(r.key.seed), r.key.d, r.key.L, r.key.rank, r.source, r.lanczos_steps, r.sigma, r.threshold, r.mass_top,
          r.sup_vs_exact);
  return w.str();
}

const char* tool_version() { return CL_LAB_VERSION; }

std::vector<std::string> write_outputs(const ExperimentConfig& cfg, const std::string& command,
                                       const std::vector<std::pair<std::string, std::string>>& files) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory '" + cfg.output_dir + "': " + ec.message());
  std::vector<std::string> paths;
  nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
  for (const auto& [name, body] : files) {
    const std::string path = (fs::path(cfg.output_dir) / name).string();
    write_text(path, body);
    paths.push_back(path);
    outputs.push_back(name);
  }
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::istringstream kv(cfg.to_key_values());
  std::string line;
  while (std::getline(kv, line)) {
    const auto eq = line.find('=');
    config[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  nlohmann::ordered_json manifest;
  manifest["tool"] = "cl-lab";
  manifest["version"] = tool_version();
  manifest["command"] = command;
  manifest["timestamp"] = stamp;
  manifest["threads"] = worker_count();
  manifest["config"] = config;
  manifest["outputs"] = outputs;
  const std::string mpath = (fs::path(cfg.output_dir) / (command + ".manifest.json")).string();
  write_text(mpath, manifest.dump(2) + "\n");
  paths.push_back(mpath);
  return paths;
}

}  // namespace cl_lab
