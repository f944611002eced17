#include "cl_lab/projections.hpp"

#include <cmath>

#include "cl_lab/error.hpp"

namespace cl_lab {

std::string to_string(ClMode m) {
  switch (m) {
    case ClMode::Vanilla:
      return "vanilla";
    case ClMode::ForwardGP:
      return "forwardGP";
    case ClMode::ForwardBackGP:
      return "forward+backGP";
  }
  return "unknown";
}

ClMode parse_cl_mode(const std::string& s) {
  if (s == "vanilla") return ClMode::Vanilla;
  if (s == "forwardGP" || s == "forward") return ClMode::ForwardGP;
  if (s == "forward+backGP" || s == "backGP" || s == "forward+back") return ClMode::ForwardBackGP;
  fail(ErrorKind::Config, "unknown mode '" + s + "' (expected vanilla, forwardGP or forward+backGP)");
}

ProjectorSet ProjectorSet::identity(int d, int depth) {
  ProjectorSet ps;
  for (int i = 0; i < depth; ++i) {
    ps.forward.push_back(Mat::Identity(d, d));
    ps.backward.push_back(Mat::Identity(d, d));
    ps.forward_cov.push_back(Mat::Zero(d, d));
    ps.backward_cov.push_back(Mat::Zero(d, d));
  }
  return ps;
}

Mat input_covariance(const DlnParams& p, const Task& t, int layer) {
  validate(p);
  require(layer >= 1 && layer <= p.depth(), "input_covariance: layer out of range");
  const Mat h = product_range(p, 1, layer - 1) * t.inputs;
  return h * h.transpose();
}

Mat output_grad_covariance(const DlnParams& p, const Task& t, int layer) {
  validate(p);
  require(layer >= 1 && layer <= p.depth(), "output_grad_covariance: layer out of range");
  const Mat e = product_range(p, 1, p.depth()) * t.inputs - t.labels;
  const Mat gz = product_range(p, layer + 1, p.depth()).transpose() * e;
  return gz * gz.transpose();
}

Mat nullspace_projector(const Mat& s, double eps) {
  require(eps > 0 && eps < 1, "nullspace_projector: eps must lie in (0,1)");
  const Eigen::Index d = s.rows();
  const EigenDecomp e = eigh(s);
  const Vec lam = clamp_psd_eigenvalues(e.values.values);
  const double total = lam.sum();
  if (!(total > 0)) return Mat::Identity(d, d);
  double tail = 0.0;
  Eigen::Index keep = 0;
  for (Eigen::Index k = d - 1; k >= 0; --k) {
    if (tail + lam(k) > eps * total) break;
    tail += lam(k);
    ++keep;
  }
  const auto v = e.vectors.rightCols(keep);
  return v * v.transpose();
}

Mat accumulate(const Mat& cov_prev, const Mat& cov_new) {
  require(cov_prev.rows() == cov_new.rows() && cov_prev.cols() == cov_new.cols(), "accumulate: dimension mismatch");
  return cov_prev + cov_new;
}

DlnParams project_update(const DlnParams& g, const ProjectorSet& ps) {
  require(ps.forward.size() == g.weights.size() && ps.backward.size() == g.weights.size(),
          "project_update: projector depth mismatch");
  DlnParams out;
  out.weights.reserve(g.weights.size());
  for (std::size_t i = 0; i < g.weights.size(); ++i)
    out.weights.push_back(ps.backward[i] * g.weights[i] * ps.forward[i]);
  return out;
}

double spectral_reg_loss(const Mat& w) {
  require(w.rows() == w.cols(), "spectral_reg_loss: square matrix expected");
  return (w * w.transpose() - Mat::Identity(w.rows(), w.cols())).squaredNorm();
}

Mat spectral_reg_grad(const Mat& w) {
  require(w.rows() == w.cols(), "spectral_reg_grad: square matrix expected");
  return 4.0 * (w * w.transpose() - Mat::Identity(w.rows(), w.cols())) * w;
}

ClMetrics cl_metrics(const AccMatrix& a) {
  require(a.rows() == a.cols(), "cl_metrics: square matrix expected");
  const Eigen::Index T = a.rows();
  if (T < 2) fail(ErrorKind::Domain, "cl_metrics: backward transfer needs at least two tasks");
  ClMetrics m;
  double acc = 0.0, imm = 0.0, bwt = 0.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    acc += a(T - 1, i);
    imm += a(i, i);
    if (i < T - 1) bwt += a(T - 1, i) - a(i, i);
  }
  m.acc = acc / double(T);
  m.imm_acc = imm / double(T);
  m.bwt = bwt / double(T - 1);
  return m;
}

std::optional<double> class_accuracy(const DlnParams& p, const Task& t) {
  const Mat& y = t.labels;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    int ones = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      if (y(i, j) == 1.0) ++ones;
      else if (y(i, j) != 0.0) return std::nullopt;
    }
    if (ones != 1) return std::nullopt;
  }
  if (y.cols() == 0) return std::nullopt;
  const Mat out = product_range(p, 1, p.depth()) * t.inputs;
  int hits = 0;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    Eigen::Index pred = 0, truth = 0;
    out.col(j).maxCoeff(&pred);
    y.col(j).maxCoeff(&truth);
    if (pred == truth) ++hits;
  }
  return double(hits) / double(y.cols());
}

ClResult cl_run(const std::vector<Task>& tasks, const ClConfig& cfg, Rng& rng) {
  require(tasks.size() >= 2, "cl_run: need at least two tasks");
  require(cfg.depth >= 1, "cl_run: depth must be >= 1");
  const int T = static_cast<int>(tasks.size());
  const int d = static_cast<int>(tasks.front().dim_x());
  const int L = cfg.depth;
  for (const Task& t : tasks)
    require(t.dim_x() == d && t.dim_y() == d, "cl_run: all tasks must share the network dimension");

  ClResult res;
  res.acc = Mat::Zero(T, T);
  res.losses = Mat::Zero(T, T);
  bool classes = true;
  Mat cls = Mat::Zero(T, T);
  ProjectorSet ps = ProjectorSet::identity(d, L);
  DlnParams p = init_params(d, L, cfg.init_scale, rng);
  DlnParams prev = p;
  double first_min = 0.0;

  TrainHooks hooks;
  if (cfg.spectral_lambda > 0) {
    const double ls = cfg.spectral_lambda;
    hooks.extra_loss = [ls](const DlnParams& q) {
      double v = 0.0;
      for (const Mat& w : q.weights) v += spectral_reg_loss(w);
      return ls * v;
    };
    hooks.extra_grad = [ls](const DlnParams& q) {
      DlnParams g;
      for (const Mat& w : q.weights) g.weights.push_back(ls * spectral_reg_grad(w));
      return g;
    };
  }

  for (int t = 0; t < T; ++t) {
    TrainHooks h = hooks;
    if (t > 0 && cfg.mode != ClMode::Vanilla) h.project = [&ps](const DlnParams& g) { return project_update(g, ps); };
    const TrainConfig& tc = t == 0 ? cfg.first_task : cfg.later_tasks;
    TrainResult tr = train(p, tasks[std::size_t(t)], tc, h);
    prev = p;
    p = std::move(tr.params);

    for (int i = 0; i < T; ++i) {
      const double l = loss(p, tasks[std::size_t(i)], 0.0);
      res.losses(t, i) = l;
      res.acc(t, i) = std::exp(-l);
      const auto ca = class_accuracy(p, tasks[std::size_t(i)]);
      if (ca) cls(t, i) = *ca;
      else classes = false;
    }
    if (t == 0) first_min = res.losses(0, 0);

    ClTaskRecord rec;
    rec.task = t + 1;
    rec.epochs = tr.epochs_run;
    rec.loss_first_min = first_min;
    if (t > 0) {
      const Task& old_task = tasks[std::size_t(t - 1)];
      const DlnParams delta = p - prev;
      if (norm_sq(delta) > 0) rec.alpha = alignment_of(prev, old_task, delta).alpha;
      rec.forget_prev = loss(p, old_task, 0.0) - loss(prev, old_task, 0.0);
      rec.metrics = cl_metrics(res.acc.topLeftCorner(t + 1, t + 1));
    }
    res.records.push_back(rec);

    if (cfg.mode != ClMode::Vanilla) {
      for (int i = 1; i <= L; ++i) {
        const std::size_t k = std::size_t(i - 1);
        ps.forward_cov[k] = accumulate(ps.forward_cov[k], input_covariance(p, tasks[std::size_t(t)], i));
        ps.forward[k] = nullspace_projector(ps.forward_cov[k], cfg.eps_forward);
        if (cfg.mode == ClMode::ForwardBackGP) {
          ps.backward_cov[k] = accumulate(ps.backward_cov[k], output_grad_covariance(p, tasks[std::size_t(t)], i));
          ps.backward[k] = nullspace_projector(ps.backward_cov[k], cfg.eps_backward);
        }
      }
    }
  }
  if (classes) res.class_accuracy = cls;
  res.final_params = std::move(p);
  res.projectors = std::move(ps);
  return res;
}

}  // namespace cl_lab
