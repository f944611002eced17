#include "cl_lab/dln.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cl_lab/csv.hpp"
#include "cl_lab/error.hpp"

namespace cl_lab {

std::size_t DlnParams::dim_theta() const {
  std::size_t n = 0;
  for (const Mat& w : weights) n += static_cast<std::size_t>(w.size());
  return n;
}

DlnParams DlnParams::zeros_like(const DlnParams& p) {
  DlnParams z;
  for (const Mat& w : p.weights) z.weights.push_back(Mat::Zero(w.rows(), w.cols()));
  return z;
}

DlnParams DlnParams::zeros(int d, int depth) {
  DlnParams z;
  for (int i = 0; i < depth; ++i) z.weights.push_back(Mat::Zero(d, d));
  return z;
}

DlnParams& DlnParams::operator+=(const DlnParams& o) {
  require(o.weights.size() == weights.size(), "DlnParams: depth mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += o.weights[i];
  return *this;
}

DlnParams& DlnParams::operator-=(const DlnParams& o) {
  require(o.weights.size() == weights.size(), "DlnParams: depth mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] -= o.weights[i];
  return *this;
}

DlnParams& DlnParams::operator*=(double s) {
  for (Mat& w : weights) w *= s;
  return *this;
}

Vec DlnParams::flatten() const {
  Vec v(static_cast<Eigen::Index>(dim_theta()));
  Eigen::Index off = 0;
  for (const Mat& w : weights) {
    v.segment(off, w.size()) = Eigen::Map<const Vec>(w.data(), w.size());
    off += w.size();
  }
  return v;
}

DlnParams DlnParams::unflatten(const Vec& v, int d, int depth) {
  require(v.size() == Eigen::Index(d) * d * depth, "DlnParams::unflatten: size mismatch");
  DlnParams p;
  for (int i = 0; i < depth; ++i)
    p.weights.push_back(Eigen::Map<const Mat>(v.data() + Eigen::Index(i) * d * d, d, d));
  return p;
}

DlnParams operator+(DlnParams a, const DlnParams& b) { return a += b; }
DlnParams operator-(DlnParams a, const DlnParams& b) { return a -= b; }
DlnParams operator*(double s, DlnParams a) { return a *= s; }

double dot(const DlnParams& a, const DlnParams& b) {
  require(a.weights.size() == b.weights.size(), "dot: depth mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.weights.size(); ++i) s += a.weights[i].cwiseProduct(b.weights[i]).sum();
  return s;
}

double norm_sq(const DlnParams& a) { return dot(a, a); }

void validate(const DlnParams& p) {
  require(p.depth() >= 1, "DlnParams: need at least one layer");
  const Eigen::Index d = p.weights.front().rows();
  for (const Mat& w : p.weights) {
    require(w.rows() == d && w.cols() == d, "DlnParams: all weights must be square with equal size");
    if (!w.allFinite()) fail(ErrorKind::Numerical, "DlnParams: non-finite weight entries");
  }
}

DlnParams init_params(int d, int depth, double scale, Rng& rng) {
  require(d >= 1 && depth >= 1, "init_params: bad shape");
  DlnParams p;
  const double s = scale / std::sqrt(double(d));
  for (int i = 0; i < depth; ++i) p.weights.push_back(s * rng.gaussian_matrix(d, d));
  return p;
}

LayerProducts layer_products(const DlnParams& p) {
  const int L = p.depth();
  const int d = p.dim();
  LayerProducts pr;
  pr.prefix.resize(std::size_t(L + 1));
  pr.suffix.resize(std::size_t(L + 1));
  pr.prefix[0] = Mat::Identity(d, d);
  for (int i = 1; i <= L; ++i) pr.prefix[std::size_t(i)] = p.weights[std::size_t(i - 1)] * pr.prefix[std::size_t(i - 1)];
  pr.suffix[std::size_t(L)] = Mat::Identity(d, d);
  for (int i = L - 1; i >= 0; --i) pr.suffix[std::size_t(i)] = pr.suffix[std::size_t(i + 1)] * p.weights[std::size_t(i)];
  return pr;
}

Mat product_range(const DlnParams& p, int a, int b) {
  const int L = p.depth();
  require(L >= 1, "product_range: empty network");
  require(a >= 1 && a <= L + 1 && b >= 0 && b <= L, "product_range: index out of range");
  const int d = p.dim();
  if (b < a) return Mat::Identity(d, d);
  Mat out = p.weights[std::size_t(a - 1)];
  for (int k = a + 1; k <= b; ++k) out = p.weights[std::size_t(k - 1)] * out;
  return out;
}

namespace {

void check_task(const DlnParams& p, const Task& t) {
  validate(p);
  require(t.dim_x() == p.dim() && t.dim_y() == p.dim(), "task dimensions do not match the network");
  require(t.inputs.cols() == t.labels.cols(), "task inputs and labels disagree on sample count");
}

double reg_term(const DlnParams& p, double l2) {
  double r = 0.0;
  for (const Mat& w : p.weights) r += w.squaredNorm();
  return l2 * r;
}

}  // namespace

GramStats gram_stats(const Task& t) {
  return GramStats{t.inputs * t.inputs.transpose(), t.labels * t.inputs.transpose(), t.labels.squaredNorm()};
}

double loss(const DlnParams& p, const Task& t, double l2) {
  check_task(p, t);
  const Mat e = product_range(p, 1, p.depth()) * t.inputs - t.labels;
  return 0.5 * e.squaredNorm() + reg_term(p, l2);
}

double loss(const DlnParams& p, const GramStats& s, double l2) {
  validate(p);
  const Mat w = product_range(p, 1, p.depth());
  const double fit = (w * s.xx * w.transpose()).trace() - 2.0 * w.cwiseProduct(s.yx).sum() + s.yy;
  return 0.5 * std::max(fit, 0.0) + reg_term(p, l2);
}

DlnParams grad(const DlnParams& p, const GramStats& s, double l2) {
  validate(p);
  require(s.xx.rows() == p.dim() && s.yx.rows() == p.dim(), "grad: statistics do not match the network");
  const int L = p.depth();
  const LayerProducts pr = layer_products(p);
  const Mat r = pr.prefix[std::size_t(L)] * s.xx - s.yx;
  DlnParams g;
  g.weights.reserve(std::size_t(L));
  for (int i = 1; i <= L; ++i) {
    Mat gi = pr.suffix[std::size_t(i)].transpose() * r * pr.prefix[std::size_t(i - 1)].transpose();
    if (l2 != 0.0) gi += 2.0 * l2 * p.weights[std::size_t(i - 1)];
    g.weights.push_back(std::move(gi));
  }
  return g;
}

DlnParams grad(const DlnParams& p, const Task& t, double l2) {
  check_task(p, t);
  const int L = p.depth();
  const LayerProducts pr = layer_products(p);
  const Mat r = (pr.prefix[std::size_t(L)] * t.inputs - t.labels) * t.inputs.transpose();
  DlnParams g;
  for (int i = 1; i <= L; ++i) {
    Mat gi = pr.suffix[std::size_t(i)].transpose() * r * pr.prefix[std::size_t(i - 1)].transpose();
    if (l2 != 0.0) gi += 2.0 * l2 * p.weights[std::size_t(i - 1)];
    g.weights.push_back(std::move(gi));
  }
  return g;
}

namespace {

struct InterpTarget {
  Mat target;     // Y X^+
  Mat projector;  // I_L(target) = target^+ target
  int rank = 0;
};

InterpTarget interp_target(const Task& t) {
  InterpTarget it;
  it.target = t.labels * pinv(t.inputs, 1e-10);
  const SpectralDecomp sd = svd(it.target);
  const double top = sd.singular_values.size() ? sd.singular_values(0) : 0.0;
  int r = 0;
  for (Eigen::Index i = 0; i < sd.singular_values.size(); ++i)
    if (sd.singular_values(i) > 1e-8 * top && sd.singular_values(i) > 0) ++r;
  it.rank = r;
  const Mat v = sd.right.leftCols(r);
  it.projector = v * v.transpose();
  return it;
}

InterpolationReport diagnostics_from(const Mat& w, const InterpTarget& it, int L) {
  InterpolationReport rep;
  const int d = static_cast<int>(w.rows());
  const SpectralDecomp sw = svd(w);
  const int r = it.rank;
  if (r == 0) {
    rep.rho = 0.0;
    rep.tau = sw.singular_values.squaredNorm() > 0 ? 1.0 : 0.0;
    return rep;
  }
  const double top = sw.singular_values(0);
  if (!(top > 0) || sw.singular_values(r - 1) <= 1e-8 * top) rep.rank_deficient = true;
  // W^+ restricted to the rank of the target: the assumption requires W's nullspaces to sit inside the target's.
  Vec inv = Vec::Zero(d);
  for (int i = 0; i < r; ++i)
    if (sw.singular_values(i) > 0) inv(i) = 1.0 / sw.singular_values(i);
  const Mat w_pinv = sw.right * inv.asDiagonal() * sw.left.transpose();
  const Mat delta = w_pinv * it.target - it.projector;
  rep.rho = svd(delta).singular_values(0);
  const Mat comp = Mat::Identity(d, d) - it.projector;
  Vec spill(d);
  for (int j = 0; j < d; ++j) spill(j) = (comp * sw.right.col(j)).squaredNorm();
  double tau = 0.0;
  for (int k = 1; k <= 2 * L; ++k) {
    const double pw = 3.0 - double(k) / L;
    double num = 0.0;
    double den = 0.0;
    for (int j = 0; j < d; ++j) {
      const double s2p = std::pow(sw.singular_values(j), 2.0 * pw);
      num += s2p * spill(j);
      den += s2p;
    }
    if (den > 0) tau = std::max(tau, num / den);
  }
  rep.tau = std::clamp(tau, 0.0, 1.0);
  return rep;
}

}  // namespace

InterpolationReport interpolation_diagnostics(const DlnParams& p, const Task& t) {
  check_task(p, t);
  const Mat w = product_range(p, 1, p.depth());
  InterpolationReport rep = diagnostics_from(w, interp_target(t), p.depth());
  rep.residual_loss = 0.5 * (w * t.inputs - t.labels).squaredNorm();
  return rep;
}

BalanceReport balance_diagnostics(const DlnParams& p) {
  validate(p);
  const int L = p.depth();
  require(L >= 2, "balance_diagnostics: need at least two layers");
  BalanceReport rep;
  double mean_norm = 0.0;
  for (const Mat& w : p.weights) mean_norm += (w * w.transpose()).norm();
  mean_norm /= L;
  double worst = 0.0;
  for (int i = 0; i + 1 < L; ++i) {
    const Mat& wi = p.weights[std::size_t(i)];
    const Mat& wn = p.weights[std::size_t(i + 1)];
    worst = std::max(worst, (wn.transpose() * wn - wi * wi.transpose()).norm());
  }
  rep.imbalance = mean_norm > 0 ? worst / mean_norm : 0.0;
  std::vector<Vec> sv;
  double top = 0.0;
  for (const Mat& w : p.weights) {
    sv.push_back(svd(w).singular_values);
    top = std::max(top, sv.back()(0));
  }
  double gap = 0.0;
  for (int i = 0; i < L; ++i)
    for (int j = i + 1; j < L; ++j)
      gap = std::max(gap, (sv[std::size_t(i)] - sv[std::size_t(j)]).cwiseAbs().maxCoeff());
  rep.spectrum_gap = gap;
  rep.spectrum_spread = top > 0 ? gap / top : 0.0;
  return rep;
}

TrainResult train(const DlnParams& p0, const Task& t, const TrainConfig& cfg, Rng& rng) {
  (void)rng;  // full-batch descent is deterministic
  return train(p0, t, cfg, TrainHooks{});
}

TrainResult train(const DlnParams& p0, const Task& t, const TrainConfig& cfg, const TrainHooks& hooks) {
  check_task(p0, t);
  require(cfg.lr > 0, "train: lr must be positive");
  require(cfg.l2 >= 0, "train: l2 must be nonnegative");
  require(cfg.epochs >= 1, "train: epochs must be >= 1");
  require(cfg.momentum >= 0 && cfg.momentum < 1, "train: momentum must lie in [0,1)");
  const GramStats stats = gram_stats(t);
  std::optional<InterpTarget> target;
  if (cfg.record_diagnostics) target = interp_target(t);
  const int L = p0.depth();
  const int every = std::max(cfg.record_every, 1);

  TrainResult res;
  DlnParams p = p0;
  DlnParams velocity = DlnParams::zeros_like(p0);
  auto objective = [&](const DlnParams& q) {
    double v = loss(q, stats, cfg.l2);
    if (hooks.extra_loss) v += hooks.extra_loss(q);
    return v;
  };
  auto direction = [&](const DlnParams& q) {
    DlnParams g = grad(q, stats, cfg.l2);
    if (hooks.project) g = hooks.project(g);
    if (hooks.extra_grad) g += hooks.extra_grad(q);
    return g;
  };
  double cur = objective(p);
  if (!std::isfinite(cur)) fail(ErrorKind::Numerical, "train: initial loss is not finite");

  auto record = [&](int epoch, double l, double gn) {
    TrainLogRow row{epoch, l, gn, 0.0, 0.0};
    if (target) {
      const InterpolationReport ir = diagnostics_from(product_range(p, 1, L), *target, L);
      row.rho = ir.rho;
      row.tau = ir.tau;
    }
    res.log.push_back(row);
  };

  int epoch = 0;
  for (; epoch < cfg.epochs; ++epoch) {
    const DlnParams g = direction(p);
    const double gn = std::sqrt(norm_sq(g));
    if (!std::isfinite(gn)) fail(ErrorKind::Numerical, "train: gradient diverged after epoch " + std::to_string(epoch));
    if (epoch % every == 0) record(epoch, cur, gn);
    if (gn <= cfg.grad_tol) break;
    double lr = cfg.lr;
    DlnParams next;
    DlnParams next_v;
    double next_loss = 0.0;
    for (int attempt = 0;; ++attempt) {
      next_v = cfg.momentum * velocity - lr * g;
      next = p + next_v;
      next_loss = objective(next);
      if (std::isfinite(next_loss) && next_loss <= cur + 1e-13 * std::abs(cur)) break;
      if (attempt >= 60) {
        if (!std::isfinite(next_loss))
          fail(ErrorKind::Numerical, "train: loss diverged; last finite epoch " + std::to_string(epoch));
        break;
      }
      lr *= 0.5;
    }
    p = std::move(next);
    velocity = std::move(next_v);
    cur = next_loss;
  }
  if (res.log.empty() || res.log.back().epoch != epoch) {
    const DlnParams g = direction(p);
    record(epoch, cur, std::sqrt(norm_sq(g)));
  }
  res.params = std::move(p);
  res.epochs_run = epoch;
  return res;
}

std::string training_log_csv(const std::vector<TrainLogRow>& log) {
  CsvWriter w({"epoch", "loss", "grad_norm", "rho", "tau"});
  for (const TrainLogRow& r : log) w.row(r.epoch, r.loss, r.grad_norm, r.rho, r.tau);
  return w.str();
}

}  // namespace cl_lab
