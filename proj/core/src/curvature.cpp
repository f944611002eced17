#include "cl_lab/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cl_lab/error.hpp"
#include "cl_lab/parallel.hpp"
#include "cl_lab/stats.hpp"

namespace cl_lab {

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::Deterministic:
      return "deterministic";
    case Estimator::MonteCarlo:
      return "monte_carlo";
    case Estimator::ClosedForm:
      return "closed_form";
  }
  return "unknown";
}

namespace {

void check_shapes(const DlnParams& p, const DlnParams& v) {
  validate(p);
  require(v.depth() == p.depth(), "hvp: direction depth mismatch");
  for (const Mat& w : v.weights) require(w.rows() == p.dim() && w.cols() == p.dim(), "hvp: direction shape mismatch");
}

void require_whitened(const Task& t, const char* who) {
  if (whitening_error(t.inputs) > 1e-6 * std::sqrt(double(t.dim_x())))
    fail(ErrorKind::Domain, std::string(who) + ": old task inputs are not whitened; use the Monte Carlo path");
}

}  // namespace

DlnParams hvp(const DlnParams& p, const GramStats& s, const DlnParams& v) {
  check_shapes(p, v);
  const int L = p.depth();
  const int d = p.dim();
  const LayerProducts pr = layer_products(p);
  const Mat r = pr.prefix[std::size_t(L)] * s.xx - s.yx;
  auto A = [&](int i) -> const Mat& { return pr.suffix[std::size_t(i)]; };
  auto B = [&](int i) -> const Mat& { return pr.prefix[std::size_t(i - 1)]; };
  auto W = [&](int i) -> const Mat& { return p.weights[std::size_t(i - 1)]; };
  auto V = [&](int i) -> const Mat& { return v.weights[std::size_t(i - 1)]; };

  Mat sum = Mat::Zero(d, d);
  for (int i = 1; i <= L; ++i) sum += A(i) * V(i) * B(i);
  const Mat sxx = sum * s.xx;

  // q[j] = sum_{i<j} W_{j-1:i+1} V_i W_{i-1:1}; pp[j] = sum_{i>j} W_{L:i+1} V_i W_{i-1:j+1}
  std::vector<Mat> q(std::size_t(L + 1)), pp(std::size_t(L + 1));
  q[1] = Mat::Zero(d, d);
  for (int j = 1; j < L; ++j) q[std::size_t(j + 1)] = W(j) * q[std::size_t(j)] + V(j) * B(j);
  pp[std::size_t(L)] = Mat::Zero(d, d);
  for (int j = L; j > 1; --j) pp[std::size_t(j - 1)] = pp[std::size_t(j)] * W(j) + A(j) * V(j);

  DlnParams out;
  out.weights.reserve(std::size_t(L));
  for (int j = 1; j <= L; ++j) {
    Mat hj = A(j).transpose() * sxx * B(j).transpose();
    if (j > 1) hj += A(j).transpose() * r * q[std::size_t(j)].transpose();
    if (j < L) hj += pp[std::size_t(j)].transpose() * r * B(j).transpose();
    out.weights.push_back(std::move(hj));
  }
  return out;
}

DlnParams hvp(const DlnParams& p, const Task& t, const DlnParams& v) {
  require(t.dim_x() == p.dim() && t.dim_y() == p.dim(), "hvp: task dimensions do not match the network");
  return hvp(p, gram_stats(t), v);
}

Mat hessian_full(const DlnParams& p, const Task& t) {
  validate(p);
  const int L = p.depth();
  const int d = p.dim();
  const std::size_t n = p.dim_theta();
  require(n <= 5000, "hessian_full: L*d^2 exceeds 5000");
  const GramStats s = gram_stats(t);
  Mat h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    Vec e = Vec::Zero(Eigen::Index(n));
    e(Eigen::Index(k)) = 1.0;
    h.col(Eigen::Index(k)) = hvp(p, s, DlnParams::unflatten(e, d, L)).flatten();
  }
  return h;
}

double hessian_trace_closed(const DlnParams& p, const GramStats& s) {
  validate(p);
  const int L = p.depth();
  const LayerProducts pr = layer_products(p);
  CompensatedSum total;
  for (int i = 1; i <= L; ++i) {
    const Mat& b = pr.prefix[std::size_t(i - 1)];
    total.add(pr.suffix[std::size_t(i)].squaredNorm() * (b * s.xx * b.transpose()).trace());
  }
  return total.value();
}

double hessian_trace_closed(const DlnParams& p, const Task& t) { return hessian_trace_closed(p, gram_stats(t)); }

TraceEstimate hessian_trace_hutchinson(const DlnParams& p, const Task& t, int k_probes, Rng& rng) {
  require(k_probes >= 2, "hessian_trace_hutchinson: need at least two probes");
  const GramStats s = gram_stats(t);
  const int L = p.depth();
  const int d = p.dim();
  RunningStats acc;
  for (int k = 0; k < k_probes; ++k) {
    const DlnParams r = DlnParams::unflatten(rng.rademacher_vector(Eigen::Index(p.dim_theta())), d, L);
    acc.add(dot(r, hvp(p, s, r)));
  }
  return {acc.mean(), acc.std_err()};
}

AlignmentRecord alignment_alpha(double quad_form, double trace, double norm_sq, std::size_t dim_theta) {
  if (!(trace > 0)) fail(ErrorKind::Domain, "alignment_alpha: Hessian trace must be positive");
  if (!(norm_sq > 0)) fail(ErrorKind::Domain, "alignment_alpha: vector norm must be positive");
  require(dim_theta > 0, "alignment_alpha: dim_theta must be positive");
  AlignmentRecord rec;
  rec.quad_form = quad_form;
  rec.hessian_trace = trace;
  rec.vec_norm_sq = norm_sq;
  rec.dim_theta = dim_theta;
  rec.alpha = double(dim_theta) * quad_form / (trace * norm_sq);
  return rec;
}

AlignmentRecord alignment_of(const DlnParams& p, const Task& t, const DlnParams& direction) {
  const GramStats s = gram_stats(t);
  return alignment_alpha(dot(direction, hvp(p, s, direction)), hessian_trace_closed(p, s), norm_sq(direction),
                         p.dim_theta());
}

namespace {

double sample_mean(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return v.empty() ? 0.0 : s.value() / double(v.size());
}

double sample_se(const std::vector<double>& v) {
  RunningStats r;
  for (double x : v) r.add(x);
  return r.std_err();
}

}  // namespace

double RotationMoments::mean_ghg() const { return sample_mean(ghg); }
double RotationMoments::mean_norm_sq() const { return sample_mean(norm_sq); }
double RotationMoments::se_ghg() const { return sample_se(ghg); }
double RotationMoments::se_norm_sq() const { return sample_se(norm_sq); }

RotationMoments rotation_moments(const DlnParams& p, const Task& old_task, int n_rotations, Rng& rng) {
  require(n_rotations >= 1, "rotation_moments: need at least one rotation");
  validate(p);
  const GramStats s1 = gram_stats(old_task);
  const std::uint64_t base = rng.next_u64();
  const int d = p.dim();
  RotationMoments m;
  m.ghg.resize(std::size_t(n_rotations));
  m.norm_sq.resize(std::size_t(n_rotations));
  parallel_for(std::size_t(n_rotations), [&](std::size_t k) {
    Rng rk(child_seed(base, k));
    const Mat u = haar_orthogonal(d, rk);
    const GramStats s2{u * s1.xx * u.transpose(), s1.yx * u.transpose(), s1.yy};
    const DlnParams g = grad(p, s2, 0.0);
    m.ghg[k] = dot(g, hvp(p, s1, g));
    m.norm_sq[k] = norm_sq(g);
  });
  return m;
}

AlignmentRecord expected_alpha_monte_carlo(const DlnParams& p, const Task& old_task, int n_rotations, Rng& rng) {
  require_whitened(old_task, "expected_alpha_monte_carlo");
  const RotationMoments m = rotation_moments(p, old_task, n_rotations, rng);
  const double a = m.mean_ghg();
  const double b = m.mean_norm_sq();
  AlignmentRecord rec = alignment_alpha(a, hessian_trace_closed(p, old_task), b, p.dim_theta());
  rec.estimator = Estimator::MonteCarlo;
  rec.n_samples = std::size_t(n_rotations);
  if (n_rotations > 1) {
    // delta method for the ratio of means
    const double n = n_rotations;
    double caa = 0.0, cbb = 0.0, cab = 0.0;
    for (std::size_t k = 0; k < m.ghg.size(); ++k) {
      caa += (m.ghg[k] - a) * (m.ghg[k] - a);
      cbb += (m.norm_sq[k] - b) * (m.norm_sq[k] - b);
      cab += (m.ghg[k] - a) * (m.norm_sq[k] - b);
    }
    caa /= (n - 1);
    cbb /= (n - 1);
    cab /= (n - 1);
    const double rel = caa / (a * a) + cbb / (b * b) - 2.0 * cab / (a * b);
    rec.std_err = std::abs(rec.alpha) * std::sqrt(std::max(rel, 0.0) / n);
  }
  return rec;
}

double grad_norm_expected_closed(const DlnParams& p, const Task& old_task) {
  require_whitened(old_task, "grad_norm_expected_closed");
  validate(p);
  const int L = p.depth();
  const double d = p.dim();
  const LayerProducts pr = layer_products(p);
  const Mat& w = pr.prefix[std::size_t(L)];
  const Mat c = old_task.labels * old_task.inputs.transpose();
  CompensatedSum total;
  for (int i = 1; i <= L; ++i) {
    const Mat& a = pr.suffix[std::size_t(i)];
    const Mat& b = pr.prefix[std::size_t(i - 1)];
    total.add((a.transpose() * w * b.transpose()).squaredNorm());
    total.add((a.transpose() * c).squaredNorm() * b.squaredNorm() / d);
  }
  return total.value();
}

double ghg_expected_closed(const DlnParams& p, const Task& old_task) {
  require_whitened(old_task, "ghg_expected_closed");
  validate(p);
  const int L = p.depth();
  const int d = p.dim();
  const double dd = d;
  const LayerProducts pr = layer_products(p);
  const GramStats s = gram_stats(old_task);
  const Mat& w = pr.prefix[std::size_t(L)];
  const Mat& c = s.yx;
  const Mat cct = c * c.transpose();
  const Mat r = w * s.xx - s.yx;
  auto A = [&](int i) -> const Mat& { return pr.suffix[std::size_t(i)]; };
  auto B = [&](int i) -> const Mat& { return pr.prefix[std::size_t(i - 1)]; };
  std::vector<Mat> P(std::size_t(L + 1)), Q(std::size_t(L + 1));
  for (int i = 1; i <= L; ++i) {
    P[std::size_t(i)] = A(i) * A(i).transpose();
    Q[std::size_t(i)] = B(i).transpose() * B(i);
  }

  Mat k = Mat::Zero(d, d);
  for (int i = 1; i <= L; ++i) k += P[std::size_t(i)] * w * Q[std::size_t(i)];
  CompensatedSum total;
  total.add(k.squaredNorm());
  for (int i = 1; i <= L; ++i)
    for (int j = 1; j <= L; ++j)
      total.add((B(i) * B(j).transpose()).squaredNorm() *
                (P[std::size_t(i)] * cct * P[std::size_t(j)]).trace() / dd);

  for (int j = 2; j <= L; ++j) {
    for (int i = 1; i < j; ++i) {
      const Mat m = product_range(p, i + 1, j - 1);
      const Mat e1 = P[std::size_t(j)] * w * B(j).transpose() * m * A(i).transpose() * w * Q[std::size_t(i)];
      const Mat e2 = P[std::size_t(j)] * cct * A(i) * m.transpose() * B(j) * Q[std::size_t(i)] / dd;
      total.add(2.0 * r.cwiseProduct(e1 + e2).sum());
    }
  }
  return total.value();
}

AlignmentRecord alpha_closed(const DlnParams& p, const Task& old_task) {
  const double ghg = ghg_expected_closed(p, old_task);
  const double gn = grad_norm_expected_closed(p, old_task);
  AlignmentRecord rec = alignment_alpha(ghg, hessian_trace_closed(p, old_task), gn, p.dim_theta());
  rec.estimator = Estimator::ClosedForm;
  return rec;
}

RitzSpectrum lanczos(const LinearOp& op, const Vec& start, int m) {
  require(m >= 1, "lanczos: need at least one step");
  require(std::abs(start.norm() - 1.0) <= 1e-8, "lanczos: start vector must have unit norm");
  const Eigen::Index n = start.size();
  const int steps = static_cast<int>(std::min<Eigen::Index>(m, n));
  Mat basis(n, steps);
  std::vector<double> alpha, beta;
  basis.col(0) = start;
  double scale = 0.0;
  for (int k = 0; k < steps; ++k) {
    Vec w = op(basis.col(k));
    const double a = basis.col(k).dot(w);
    alpha.push_back(a);
    scale = std::max(scale, std::abs(a));
    // full reorthogonalization, applied twice
    for (int pass = 0; pass < 2; ++pass) {
      const auto q = basis.leftCols(k + 1);
      w -= q * (q.transpose() * w);
    }
    if (k + 1 == steps) break;
    const double b = w.norm();
    scale = std::max(scale, b);
    if (b <= 1e-12 * std::max(scale, 1e-300)) break;
    beta.push_back(b);
    basis.col(k + 1) = w / b;
  }
  const Eigen::Index kk = Eigen::Index(alpha.size());
  Vec diag = Eigen::Map<const Vec>(alpha.data(), kk);
  Vec sub = kk > 1 ? Vec(Eigen::Map<const Vec>(beta.data(), kk - 1)) : Vec(0);
  RitzSpectrum rs;
  if (kk == 1) {
    rs.nodes = diag;
    rs.weights = Vec::Ones(1);
    return rs;
  }
  Eigen::SelfAdjointEigenSolver<Mat> tri;
  tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (tri.info() != Eigen::Success) fail(ErrorKind::Numerical, "lanczos: tridiagonal eigensolver failed");
  rs.nodes = tri.eigenvalues();
  rs.weights = tri.eigenvectors().row(0).transpose().cwiseAbs2();
  rs.weights /= rs.weights.sum();
  return rs;
}

LinearOp hessian_operator(const DlnParams& p, const Task& t) {
  const GramStats s = gram_stats(t);
  const int d = p.dim();
  const int L = p.depth();
  return [p, s, d, L](const Vec& v) { return hvp(p, s, DlnParams::unflatten(v, d, L)).flatten(); };
}

std::vector<double> cdf_grid(const Vec& nodes, double sigma, int points) {
  require(points >= 2, "cdf_grid: need at least two points");
  const double lo = nodes.minCoeff() - 6.0 * sigma;
  const double hi = nodes.maxCoeff() + 6.0 * sigma;
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[std::size_t(i)] = lo + (hi - lo) * double(i) / double(points - 1);
  return g;
}

CdfCurve projection_cdf(const RitzSpectrum& spec, double sigma, const std::vector<double>& grid) {
  require(sigma > 0, "projection_cdf: sigma must be positive");
  CdfCurve c;
  c.grid = grid;
  c.cdf.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < spec.nodes.size(); ++i)
      acc += spec.weights(i) * 0.5 * std::erfc(-(grid[g] - spec.nodes(i)) / (sigma * std::sqrt(2.0)));
    c.cdf[g] = acc;
  }
  return c;
}

CdfCurve projection_cdf(const RitzSpectrum& spec, double sigma, int points) {
  return projection_cdf(spec, sigma, cdf_grid(spec.nodes, sigma, points));
}

RitzSpectrum exact_projection_spectrum(const EigenDecomp& h, const Vec& u) {
  RitzSpectrum rs;
  rs.nodes = h.values.values;
  rs.weights = (h.vectors.transpose() * u).cwiseAbs2();
  const double total = rs.weights.sum();
  if (total > 0) rs.weights /= total;
  return rs;
}

std::vector<double> exact_projection_cdf(const EigenDecomp& h, const Vec& u, const std::vector<double>& grid) {
  const RitzSpectrum rs = exact_projection_spectrum(h, u);
  std::vector<double> out(grid.size(), 0.0);
  for (std::size_t g = 0; g < grid.size(); ++g)
    for (Eigen::Index i = 0; i < rs.nodes.size(); ++i)
      if (rs.nodes(i) <= grid[g]) out[g] += rs.weights(i);
  return out;
}

double top_trace_threshold(const Vec& eigenvalues, double fraction) {
  require(eigenvalues.size() > 0, "top_trace_threshold: empty spectrum");
  std::vector<double> v(eigenvalues.data(), eigenvalues.data() + eigenvalues.size());
  std::sort(v.begin(), v.end(), std::greater<double>());
  double total = 0.0;
  for (double x : v) total += std::max(x, 0.0);
  double cum = 0.0;
  for (double x : v) {
    cum += std::max(x, 0.0);
    if (cum >= fraction * total) return x;
  }
  return v.back();
}

double mass_above(const RitzSpectrum& spec, double threshold) {
  const double tol = 1e-9 * std::max(std::abs(threshold), 1e-300);
  double m = 0.0;
  for (Eigen::Index i = 0; i < spec.nodes.size(); ++i)
    if (spec.nodes(i) >= threshold - tol) m += spec.weights(i);
  return m;
}

}  // namespace cl_lab
