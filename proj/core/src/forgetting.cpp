#include "cl_lab/forgetting.hpp"

#include <cmath>

#include "cl_lab/error.hpp"
#include "cl_lab/stats.hpp"

namespace cl_lab {

double forgetting_actual(const DlnParams& p1, const DlnParams& p2, const Task& old_task) {
  require(p1.depth() == p2.depth() && p1.dim() == p2.dim(), "forgetting_actual: parameter shapes differ");
  return loss(p2, old_task, 0.0) - loss(p1, old_task, 0.0);
}

TaylorTerms taylor_terms(const DlnParams& p1, const DlnParams& delta, const Task& old_task) {
  const GramStats s = gram_stats(old_task);
  return {dot(grad(p1, s, 0.0), delta), 0.5 * dot(delta, hvp(p1, s, delta))};
}

ForgettingBreakdown decompose(const DlnParams& p1, const DlnParams& delta, const Task& old_task, Rng& rng,
                              int k_random) {
  require(k_random >= 1, "decompose: need at least one random perturbation");
  const GramStats s = gram_stats(old_task);
  const double trace = hessian_trace_closed(p1, s);
  if (!(trace > 0)) fail(ErrorKind::Domain, "decompose: Hessian trace must be positive");
  ForgettingBreakdown fb;
  const double base = loss(p1, old_task, 0.0);
  fb.actual = loss(p1 + delta, old_task, 0.0) - base;
  const DlnParams hd = hvp(p1, s, delta);
  fb.first_order = dot(grad(p1, s, 0.0), delta);
  fb.second_order = 0.5 * dot(delta, hd);
  fb.update_norm_sq = norm_sq(delta);
  fb.mean_random_quad = trace / double(p1.dim_theta());
  if (fb.update_norm_sq > 0) fb.alpha = alignment_alpha(2.0 * fb.second_order, trace, fb.update_norm_sq, p1.dim_theta()).alpha;

  RunningStats rnd;
  const double target = std::sqrt(fb.update_norm_sq);
  const int d = p1.dim();
  const int L = p1.depth();
  for (int k = 0; k < k_random; ++k) {
    const Vec e = rng.gaussian_vector(Eigen::Index(p1.dim_theta()));
    const double n = e.norm();
    const DlnParams eps = DlnParams::unflatten(n > 0 ? Vec(e * (target / n)) : e, d, L);
    rnd.add(loss(p1 + eps, old_task, 0.0) - base);
  }
  fb.random_baseline = {rnd.mean(), rnd.std_err(), k_random};
  return fb;
}

std::vector<PowerIterationStep> power_iteration_trace(const DlnParams& p1, const Task& new_task,
                                                      const Task& old_task, double lr, int steps) {
  require(steps >= 2, "power_iteration_trace: need at least two steps");
  require(lr > 0, "power_iteration_trace: lr must be positive");
  const GramStats s_new = gram_stats(new_task);
  const GramStats s_old = gram_stats(old_task);
  const double trace = hessian_trace_closed(p1, s_old);
  // updates at round-off level relative to the weights count as zero
  const double tiny = 1e-24 * std::max(norm_sq(p1), 1.0);
  std::vector<PowerIterationStep> out;
  DlnParams p = p1;
  for (int k = 1; k <= steps; ++k) {
    p -= lr * grad(p, s_new, 0.0);
    bool finite = true;
    for (const Mat& w : p.weights) finite = finite && w.allFinite();
    if (!finite) break;
    const DlnParams delta = p - p1;
    PowerIterationStep st;
    st.step = k;
    st.norm_sq = norm_sq(delta);
    if (st.norm_sq > tiny && trace > 0 && std::isfinite(st.norm_sq)) {
      st.alpha = alignment_alpha(dot(delta, hvp(p1, s_old, delta)), trace, st.norm_sq, p1.dim_theta()).alpha;
      st.valid = std::isfinite(st.alpha);
    }
    out.push_back(st);
  }
  return out;
}

bool series_trend_nondecreasing(const std::vector<PowerIterationStep>& series, int window) {
  std::vector<double> a;
  for (const auto& s : series) {
    if (!s.valid) continue;
    a.push_back(s.alpha);
    if (int(a.size()) == window) break;
  }
  if (a.size() < 2) return false;
  std::vector<double> diffs;
  for (std::size_t i = 1; i < a.size(); ++i) diffs.push_back(a[i] - a[i - 1]);
  return median(diffs) >= 0.0;
}

}  // namespace cl_lab
