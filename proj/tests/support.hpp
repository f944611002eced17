#pragma once

#include <cmath>
#include <functional>

#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"
#include "cl_lab/linalg.hpp"
#include "cl_lab/rng.hpp"

namespace cl_lab::testing {

inline Mat random_psd(int d, int rank, Rng& rng) {
  const Mat g = rng.gaussian_matrix(d, rank);
  return g * g.transpose();
}

inline DlnParams random_params(int d, int L, double scale, Rng& rng) {
  DlnParams p;
  for (int i = 0; i < L; ++i) p.weights.push_back(scale * rng.gaussian_matrix(d, d) / std::sqrt(double(d)));
  return p;
}

inline Task random_task(int d, int n, Rng& rng) {
  Task t;
  t.inputs = rng.gaussian_matrix(d, n) / std::sqrt(double(n));
  t.labels = rng.gaussian_matrix(d, n) / std::sqrt(double(n));
  return t;
}

// Loss written out entry by entry, independent of the library's matrix products.
inline double naive_loss(const DlnParams& p, const Task& t, double l2) {
  double total = 0.0;
  const int d = p.dim();
  for (Eigen::Index s = 0; s < t.n(); ++s) {
    Vec h = t.inputs.col(s);
    for (const Mat& w : p.weights) {
      Vec next = Vec::Zero(d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) next(r) += w(r, c) * h(c);
      h = next;
    }
    for (int r = 0; r < d; ++r) total += 0.5 * (h(r) - t.labels(r, s)) * (h(r) - t.labels(r, s));
  }
  for (const Mat& w : p.weights)
    for (Eigen::Index k = 0; k < w.size(); ++k) total += l2 * w.data()[k] * w.data()[k];
  return total;
}

// Central differences of a scalar function of the flattened parameters.
inline Vec fd_gradient(const std::function<double(const DlnParams&)>& f, const DlnParams& p, double h) {
  const Vec x = p.flatten();
  Vec g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    g(k) = (f(DlnParams::unflatten(xp, p.dim(), p.depth())) - f(DlnParams::unflatten(xm, p.dim(), p.depth()))) /
           (2 * h);
  }
  return g;
}

inline double rel_err(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }
inline double rel_err(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Spectrum of random nonnegative values, some exactly zero.
inline Spectrum random_spectrum(int n, Rng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.uniform() < 0.2 ? 0.0 : 3.0 * rng.uniform();
  if (v.maxCoeff() == 0.0) v(0) = 1.0;
  std::sort(v.data(), v.data() + n, std::greater<double>());
  return Spectrum{v};
}

}  // namespace cl_lab::testing
