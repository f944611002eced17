#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cl_lab/data.hpp"
#include "cl_lab/dln.hpp"
#include "cl_lab/linalg.hpp"
#include "cl_lab/rng.hpp"

namespace cl_lab {

enum class Estimator { Deterministic, MonteCarlo, ClosedForm };

std::string to_string(Estimator e);

struct AlignmentRecord {
  double alpha = 0.0;
  double quad_form = 0.0;
  double hessian_trace = 0.0;
  double vec_norm_sq = 0.0;
  std::size_t dim_theta = 0;
  Estimator estimator = Estimator::Deterministic;
  std::size_t n_samples = 1;
  double std_err = 0.0;
};

struct RitzSpectrum {
  Vec nodes;
  Vec weights;
  double broaden_sigma = 0.0;
};

// Data Hessian (no regularizer) applied to a direction.
DlnParams hvp(const DlnParams& p, const Task& t, const DlnParams& v);
DlnParams hvp(const DlnParams& p, const GramStats& s, const DlnParams& v);

// Dense Hessian in the flatten() coordinates.
Mat hessian_full(const DlnParams& p, const Task& t);

double hessian_trace_closed(const DlnParams& p, const Task& t);
double hessian_trace_closed(const DlnParams& p, const GramStats& s);

struct TraceEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
};

TraceEstimate hessian_trace_hutchinson(const DlnParams& p, const Task& t, int k_probes, Rng& rng);

AlignmentRecord alignment_alpha(double quad_form, double trace, double norm_sq, std::size_t dim_theta);

// Point alignment of a direction against the data Hessian of a task.
AlignmentRecord alignment_of(const DlnParams& p, const Task& t, const DlnParams& direction);

// Per-rotation samples of g^T H1 g and ||g||^2, g the gradient on the rotated task.
struct RotationMoments {
  std::vector<double> ghg;
  std::vector<double> norm_sq;

  double mean_ghg() const;
  double mean_norm_sq() const;
  double se_ghg() const;
  double se_norm_sq() const;
};

RotationMoments rotation_moments(const DlnParams& p, const Task& old_task, int n_rotations, Rng& rng);

AlignmentRecord expected_alpha_monte_carlo(const DlnParams& p, const Task& old_task, int n_rotations, Rng& rng);

double grad_norm_expected_closed(const DlnParams& p, const Task& old_task);
double ghg_expected_closed(const DlnParams& p, const Task& old_task);
AlignmentRecord alpha_closed(const DlnParams& p, const Task& old_task);

using LinearOp = std::function<Vec(const Vec&)>;

RitzSpectrum lanczos(const LinearOp& op, const Vec& start, int m);

LinearOp hessian_operator(const DlnParams& p, const Task& t);

struct CdfCurve {
  std::vector<double> grid;
  std::vector<double> cdf;
};

// Evenly spaced grid spanning the nodes with a 6 sigma margin.
std::vector<double> cdf_grid(const Vec& nodes, double sigma, int points);

CdfCurve projection_cdf(const RitzSpectrum& spec, double sigma, const std::vector<double>& grid);
CdfCurve projection_cdf(const RitzSpectrum& spec, double sigma, int points = 512);

// sum_i p_i 1[lambda_i <= t] with p_i = <v_i, u>^2 for unit u.
std::vector<double> exact_projection_cdf(const EigenDecomp& h, const Vec& u, const std::vector<double>& grid);

// Spectrum of eigenvalues with projection weights of a unit vector, as a RitzSpectrum.
RitzSpectrum exact_projection_spectrum(const EigenDecomp& h, const Vec& u);

// Smallest eigenvalue threshold t such that eigenvalues >= t carry `fraction` of the trace.
double top_trace_threshold(const Vec& eigenvalues, double fraction);

// Mass of a projection spectrum at nodes >= threshold.
double mass_above(const RitzSpectrum& spec, double threshold);

}  // namespace cl_lab
