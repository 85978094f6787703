#pragma once

// Nested maximum likelihood: a penalized Newton fit of the linear
// coefficients inside a bounded Nelder-Mead search over the nonlinear
// feature parameters.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lktseq/features.hpp"
#include "lktseq/model.hpp"
#include "lktseq/trials.hpp"

namespace lktseq {

struct InnerOptions {
  double ridge = 1e-6;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;
  double relative_ll_tolerance = 1e-10;
  // Coefficient magnitude treated as divergence when the gradient has not
  // vanished.
  double separation_bound = 30.0;
  bool check_collinearity = true;
};

struct InnerResult {
  std::vector<double> beta;
  double log_likelihood = 0.0;  // unpenalized
  double objective = 0.0;       // log_likelihood - ridge * |beta|^2 / 2
  int iterations = 0;
  bool converged = false;
  bool separation = false;
};

/// Penalized log-likelihood; fills `gradient` when given.
double InnerObjective(const DesignMatrix& design, std::span<const double> beta,
                      double ridge, std::vector<double>* gradient = nullptr);

/// Throws SingularError naming the collinear columns when the design is rank
/// deficient (all-zero columns excepted).
InnerResult FitInner(const DesignMatrix& design, const InnerOptions& options = {},
                     std::span<const double> start = {});

struct SearchConfig {
  std::uint64_t seed = 1;
  int restarts = 3;
  int max_evals_per_restart = 200;
  // Simplex size, as a fraction of each parameter's range, at which a
  // restart stops.
  double x_tolerance = 1e-4;
  InnerOptions inner;
  ContextOptions context;
};

struct FitResult {
  ModelSpec spec;
  ColumnSchema schema;
  ColumnLayout layout;
  std::vector<double> coefficients;  // one per layout column
  NlParams nl_params;
  double log_likelihood = 0.0;
  double null_log_likelihood = 0.0;
  double objective = 0.0;
  double ridge = 0.0;
  int iterations_inner = 0;  // Newton iterations of the returned fit
  int outer_evals = 0;
  bool converged = false;
  std::size_t n_trials = 0;
  std::vector<double> outer_trace;  // best objective after each evaluation
};

/// Fits `spec` to `students`. Throws Error(kFit) wrapping inner failures with
/// the offending parameter values.
FitResult FitModel(const ModelSpec& spec, std::span<const StudentTrials> students,
                   const ColumnSchema& schema, const SearchConfig& config = {});

/// Bounded Nelder-Mead over the unit cube, maximizing `objective`.
struct SearchResult {
  std::vector<double> best;  // unit-cube coordinates
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

SearchResult MaximizeBounded(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, int max_evals, double x_tolerance);

struct Predictions {
  std::vector<double> p;
  std::vector<double> y;
  std::vector<RowRef> rows;
};

/// Model probabilities for every trial of `students`, using the fitted
/// column layout; levels unseen in training contribute nothing.
Predictions Predict(const FitResult& fit, std::span<const StudentTrials> students,
                    const ContextOptions& options = {});

double Sigmoid(double eta);

}  // namespace lktseq
