#include "lktseq/estimator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "lktseq/error.hpp"
#include "random.hpp"
#include "text.hpp"

namespace lktseq {

double Sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

namespace {

// log(1 + exp(eta)) without overflow.
double Softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

double MaxAbs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// X' diag(w) X over the sparse rows, upper triangle filled then mirrored.
Eigen::MatrixXd WeightedGram(const DesignMatrix& d, const std::vector<double>* weights) {
  const auto p = static_cast<Eigen::Index>(d.NumCols());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t r = 0; r < d.NumRows(); ++r) {
    const double w = weights ? (*weights)[r] : 1.0;
    if (w == 0.0) continue;
    const auto begin = d.row_ptr[r];
    const auto end = d.row_ptr[r + 1];
    for (auto a = begin; a < end; ++a) {
      const double wa = w * d.val[a];
      const auto ca = d.col[a];
      for (auto b = a; b < end; ++b) h(ca, d.col[b]) += wa * d.val[b];
    }
  }
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      // Row entries are column-sorted, so only (i <= j) was accumulated.
      h(i, j) = h(j, i);
    }
  }
  return h;
}

void CheckCollinearity(const DesignMatrix& d) {
  Eigen::MatrixXd g = WeightedGram(d, nullptr);
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < g.rows(); ++j) {
    if (g(j, j) > 0.0) live.push_back(j);
  }
  const auto k = static_cast<Eigen::Index>(live.size());
  if (k == 0) return;
  Eigen::MatrixXd c(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) {
      c(a, b) = g(live[a], live[b]) / std::sqrt(g(live[a], live[a]) * g(live[b], live[b]));
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c);
  const auto& values = eig.eigenvalues();
  const double top = values.maxCoeff();
  std::vector<bool> involved(static_cast<std::size_t>(k), false);
  bool any = false;
  for (Eigen::Index e = 0; e < k; ++e) {
    if (values(e) > 1e-10 * top) continue;
    any = true;
    const auto v = eig.eigenvectors().col(e);
    const double vmax = v.cwiseAbs().maxCoeff();
    for (Eigen::Index a = 0; a < k; ++a) {
      if (std::abs(v(a)) > 1e-6 * vmax) involved[static_cast<std::size_t>(a)] = true;
    }
  }
  if (!any) return;
  std::vector<std::string> names;
  for (Eigen::Index a = 0; a < k; ++a) {
    if (involved[static_cast<std::size_t>(a)]) names.push_back(d.columns[live[a]]);
  }
  throw SingularError(std::move(names));
}

struct FreeParam {
  std::size_t term;
  std::size_t index;
  double lower;
  double upper;
};

std::string DescribeParams(const ModelSpec& spec, const NlParams& params,
                           const ColumnSchema& schema) {
  std::ostringstream os;
  bool first = true;
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const auto infos = ParamsOf(spec.terms[i].feature);
    for (std::size_t j = 0; j < infos.size(); ++j) {
      os << (first ? "" : ", ") << TermLabel(spec.terms[i], schema) << " " << infos[j].name
         << "=" << text::FormatDouble(params.values[i][j]);
      first = false;
    }
  }
  return os.str();
}

}  // namespace

double InnerObjective(const DesignMatrix& design, std::span<const double> beta,
                      double ridge, std::vector<double>* gradient) {
  if (gradient) gradient->assign(design.NumCols(), 0.0);
  double ll = 0.0;
  for (std::size_t r = 0; r < design.NumRows(); ++r) {
    const double eta = design.Dot(r, beta);
    ll += design.y[r] * eta - Softplus(eta);
    if (gradient) {
      const double resid = design.y[r] - Sigmoid(eta);
      for (auto k = design.row_ptr[r]; k < design.row_ptr[r + 1]; ++k) {
        (*gradient)[design.col[k]] += resid * design.val[k];
      }
    }
  }
  double norm2 = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    norm2 += beta[j] * beta[j];
    if (gradient) (*gradient)[j] -= ridge * beta[j];
  }
  return ll - 0.5 * ridge * norm2;
}

InnerResult FitInner(const DesignMatrix& design, const InnerOptions& options,
                     std::span<const double> start) {
  const std::size_t p = design.NumCols();
  if (options.check_collinearity) CheckCollinearity(design);

  InnerResult res;
  res.beta.assign(p, 0.0);
  if (start.size() == p) std::copy(start.begin(), start.end(), res.beta.begin());

  std::vector<double> grad;
  std::vector<double> weights(design.NumRows());
  double obj = InnerObjective(design, res.beta, options.ridge, &grad);

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    for (std::size_t r = 0; r < design.NumRows(); ++r) {
      const double pr = Sigmoid(design.Dot(r, res.beta));
      weights[r] = pr * (1.0 - pr);
    }
    Eigen::MatrixXd info = WeightedGram(design, &weights);
    info.diagonal().array() += options.ridge;
    Eigen::Map<const Eigen::VectorXd> g(grad.data(), static_cast<Eigen::Index>(p));
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 0.0).any()) {
      CheckCollinearity(design);
      throw Error(ErrorKind::kSingular, "Newton system is not positive definite");
    }
    const Eigen::VectorXd step = ldlt.solve(g);
    const double step_size = p ? step.cwiseAbs().maxCoeff() : 0.0;
    if (MaxAbs(grad) < options.gradient_tolerance && step_size < 1e-6 * (1.0 + MaxAbs(res.beta))) {
      res.converged = true;
      break;
    }

    // Step halving keeps the penalized objective nondecreasing.
    std::vector<double> trial(p);
    std::vector<double> trial_grad;
    double t = 1.0;
    double trial_obj = -std::numeric_limits<double>::infinity();
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      for (std::size_t j = 0; j < p; ++j) trial[j] = res.beta[j] + t * step(static_cast<Eigen::Index>(j));
      trial_obj = InnerObjective(design, trial, options.ridge, &trial_grad);
      if (std::isfinite(trial_obj) && trial_obj >= obj - 1e-12 * std::abs(obj)) {
        improved = true;
        break;
      }
    }
    if (!improved) {
      // No ascent direction left at double precision.
      res.converged = MaxAbs(grad) < 1e-4;
      break;
    }
    const double change = std::abs(trial_obj - obj);
    res.beta.swap(trial);
    grad.swap(trial_grad);
    const double previous = obj;
    obj = trial_obj;

    if (MaxAbs(res.beta) > options.separation_bound && t * step_size > 1e-6) {
      res.separation = true;
      ++res.iterations;
      break;
    }
    if (change <= options.relative_ll_tolerance * std::max(std::abs(previous), 1e-300)) {
      res.converged = true;
      ++res.iterations;
      break;
    }
  }
  res.objective = obj;
  double norm2 = 0.0;
  for (double b : res.beta) norm2 += b * b;
  res.log_likelihood = obj + 0.5 * options.ridge * norm2;
  return res;
}

SearchResult MaximizeBounded(const std::function<double(std::span<const double>)>& objective,
                             std::vector<double> start, int max_evals, double x_tolerance) {
  const std::size_t k = start.size();
  SearchResult out;
  auto clamp = [](std::vector<double>& x) {
    for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
  };
  auto eval = [&](const std::vector<double>& x) {
    ++out.evaluations;
    const double f = objective(x);
    return std::isfinite(f) ? f : -std::numeric_limits<double>::infinity();
  };

  clamp(start);
  std::vector<std::vector<double>> simplex{start};
  for (std::size_t i = 0; i < k; ++i) {
    auto v = start;
    v[i] = v[i] + 0.1 <= 1.0 ? v[i] + 0.1 : v[i] - 0.1;
    simplex.push_back(std::move(v));
  }
  std::vector<double> f;
  for (const auto& v : simplex) f.push_back(eval(v));

  std::vector<std::size_t> order(k + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[a] > f[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> f2;
    for (auto i : order) {
      s2.push_back(simplex[i]);
      f2.push_back(f[i]);
    }
    simplex.swap(s2);
    f.swap(f2);
  };

  while (true) {
    sort_simplex();
    double spread = 0.0;
    for (std::size_t i = 1; i <= k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        spread = std::max(spread, std::abs(simplex[i][j] - simplex[0][j]));
      }
    }
    if (spread < x_tolerance) {
      out.converged = true;
      break;
    }
    if (out.evaluations >= max_evals) break;

    std::vector<double> centroid(k, 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) centroid[j] += simplex[i][j] / static_cast<double>(k);
    }
    auto along = [&](double scale, const std::vector<double>& toward) {
      std::vector<double> x(k);
      for (std::size_t j = 0; j < k; ++j) x[j] = centroid[j] + scale * (toward[j] - centroid[j]);
      clamp(x);
      return x;
    };
    const auto& worst = simplex[k];
    auto xr = along(-1.0, worst);
    const double fr = eval(xr);
    if (fr > f[0]) {
      auto xe = along(-2.0, worst);
      const double fe = eval(xe);
      if (fe > fr) {
        simplex[k] = std::move(xe);
        f[k] = fe;
      } else {
        simplex[k] = std::move(xr);
        f[k] = fr;
      }
      continue;
    }
    if (fr > f[k - 1]) {
      simplex[k] = std::move(xr);
      f[k] = fr;
      continue;
    }
    const bool outside = fr > f[k];
    auto xc = outside ? along(0.5, xr) : along(0.5, worst);
    const double fc = eval(xc);
    if (fc > (outside ? fr : f[k])) {
      simplex[k] = std::move(xc);
      f[k] = fc;
      continue;
    }
    for (std::size_t i = 1; i <= k; ++i) {
      for (std::size_t j = 0; j < k; ++j) {
        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
      }
      f[i] = eval(simplex[i]);
    }
  }
  sort_simplex();
  out.best = simplex[0];
  out.value = f[0];
  return out;
}

FitResult FitModel(const ModelSpec& spec, std::span<const StudentTrials> students,
                   const ColumnSchema& schema, const SearchConfig& config) {
  if (spec.terms.empty()) throw Error(ErrorKind::kInvalidArgument, "model has no terms");
  FitResult fit;
  fit.spec = spec;
  fit.schema = schema;
  fit.ridge = config.inner.ridge;
  fit.layout = MakeLayout(spec, students, schema);
  const DesignBuilder builder(spec, fit.layout, students, config.context);

  std::vector<FreeParam> free;
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const auto infos = ParamsOf(spec.terms[i].feature);
    for (std::size_t j = 0; j < infos.size(); ++j) {
      if (spec.terms[i].fixed_params.count(infos[j].name)) continue;
      double lower = infos[j].lower;
      if (infos[j].lower_open) lower += 1e-3 * (infos[j].upper - infos[j].lower);
      free.push_back({i, j, lower, infos[j].upper});
    }
  }

  const NlParams initial = InitialParams(spec);
  auto to_params = [&](std::span<const double> unit) {
    NlParams p = initial;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const auto& fp = free[k];
      p.values[fp.term][fp.index] = fp.lower + unit[k] * (fp.upper - fp.lower);
    }
    return p;
  };

  bool have_best = false;
  NlParams best_params = initial;
  InnerResult best_inner;
  bool checked = false;
  std::size_t n_rows = 0;
  double y_sum = 0.0;

  auto evaluate = [&](const NlParams& params) -> double {
    const DesignMatrix design = builder.Build(params);
    if (!checked) {
      n_rows = design.NumRows();
      y_sum = std::accumulate(design.y.begin(), design.y.end(), 0.0);
    }
    InnerOptions inner = config.inner;
    inner.check_collinearity = inner.check_collinearity && !checked;
    checked = true;
    InnerResult res;
    try {
      res = FitInner(design, inner,
                     have_best ? std::span<const double>(best_inner.beta) : std::span<const double>());
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " [candidate: " +
                                DescribeParams(spec, params, schema) + "]");
    }
    ++fit.outer_evals;
    const bool better =
        !have_best || res.objective > best_inner.objective ||
        (res.objective == best_inner.objective && params.values < best_params.values);
    if (better) {
      have_best = true;
      best_params = params;
      best_inner = res;
    }
    fit.outer_trace.push_back(best_inner.objective);
    return res.objective;
  };

  bool search_converged = free.empty();
  if (free.empty()) {
    evaluate(initial);
  } else {
    std::mt19937_64 gen(rng::SplitMix(config.seed));
    std::vector<double> start(free.size());
    for (std::size_t k = 0; k < free.size(); ++k) {
      const auto& fp = free[k];
      start[k] = (initial.values[fp.term][fp.index] - fp.lower) / (fp.upper - fp.lower);
    }
    for (int r = 0; r < std::max(1, config.restarts); ++r) {
      if (r > 0) {
        for (auto& v : start) v = rng::Uniform(gen);
      }
      auto sr = MaximizeBounded([&](std::span<const double> u) { return evaluate(to_params(u)); },
                                start, config.max_evals_per_restart, config.x_tolerance);
      search_converged = search_converged || sr.converged;
    }
  }

  fit.nl_params = best_params;
  fit.coefficients = best_inner.beta;
  fit.log_likelihood = best_inner.log_likelihood;
  fit.objective = best_inner.objective;
  fit.iterations_inner = best_inner.iterations;
  fit.converged = best_inner.converged && !best_inner.separation && search_converged;
  fit.n_trials = n_rows;
  if (n_rows > 0) {
    const double rate = std::clamp(y_sum / static_cast<double>(n_rows), 1e-12, 1.0 - 1e-12);
    fit.null_log_likelihood = y_sum * std::log(rate) +
                              (static_cast<double>(n_rows) - y_sum) * std::log1p(-rate);
  }
  return fit;
}

Predictions Predict(const FitResult& fit, std::span<const StudentTrials> students,
                    const ContextOptions& options) {
  const DesignMatrix d =
      BuildDesignMatrix(fit.spec, fit.layout, students, fit.nl_params, options);
  Predictions out;
  out.p.reserve(d.NumRows());
  for (std::size_t r = 0; r < d.NumRows(); ++r) {
    out.p.push_back(Sigmoid(d.Dot(r, fit.coefficients)));
  }
  out.y = d.y;
  out.rows = d.rows;
  return out;
}

}  // namespace lktseq
