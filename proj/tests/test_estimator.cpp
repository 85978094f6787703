#include <doctest.h>

#include <cmath>
#include <random>

#include "lktseq/error.hpp"
#include "lktseq/estimator.hpp"
#include "lktseq/simulator.hpp"

using namespace lktseq;

namespace {

DesignMatrix Dense(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  DesignMatrix d;
  for (std::size_t c = 0; c < x.at(0).size(); ++c) d.columns.push_back("x" + std::to_string(c));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t c = 0; c < x[r].size(); ++c) {
      if (x[r][c] != 0.0) {
        d.col.push_back(static_cast<std::uint32_t>(c));
        d.val.push_back(x[r][c]);
      }
    }
    d.row_ptr.push_back(d.col.size());
    d.y.push_back(y[r]);
    d.rows.push_back({0, static_cast<std::uint32_t>(r)});
  }
  return d;
}

DesignMatrix Logistic(std::size_t n, const std::vector<double>& beta, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row{1.0};
    for (std::size_t c = 1; c < beta.size(); ++c) row.push_back(c % 2 ? normal(gen) : (unit(gen) < 0.5));
    double eta = 0.0;
    for (std::size_t c = 0; c < beta.size(); ++c) eta += beta[c] * row[c];
    y.push_back(unit(gen) < Sigmoid(eta) ? 1.0 : 0.0);
    x.push_back(row);
  }
  return Dense(x, y);
}

Dataset SmallBird(int students, std::uint64_t seed) {
  auto design = BirdDesign();
  design.n_students = students;
  design.seed = seed;
  auto skeleton = GenerateSequence(design);
  const auto truth = DefaultTruth(skeleton, seed);
  return SimulateOutcomes(std::move(skeleton), truth, seed).dataset;
}

}  // namespace

TEST_CASE("intercept-only fit recovers the log odds") {
  std::vector<std::vector<double>> x(100, {1.0});
  std::vector<double> y(100, 0.0);
  for (int i = 0; i < 70; ++i) y[i] = 1.0;
  const auto res = FitInner(Dense(x, y));
  CHECK(res.converged);
  CHECK(res.beta[0] == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-5));
}

TEST_CASE("an uninformative column gets a zero coefficient") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 200; ++i) {
    x.push_back({1.0, i % 2 ? 1.0 : -1.0});
    y.push_back((i / 2) % 2);
  }
  const auto res = FitInner(Dense(x, y));
  CHECK(std::abs(res.beta[1]) < 1e-8);
  CHECK(std::abs(res.beta[0]) < 1e-8);
}

TEST_CASE("known coefficients are recovered") {
  const std::vector<double> truth{-0.5, 1.2, 0.8, -0.7};
  const auto res = FitInner(Logistic(10000, truth, 5));
  REQUIRE(res.converged);
  for (std::size_t c = 0; c < truth.size(); ++c) CHECK(std::abs(res.beta[c] - truth[c]) < 0.1);
}

TEST_CASE("analytic gradient matches central differences") {
  const auto d = Logistic(500, {0.3, -0.8, 0.5}, 9);
  const std::vector<double> beta{0.1, -0.4, 0.9};
  std::vector<double> grad;
  InnerObjective(d, beta, 0.01, &grad);
  for (std::size_t c = 0; c < beta.size(); ++c) {
    const double h = 1e-6;
    auto up = beta;
    auto down = beta;
    up[c] += h;
    down[c] -= h;
    const double fd = (InnerObjective(d, up, 0.01) - InnerObjective(d, down, 0.01)) / (2 * h);
    CHECK(grad[c] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("different starting points reach the same optimum") {
  const auto d = Logistic(2000, {0.2, 1.0, -0.6}, 13);
  const auto a = FitInner(d);
  const std::vector<double> start{3.0, -2.0, 2.0};
  const auto b = FitInner(d, {}, start);
  for (std::size_t c = 0; c < a.beta.size(); ++c) CHECK(std::abs(a.beta[c] - b.beta[c]) < 1e-6);
  CHECK(std::abs(a.log_likelihood - b.log_likelihood) < 1e-8);
}

TEST_CASE("collinear columns raise a singular error naming them") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) {
    const double v = i % 5;
    x.push_back({1.0, v, 2.0 * v});
    y.push_back(i % 3 == 0);
  }
  try {
    FitInner(Dense(x, y));
    FAIL("expected SingularError");
  } catch (const SingularError& e) {
    CHECK(e.columns() == std::vector<std::string>{"x1", "x2"});
  }
}

TEST_CASE("perfect separation is flagged") {
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (int i = 0; i < 40; ++i) {
    x.push_back({1.0, i < 20 ? -1.0 : 1.0});
    y.push_back(i >= 20);
  }
  InnerOptions opt;
  opt.ridge = 0.0;
  const auto res = FitInner(Dense(x, y), opt);
  CHECK(res.separation);
  CHECK_FALSE(res.converged);
}

TEST_CASE("bounded search finds an interior maximum") {
  auto f = [](std::span<const double> u) {
    return -(u[0] - 0.3) * (u[0] - 0.3) - 2.0 * (u[1] - 0.7) * (u[1] - 0.7);
  };
  const auto res = MaximizeBounded(f, {0.5, 0.5}, 400, 1e-6);
  CHECK(std::abs(res.best[0] - 0.3) < 1e-3);
  CHECK(std::abs(res.best[1] - 0.7) < 1e-3);
  auto edge = [](std::span<const double> u) { return u[0]; };
  const auto e = MaximizeBounded(edge, {0.5}, 400, 1e-6);
  CHECK(e.best[0] <= 1.0);
  CHECK(e.best[0] > 1.0 - 1e-3);
}

TEST_CASE("models without free nonlinear parameters need one evaluation") {
  const auto data = SmallBird(20, 3);
  const auto afm = ParseModel("logitdec(Anon.Student.Id, w=0.8) + intercept(Problem.Name) + lineafm(KC..Default.)");
  const auto fit = FitModel(afm, data.students, data.schema);
  CHECK(fit.outer_evals == 1);
  CHECK(fit.converged);
  CHECK(fit.nl_params.values[0] == std::vector<double>{0.8});
  CHECK(fit.log_likelihood >= fit.null_log_likelihood);
  CHECK(fit.n_trials == data.NumTrials());
  CHECK(fit.coefficients.size() == fit.layout.NumColumns());
}

TEST_CASE("outer search keeps pinned values and improves monotonically") {
  const auto data = SmallBird(20, 4);
  const auto spec = ParseModel(
      "logitdec(Anon.Student.Id) + intercept(Problem.Name) + lineafm(KC..Default.) + "
      "ppe(KC..Default., x=0.6, c=0.1)");
  SearchConfig config;
  config.restarts = 1;
  config.max_evals_per_restart = 60;
  const auto fit = FitModel(spec, data.students, data.schema, config);
  CHECK(fit.nl_params.values[3][0] == 0.6);
  CHECK(fit.nl_params.values[3][1] == 0.1);
  REQUIRE_FALSE(fit.outer_trace.empty());
  CHECK(static_cast<int>(fit.outer_trace.size()) == fit.outer_evals);
  for (std::size_t i = 1; i < fit.outer_trace.size(); ++i) CHECK(fit.outer_trace[i] >= fit.outer_trace[i - 1]);
  CHECK(fit.objective == fit.outer_trace.back());
  CHECK(fit.log_likelihood >= fit.null_log_likelihood);
}

TEST_CASE("fits are deterministic and seeds agree on the optimum") {
  const auto data = SmallBird(20, 5);
  const auto spec = ParseModel(
      "logitdec(Anon.Student.Id) + intercept(Problem.Name) + "
      "lineafm(KC..Default.%Comparison%Same) + lineafm(KC..Default.%Comparison%Different) + "
      "ppe(KC..Default.)");
  std::vector<double> lls;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SearchConfig config;
    config.seed = seed;
    const auto fit = FitModel(spec, data.students, data.schema, config);
    lls.push_back(fit.log_likelihood);
    if (seed == 1) {
      const auto again = FitModel(spec, data.students, data.schema, config);
      CHECK(again.coefficients == fit.coefficients);
      CHECK(again.nl_params == fit.nl_params);
    }
  }
  CHECK(std::abs(lls[0] - lls[1]) < 1e-4 * std::abs(lls[0]));
  CHECK(std::abs(lls[0] - lls[2]) < 1e-4 * std::abs(lls[0]));
}

TEST_CASE("predictions reproduce the fitted linear predictor") {
  const auto data = SmallBird(10, 6);
  const auto spec = ParseModel("intercept(Problem.Name) + lineafm(KC..Default.) + recency(KC..Default., d=0.5)");
  const auto fit = FitModel(spec, data.students, data.schema);
  const auto pred = Predict(fit, data.students);
  REQUIRE(pred.p.size() == data.NumTrials());
  const auto design = BuildDesignMatrix(spec, fit.layout, data.students, fit.nl_params);
  double ll = 0.0;
  for (std::size_t r = 0; r < design.NumRows(); ++r) {
    CHECK(pred.p[r] == doctest::Approx(Sigmoid(design.Dot(r, fit.coefficients))).epsilon(1e-14));
    ll += pred.y[r] ? std::log(pred.p[r]) : std::log1p(-pred.p[r]);
  }
  CHECK(ll == doctest::Approx(fit.log_likelihood).epsilon(1e-10));
}

TEST_CASE("all-success outcomes stay finite under the ridge") {
  std::vector<std::vector<double>> x(50, {1.0});
  const auto res = FitInner(Dense(x, std::vector<double>(50, 1.0)));
  CHECK(std::isfinite(res.beta[0]));
  CHECK(res.converged);
  CHECK_FALSE(res.separation);
  CHECK(Sigmoid(res.beta[0]) > 0.999);
}
