#include "lktseq/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "lktseq/error.hpp"
#include "random.hpp"
#include "text.hpp"

namespace lktseq {

namespace {

double Clip(double p) { return std::clamp(p, 1e-12, 1.0 - 1e-12); }

double LogLik(std::span<const double> p, std::span<const double> y) {
  double ll = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = Clip(p[i]);
    ll += y[i] > 0.5 ? std::log(q) : std::log1p(-q);
  }
  return ll;
}

bool Degenerate(std::span<const double> y) {
  if (y.empty()) return true;
  return std::all_of(y.begin(), y.end(), [&](double v) { return (v > 0.5) == (y[0] > 0.5); });
}

struct GroupAcc {
  std::size_t n = 0;
  double sum_p = 0.0;
  double sum_y = 0.0;
};

using GroupMap = std::map<std::vector<std::string>, GroupAcc>;

std::vector<GroupRow> ToTable(const GroupMap& groups) {
  std::vector<GroupRow> table;
  for (const auto& [key, acc] : groups) {
    table.push_back({key, acc.n, acc.sum_p / static_cast<double>(acc.n),
                     acc.sum_y / static_cast<double>(acc.n)});
  }
  return table;
}

MetricMean Mean(const std::vector<std::optional<double>>& values) {
  MetricMean m;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++m.defined;
    } else {
      ++m.undefined;
    }
  }
  if (m.defined) m.mean = sum / static_cast<double>(m.defined);
  return m;
}

bool EqualsIgnoreCase(std::string_view a, std::string_view b) {
  return text::ToLower(a) == text::ToLower(b);
}

}  // namespace

std::vector<std::vector<int>> MakeFolds(std::span<const std::string> students,
                                        const CvPlan& plan) {
  if (plan.n_folds < 1 || plan.n_repeats < 1) {
    throw Error(ErrorKind::kInvalidArgument, "folds and repeats must be positive");
  }
  if (students.size() < static_cast<std::size_t>(plan.n_folds)) {
    throw Error(ErrorKind::kInvalidArgument,
                "need at least " + std::to_string(plan.n_folds) + " students for " +
                    std::to_string(plan.n_folds) + " folds, have " +
                    std::to_string(students.size()));
  }
  std::vector<std::size_t> sorted(students.size());
  std::iota(sorted.begin(), sorted.end(), 0);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) { return students[a] < students[b]; });

  std::vector<std::vector<int>> out;
  for (int r = 0; r < plan.n_repeats; ++r) {
    std::mt19937_64 gen(rng::SplitMix(plan.seed ^ rng::SplitMix(static_cast<std::uint64_t>(r) + 1)));
    auto order = sorted;
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng::Index(gen, i));
      std::swap(order[i - 1], order[j]);
    }
    std::vector<int> fold(students.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(plan.n_folds));
    }
    out.push_back(std::move(fold));
  }
  return out;
}

std::optional<double> MetricR2(std::span<const double> p, std::span<const double> y,
                               double null_rate) {
  if (Degenerate(y)) return std::nullopt;
  double null_ll = 0.0;
  const double q = Clip(null_rate);
  for (double v : y) null_ll += v > 0.5 ? std::log(q) : std::log1p(-q);
  return 1.0 - LogLik(p, y) / null_ll;
}

std::optional<double> MetricAuc(std::span<const double> p, std::span<const double> y) {
  const std::size_t n = p.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  // Sum of average 1-based ranks of the positives.
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && p[order[j]] == p[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (y[order[k]] > 0.5) {
        rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double np = static_cast<double>(positives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

std::optional<double> MetricRmse(std::span<const double> p, std::span<const double> y) {
  if (p.empty()) return std::nullopt;
  double ss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) ss += (p[i] - y[i]) * (p[i] - y[i]);
  return std::sqrt(ss / static_cast<double>(p.size()));
}

std::optional<double> Pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

GroupedCorrelationResult GroupedCorrelation(std::span<const double> p,
                                            std::span<const double> y,
                                            std::span<const std::vector<std::string>> keys,
                                            std::span<const std::uint8_t> include) {
  GroupMap groups;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!include[i]) continue;
    auto& acc = groups[keys[i]];
    ++acc.n;
    acc.sum_p += p[i];
    acc.sum_y += y[i];
  }
  GroupedCorrelationResult out;
  out.table = ToTable(groups);
  if (out.table.size() < 3) return out;
  std::vector<double> mp, my;
  for (const auto& row : out.table) {
    mp.push_back(row.mean_prediction);
    my.push_back(row.mean_observed);
  }
  out.r = Pearson(mp, my);
  return out;
}

std::vector<std::pair<std::string, std::string>> ParseFilter(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& piece : text::SplitList(text, ',')) {
    const auto eq = piece.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorKind::kInvalidArgument, "filter '" + piece + "' is not Column=value");
    }
    out.emplace_back(std::string(text::Trim(piece.substr(0, eq))),
                     std::string(text::Trim(piece.substr(eq + 1))));
  }
  return out;
}

std::vector<GroupSpec> DefaultGroupings(const Dataset& dataset,
                                        std::string_view novelty_column,
                                        std::string_view r3_filter) {
  std::vector<GroupSpec> out;
  out.push_back({"r1", {{"phase", "learning"}}, {"block_size", "repetition"}});
  GroupSpec r2{"r2", {{"phase", "posttest"}}, {"block_size"}};
  if (!novelty_column.empty() && dataset.ExtraIndex(novelty_column)) {
    r2.keys.emplace_back(novelty_column);
  }
  out.push_back(r2);
  if (!r3_filter.empty()) {
    GroupSpec r3 = r2;
    r3.name = "r3";
    for (auto& f : ParseFilter(r3_filter)) r3.filter.push_back(std::move(f));
    out.push_back(std::move(r3));
  }
  return out;
}

ColumnResolver::ColumnResolver(const Dataset& dataset) : dataset_(&dataset) {
  for (const auto& s : dataset.students) {
    student_index_.emplace(s.id, repetition_.size());
    std::map<std::pair<std::string, Phase>, int> seen;
    std::vector<int> rep;
    rep.reserve(s.trials.size());
    for (const auto& t : s.trials) rep.push_back(++seen[{t.item_id, t.phase}]);
    repetition_.push_back(std::move(rep));
  }
}

void ColumnResolver::Validate(std::string_view column) const {
  const auto& s = dataset_->schema;
  static const char* kLogical[] = {"student", "item", "kc", "outcome", "time",
                                   "phase", "category", "block_size", "repetition"};
  for (const char* name : kLogical) {
    if (column == name) return;
  }
  for (const auto* name : {&s.student, &s.item, &s.kc, &s.outcome, &s.time, &s.phase,
                           &s.category, &s.block_size}) {
    if (column == *name) return;
  }
  if (dataset_->ExtraIndex(column)) return;
  throw Error(ErrorKind::kInvalidArgument, "unknown grouping column '" + std::string(column) + "'");
}

std::string ColumnResolver::Value(const TrialRecord& t, std::string_view column) const {
  const auto& s = dataset_->schema;
  if (column == "student" || column == s.student) return t.student_id;
  if (column == "item" || column == s.item) return t.item_id;
  if (column == "kc" || column == s.kc) return t.kc_id;
  if (column == "outcome" || column == s.outcome) return std::to_string(t.outcome);
  if (column == "time" || column == s.time) return text::FormatDouble(t.time);
  if (column == "phase" || column == s.phase) return PhaseName(t.phase);
  if (column == "category" || column == s.category) return t.category;
  if (column == "block_size" || column == s.block_size) {
    return t.block_size ? std::to_string(*t.block_size) : std::string();
  }
  if (column == "repetition") {
    auto it = student_index_.find(t.student_id);
    if (it == student_index_.end()) return {};
    return std::to_string(repetition_[it->second][t.sequence_index]);
  }
  if (auto idx = dataset_->ExtraIndex(column)) return t.extra[*idx];
  throw Error(ErrorKind::kInvalidArgument, "unknown grouping column '" + std::string(column) + "'");
}

std::vector<StudentTrials> SelectStudents(const Dataset& dataset,
                                          const std::vector<int>& assignment, int fold,
                                          bool in_fold) {
  std::vector<StudentTrials> out;
  for (std::size_t i = 0; i < dataset.students.size(); ++i) {
    if ((assignment[i] == fold) == in_fold) out.push_back(dataset.students[i]);
  }
  return out;
}

CvReport RunCv(const ModelSpec& spec, const Dataset& dataset, const CvOptions& options) {
  CvReport report;
  report.name = spec.name;
  {
    ModelSpec unnamed = spec;
    unnamed.name.clear();
    report.formula = RenderModel(unnamed, dataset.schema);
  }
  report.plan = options.plan;
  report.groupings = options.groupings;

  std::vector<std::string> ids;
  for (const auto& s : dataset.students) ids.push_back(s.id);
  const auto folds = MakeFolds(ids, options.plan);

  // Group keys and filters are fixed per trial; compute them once.
  const ColumnResolver resolver(dataset);
  const std::size_t n_groupings = options.groupings.size();
  for (const auto& g : options.groupings) {
    for (const auto& [col, value] : g.filter) resolver.Validate(col);
    for (const auto& col : g.keys) resolver.Validate(col);
  }
  // keys[g][student][trial], include[g][student][trial]
  std::vector<std::vector<std::vector<std::vector<std::string>>>> keys(n_groupings);
  std::vector<std::vector<std::vector<bool>>> include(n_groupings);
  for (std::size_t g = 0; g < n_groupings; ++g) {
    const auto& spec_g = options.groupings[g];
    for (const auto& s : dataset.students) {
      std::vector<std::vector<std::string>> sk;
      std::vector<bool> si;
      for (const auto& t : s.trials) {
        bool keep = true;
        for (const auto& [col, value] : spec_g.filter) {
          keep = keep && EqualsIgnoreCase(resolver.Value(t, col), value);
        }
        std::vector<std::string> key;
        for (const auto& col : spec_g.keys) {
          key.push_back(resolver.Value(t, col));
          keep = keep && !key.back().empty();
        }
        sk.push_back(std::move(key));
        si.push_back(keep);
      }
      keys[g].push_back(std::move(sk));
      include[g].push_back(std::move(si));
    }
  }

  const int n_jobs = options.plan.n_repeats * options.plan.n_folds;
  std::vector<FoldRecord> records(static_cast<std::size_t>(n_jobs));
  std::vector<std::vector<GroupMap>> pooled(static_cast<std::size_t>(n_jobs),
                                            std::vector<GroupMap>(n_groupings));

  auto run_job = [&](int job) {
    const int repeat = job / options.plan.n_folds;
    const int fold = job % options.plan.n_folds;
    auto& rec = records[static_cast<std::size_t>(job)];
    rec.repeat = repeat;
    rec.fold = fold;
    const auto& assignment = folds[static_cast<std::size_t>(repeat)];
    std::vector<std::size_t> test_index;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
      if (assignment[i] == fold) test_index.push_back(i);
    }
    const auto train = SelectStudents(dataset, assignment, fold, false);
    const auto test = SelectStudents(dataset, assignment, fold, true);
    rec.train_students = train.size();
    rec.test_students = test.size();
    try {
      const FitResult fit = FitModel(spec, train, dataset.schema, options.search);
      rec.train_log_likelihood = fit.log_likelihood;
      rec.converged = fit.converged;
      rec.nl_params = fit.nl_params;
      double train_sum = 0.0;
      std::size_t train_n = 0;
      for (const auto& s : train) {
        for (const auto& t : s.trials) {
          train_sum += t.outcome;
          ++train_n;
        }
      }
      const double null_rate = train_n ? train_sum / static_cast<double>(train_n) : 0.5;
      const Predictions pred = Predict(fit, test, options.search.context);
      rec.test_trials = pred.p.size();
      rec.r2_mcfadden = MetricR2(pred.p, pred.y, null_rate);
      rec.auc = MetricAuc(pred.p, pred.y);
      rec.rmse = MetricRmse(pred.p, pred.y);
      for (std::size_t g = 0; g < n_groupings; ++g) {
        std::vector<std::vector<std::string>> row_keys;
        std::vector<std::uint8_t> row_include;
        row_keys.reserve(pred.rows.size());
        for (const auto& ref : pred.rows) {
          const auto s = test_index[ref.student];
          row_keys.push_back(keys[g][s][ref.trial]);
          row_include.push_back(include[g][s][ref.trial]);
        }
        auto gc = GroupedCorrelation(pred.p, pred.y, row_keys, row_include);
        rec.correlations.push_back(gc.r);
        auto& acc = pooled[static_cast<std::size_t>(job)][g];
        for (std::size_t i = 0; i < pred.p.size(); ++i) {
          if (!row_include[i]) continue;
          auto& a = acc[row_keys[i]];
          ++a.n;
          a.sum_p += pred.p[i];
          a.sum_y += pred.y[i];
        }
      }
    } catch (const Error& e) {
      rec.failed = true;
      rec.error = e.what();
      rec.correlations.assign(n_groupings, std::nullopt);
    }
  };

  const int workers = std::clamp(options.jobs, 1, n_jobs);
  if (workers == 1) {
    for (int j = 0; j < n_jobs; ++j) run_job(j);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) {
      threads.emplace_back([&] {
        for (int j = next++; j < n_jobs; j = next++) run_job(j);
      });
    }
    for (auto& t : threads) t.join();
  }

  report.folds = std::move(records);
  std::vector<std::optional<double>> r2s, aucs, rmses;
  std::vector<std::vector<std::optional<double>>> corr(n_groupings);
  for (const auto& rec : report.folds) {
    if (rec.failed) {
      ++report.failed_folds;
      continue;
    }
    r2s.push_back(rec.r2_mcfadden);
    aucs.push_back(rec.auc);
    rmses.push_back(rec.rmse);
    for (std::size_t g = 0; g < n_groupings; ++g) corr[g].push_back(rec.correlations[g]);
  }
  report.r2_mcfadden = Mean(r2s);
  report.auc = Mean(aucs);
  report.rmse = Mean(rmses);
  for (std::size_t g = 0; g < n_groupings; ++g) {
    report.correlations.push_back(Mean(corr[g]));
    GroupMap merged;
    for (const auto& job_maps : pooled) {
      for (const auto& [key, acc] : job_maps[g]) {
        auto& m = merged[key];
        m.n += acc.n;
        m.sum_p += acc.sum_p;
        m.sum_y += acc.sum_y;
      }
    }
    report.group_tables.push_back(ToTable(merged));
  }
  return report;
}

}  // namespace lktseq
