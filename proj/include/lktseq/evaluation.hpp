#pragma once

// Student-stratified repeated cross-validation and fit metrics.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lktseq/estimator.hpp"
#include "lktseq/model.hpp"
#include "lktseq/trials.hpp"

namespace lktseq {

struct CvPlan {
  int n_folds = 5;
  int n_repeats = 10;
  std::uint64_t seed = 1;
};

/// fold index per student, per repeat: result[repeat][student].
std::vector<std::vector<int>> MakeFolds(std::span<const std::string> students,
                                        const CvPlan& plan);

// Metrics return nullopt where the value is undefined.

/// McFadden R^2 against a constant `null_rate` predictor.
std::optional<double> MetricR2(std::span<const double> p, std::span<const double> y,
                               double null_rate);
std::optional<double> MetricAuc(std::span<const double> p, std::span<const double> y);
std::optional<double> MetricRmse(std::span<const double> p, std::span<const double> y);

std::optional<double> Pearson(std::span<const double> a, std::span<const double> b);

struct GroupRow {
  std::vector<std::string> key;
  std::size_t n = 0;
  double mean_prediction = 0.0;
  double mean_observed = 0.0;
};

struct GroupedCorrelationResult {
  std::optional<double> r;
  std::vector<GroupRow> table;  // sorted by key
};

/// Pearson correlation of per-group mean prediction against per-group mean
/// outcome over the rows with `include[i]` set. Needs at least 3 groups.
GroupedCorrelationResult GroupedCorrelation(std::span<const double> p,
                                            std::span<const double> y,
                                            std::span<const std::vector<std::string>> keys,
                                            std::span<const std::uint8_t> include);

/// A named row filter plus grouping key. Column names resolve against the
/// dataset's header names, the logical names (student, item, kc, phase,
/// category, block_size) and the derived `repetition`: 1 + earlier trials
/// of the same item in the same phase. Rows with an empty key value are left
/// out of the grouping.
struct GroupSpec {
  std::string name;
  std::vector<std::pair<std::string, std::string>> filter;  // column = value
  std::vector<std::string> keys;
};

/// Parses "Col=value,Col2=value2".
std::vector<std::pair<std::string, std::string>> ParseFilter(std::string_view text);

/// r1 (learning by block size and repetition), r2 (posttest by block size and
/// the novelty column when present), r3 (r2 restricted by `r3_filter`, only
/// when one is given).
std::vector<GroupSpec> DefaultGroupings(const Dataset& dataset,
                                        std::string_view novelty_column = "Novel",
                                        std::string_view r3_filter = {});

/// Column values of every trial, in dataset order; throws on unknown names.
class ColumnResolver {
 public:
  explicit ColumnResolver(const Dataset& dataset);
  std::string Value(const TrialRecord& trial, std::string_view column) const;
  void Validate(std::string_view column) const;

 private:
  const Dataset* dataset_;
  std::vector<std::vector<int>> repetition_;  // per student, per trial
  std::map<std::string, std::size_t, std::less<>> student_index_;
};

struct FoldRecord {
  int repeat = 0;
  int fold = 0;
  bool failed = false;
  std::string error;
  std::size_t train_students = 0;
  std::size_t test_students = 0;
  std::size_t test_trials = 0;
  std::optional<double> r2_mcfadden;
  std::optional<double> auc;
  std::optional<double> rmse;
  std::vector<std::optional<double>> correlations;  // per grouping
  double train_log_likelihood = 0.0;
  bool converged = false;
  NlParams nl_params;
};

struct MetricMean {
  std::optional<double> mean;
  std::size_t defined = 0;
  std::size_t undefined = 0;
};

struct CvReport {
  std::string name;
  std::string formula;
  CvPlan plan;
  std::vector<GroupSpec> groupings;
  std::vector<FoldRecord> folds;
  std::size_t failed_folds = 0;
  MetricMean r2_mcfadden;
  MetricMean auc;
  MetricMean rmse;
  std::vector<MetricMean> correlations;  // per grouping
  // Test predictions pooled over every fold and repeat, per grouping.
  std::vector<std::vector<GroupRow>> group_tables;
};

struct CvOptions {
  CvPlan plan;
  SearchConfig search;
  std::vector<GroupSpec> groupings;
  int jobs = 1;
};

CvReport RunCv(const ModelSpec& spec, const Dataset& dataset, const CvOptions& options);

/// The students of `dataset` whose fold in `assignment` is (or is not) `fold`.
std::vector<StudentTrials> SelectStudents(const Dataset& dataset,
                                          const std::vector<int>& assignment, int fold,
                                          bool in_fold);

}  // namespace lktseq
