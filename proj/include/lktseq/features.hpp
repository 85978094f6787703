#pragma once

// Feature columns and design-matrix assembly.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lktseq/model.hpp"
#include "lktseq/trials.hpp"

namespace lktseq {

/// Floor on every age and elapsed time, in seconds.
inline constexpr double kMinAge = 1.0;

struct RecencyParams {
  double d = 0.5;  // [0, 3]
};

/// Age weighting exponent x, practice-count exponent c, base decay b and
/// spacing-sensitivity slope m.
struct PpeParams {
  double x = 0.6;  // [0, 2]
  double c = 0.1;  // [0, 1]
  double b = 0.04; // [0, 1]
  double m = 0.08; // [0, 1]
};

struct Base4Params {
  double x = 0.5;   // spacing exponent [0, 1]
  double c = 0.5;   // practice-count exponent [0, 1]
  double d = 0.5;   // decay on first-practice age [0, 1]
  double s0 = 10.0; // spacing offset, seconds [0.1, 3600]
};

/// Exponentially decayed success and failure mass, seeded symmetric so an
/// empty history gives a zero feature.
struct LogitdecState {
  double w = 1.0;
  double s = 1.0;
  double f = 1.0;

  void Update(int outcome) {
    s = s * w + (outcome ? 1.0 : 0.0);
    f = f * w + (outcome ? 0.0 : 1.0);
  }
  double Value() const;
};

double FeatLineafm(const SequenceContext& ctx,
                   std::optional<ComparisonTag> split = std::nullopt);
double FeatLinesuc(const SequenceContext& ctx,
                   std::optional<ComparisonTag> split = std::nullopt);
double FeatLinefail(const SequenceContext& ctx,
                    std::optional<ComparisonTag> split = std::nullopt);
double FeatLogitdec(std::span<const int> history, double w);
double FeatRecency(const SequenceContext& ctx, const RecencyParams& params);
double FeatPpe(const SequenceContext& ctx, const PpeParams& params);
double FeatBase4(const SequenceContext& ctx, const Base4Params& params);

/// Nonlinear parameter values per term, in ParamsOf() order; empty for
/// linear terms.
struct NlParams {
  std::vector<std::vector<double>> values;

  bool operator==(const NlParams&) const = default;
};

/// Pinned values where the formula fixes them, search starting points
/// elsewhere.
NlParams InitialParams(const ModelSpec& spec);

/// Term text without pinned parameters; the stem of its column names.
std::string TermLabel(const Term& term, const ColumnSchema& schema);

/// Column set of a spec over a set of students: per-level terms expand to one
/// column per level, sorted lexicographically.
struct ColumnLayout {
  std::vector<std::vector<std::string>> levels;  // per term
  std::vector<std::size_t> offsets;              // first column per term
  std::vector<std::string> names;

  std::size_t NumColumns() const { return names.size(); }
};

ColumnLayout MakeLayout(const ModelSpec& spec, std::span<const StudentTrials> students,
                        const ColumnSchema& schema);

struct RowRef {
  std::uint32_t student = 0;  // index into the student span the rows came from
  std::uint32_t trial = 0;    // sequence index within that student
};

/// Sparse row-major design matrix plus outcomes.
struct DesignMatrix {
  std::vector<std::string> columns;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> val;
  std::vector<double> y;
  std::vector<RowRef> rows;

  std::size_t NumRows() const { return y.size(); }
  std::size_t NumCols() const { return columns.size(); }
  double Dot(std::size_t row, std::span<const double> beta) const;
  std::vector<double> DenseRow(std::size_t row) const;
  /// Names of columns that are zero on every row.
  std::vector<std::string> EmptyColumns() const;
};

/// Per-student streaming evaluation of a spec: Row() gives the features for
/// the next trial from committed history only.
class FeatureStream {
 public:
  FeatureStream(const ModelSpec& spec, const ColumnLayout& layout,
                const NlParams& params, const ContextOptions& options = {});

  /// Appends (column, value) pairs for `next`, skipping zeros.
  void Row(const TrialRecord& next,
           std::vector<std::pair<std::uint32_t, double>>& out) const;
  void Commit(const TrialRecord& trial);

 private:
  const ModelSpec* spec_;
  const ColumnLayout* layout_;
  const NlParams* params_;
  ContextOptions options_;
  std::vector<ContextBuilder> builders_;           // per Component
  std::vector<std::unordered_map<std::string, LogitdecState>> logitdec_;  // per term
  std::vector<std::unordered_map<std::string, std::uint32_t>> level_index_;
};

/// Caches the parameter-free sequence context of every trial so a design can
/// be rebuilt cheaply for each candidate set of nonlinear parameters.
class DesignBuilder {
 public:
  DesignBuilder(const ModelSpec& spec, ColumnLayout layout,
                std::span<const StudentTrials> students,
                const ContextOptions& options = {});

  DesignMatrix Build(const NlParams& params) const;
  const ColumnLayout& layout() const { return layout_; }

 private:
  struct PreparedTrial {
    const TrialRecord* trial;
    RowRef ref;
    // Index into contexts_ per Component, or -1 when unused.
    std::int64_t ctx[3];
    // Column index of the trial's level per term, -1 when absent.
    std::vector<std::int32_t> level_col;
  };

  ModelSpec spec_;
  ColumnLayout layout_;
  ContextOptions options_;
  std::vector<SequenceContext> contexts_;
  std::vector<PreparedTrial> trials_;
  std::vector<std::size_t> student_begin_;  // trials_ offsets per student
};

DesignMatrix BuildDesignMatrix(const ModelSpec& spec, const ColumnLayout& layout,
                               std::span<const StudentTrials> students,
                               const NlParams& params,
                               const ContextOptions& options = {});

}  // namespace lktseq
