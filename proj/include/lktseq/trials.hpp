#pragma once

// Trial records, trial-log ingestion, and per-trial sequence context.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace lktseq {

enum class Phase : std::uint8_t { kPretest, kLearning, kPosttest };

const char* PhaseName(Phase phase);
std::optional<Phase> ParsePhase(std::string_view text);

/// Role a data column plays as a model component.
enum class Component : std::uint8_t { kStudent, kItem, kKc };

/// Whether a trial's category matches the immediately preceding trial's.
enum class ComparisonTag : std::uint8_t { kNone = 0, kSame = 1, kDifferent = 2 };

const char* ComparisonTagName(ComparisonTag tag);

struct TrialRecord {
  std::string student_id;
  std::string item_id;
  std::string kc_id;
  int outcome = 0;  // 1 correct, 0 incorrect
  double time = 0.0;  // seconds from a per-student origin
  Phase phase = Phase::kLearning;
  std::string category;
  std::optional<int> block_size;
  std::size_t sequence_index = 0;
  // Values of Dataset::extra_columns, same order.
  std::vector<std::string> extra;
  // 1-based line in the source file; 0 for generated records.
  std::size_t source_row = 0;
};

const std::string& LevelOf(const TrialRecord& trial, Component component);

/// Logical-column to header-name mapping.
struct ColumnSchema {
  std::string student = "Anon.Student.Id";
  std::string item = "Problem.Name";
  std::string kc = "KC..Default.";
  std::string outcome = "Outcome";
  std::string time = "CF..Time";
  std::string phase = "Phase";
  std::string category = "Category";
  std::string block_size = "BlockSize";

  // Stable-sort each student's rows by time instead of rejecting
  // out-of-order times.
  bool sort_by_time = false;

  const std::string& NameOf(Component component) const;
  std::optional<Component> ComponentFor(std::string_view name) const;
};

struct StudentTrials {
  std::string id;
  std::vector<TrialRecord> trials;  // sequence_index order
};

struct Dataset {
  ColumnSchema schema;
  std::vector<std::string> extra_columns;
  std::vector<StudentTrials> students;  // sorted by id

  std::size_t NumTrials() const;
  // Index into `extra_columns`, if present.
  std::optional<std::size_t> ExtraIndex(std::string_view name) const;
};

struct DroppedRow {
  std::size_t row = 0;
  std::string reason;
};

struct LoadReport {
  std::size_t rows_read = 0;
  std::vector<DroppedRow> dropped;
};

struct LoadResult {
  Dataset dataset;
  LoadReport report;
};

/// Reads a comma- or tab-delimited trial log. The delimiter is chosen from
/// the header line. Throws Error(kSchema) for a missing required column,
/// RowError for an unparseable field, Error(kValidation) when a student's
/// times go backwards and `schema.sort_by_time` is off.
LoadResult LoadTrials(const std::string& path, const ColumnSchema& schema = {});
LoadResult LoadTrials(std::istream& in, const ColumnSchema& schema = {});

/// Writes records with the header names of `dataset.schema`, in the same
/// layout LoadTrials accepts.
void WriteTrials(std::ostream& out, const Dataset& dataset);

/// Groups records by student, sorts students by id, assigns sequence_index.
/// Records must already be in per-student chronological order.
Dataset MakeDataset(std::vector<TrialRecord> records, ColumnSchema schema = {},
                    std::vector<std::string> extra_columns = {});

/// Everything the features need to know about the history of one component
/// level (by default the KC) before a trial.
struct SequenceContext {
  std::size_t prior_count = 0;
  std::size_t prior_successes = 0;
  std::size_t prior_failures = 0;
  // Prior counts split by the earlier trial's comparison tag and outcome:
  // prior_by_tag[tag][outcome].
  std::array<std::array<std::size_t, 2>, 3> prior_by_tag{};
  // Elapsed seconds from each earlier same-level trial to now, oldest first.
  std::vector<double> ages;
  // Spacing between consecutive earlier same-level trials.
  std::vector<double> lags;
  ComparisonTag comparison_tag = ComparisonTag::kNone;
};

struct ContextOptions {
  // Phases whose trials update the feature histories. Comparison tags are
  // always taken over the full stream.
  bool pretest_updates = true;
  bool learning_updates = true;
  bool posttest_updates = true;

  bool Updates(Phase phase) const;
};

/// Incremental form of BuildContext: Peek describes the history before the
/// next trial, Commit appends that trial once its outcome is known.
class ContextBuilder {
 public:
  explicit ContextBuilder(Component component = Component::kKc,
                          ContextOptions options = {});

  SequenceContext Peek(const TrialRecord& next) const;
  void Commit(const TrialRecord& trial);

 private:
  struct LevelHistory {
    std::vector<double> times;
    std::array<std::array<std::size_t, 2>, 3> by_tag{};
    std::size_t successes = 0;
    std::size_t failures = 0;
  };

  ComparisonTag TagFor(const TrialRecord& trial) const;

  Component component_;
  ContextOptions options_;
  std::unordered_map<std::string, LevelHistory> levels_;
  std::optional<std::string> last_category_;
};

/// One SequenceContext per trial of a single student's ordered stream.
std::vector<SequenceContext> BuildContext(std::span<const TrialRecord> trials,
                                          Component component = Component::kKc,
                                          const ContextOptions& options = {});

}  // namespace lktseq
