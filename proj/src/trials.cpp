#include "lktseq/trials.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "lktseq/error.hpp"
#include "text.hpp"

namespace lktseq {

const char* PhaseName(Phase phase) {
  switch (phase) {
    case Phase::kPretest: return "pretest";
    case Phase::kLearning: return "learning";
    case Phase::kPosttest: return "posttest";
  }
  return "learning";
}

std::optional<Phase> ParsePhase(std::string_view text) {
  const auto lower = text::ToLower(text::Trim(text));
  if (lower == "pretest") return Phase::kPretest;
  if (lower == "learning") return Phase::kLearning;
  if (lower == "posttest") return Phase::kPosttest;
  return std::nullopt;
}

const char* ComparisonTagName(ComparisonTag tag) {
  switch (tag) {
    case ComparisonTag::kNone: return "None";
    case ComparisonTag::kSame: return "Same";
    case ComparisonTag::kDifferent: return "Different";
  }
  return "None";
}

const std::string& LevelOf(const TrialRecord& trial, Component component) {
  switch (component) {
    case Component::kStudent: return trial.student_id;
    case Component::kItem: return trial.item_id;
    case Component::kKc: return trial.kc_id;
  }
  return trial.kc_id;
}

const std::string& ColumnSchema::NameOf(Component component) const {
  switch (component) {
    case Component::kStudent: return student;
    case Component::kItem: return item;
    case Component::kKc: return kc;
  }
  return kc;
}

std::optional<Component> ColumnSchema::ComponentFor(std::string_view name) const {
  if (name == student) return Component::kStudent;
  if (name == item) return Component::kItem;
  if (name == kc) return Component::kKc;
  return std::nullopt;
}

std::size_t Dataset::NumTrials() const {
  std::size_t n = 0;
  for (const auto& s : students) n += s.trials.size();
  return n;
}

std::optional<std::size_t> Dataset::ExtraIndex(std::string_view name) const {
  for (std::size_t i = 0; i < extra_columns.size(); ++i) {
    if (extra_columns[i] == name) return i;
  }
  return std::nullopt;
}

bool ContextOptions::Updates(Phase phase) const {
  switch (phase) {
    case Phase::kPretest: return pretest_updates;
    case Phase::kLearning: return learning_updates;
    case Phase::kPosttest: return posttest_updates;
  }
  return true;
}

namespace {

std::vector<StudentTrials> GroupByStudent(std::vector<TrialRecord> records) {
  std::map<std::string, std::vector<TrialRecord>> grouped;
  for (auto& r : records) grouped[r.student_id].push_back(std::move(r));
  std::vector<StudentTrials> students;
  students.reserve(grouped.size());
  for (auto& [id, trials] : grouped) {
    for (std::size_t i = 0; i < trials.size(); ++i) trials[i].sequence_index = i;
    students.push_back({id, std::move(trials)});
  }
  return students;
}

std::optional<int> ParseOutcome(std::string_view field) {
  const auto lower = text::ToLower(text::Trim(field));
  if (lower == "1" || lower == "correct") return 1;
  if (lower == "0" || lower == "incorrect") return 0;
  return std::nullopt;
}

struct ColumnIndex {
  std::size_t student, item, kc, outcome;
  std::optional<std::size_t> time, phase, category, block_size;
};

std::optional<std::size_t> Find(const std::vector<std::string>& header,
                                const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

std::size_t Require(const std::vector<std::string>& header,
                    const std::string& name, const char* role) {
  auto idx = Find(header, name);
  if (!idx) {
    throw Error(ErrorKind::kSchema, "missing column '" + name + "' (mapped as " +
                                        role + ")");
  }
  return *idx;
}

// Optional logical columns fall back to defaults only when the user left the
// default header name in place; an explicit mapping must resolve.
std::optional<std::size_t> Optional(const std::vector<std::string>& header,
                                    const std::string& name,
                                    const std::string& default_name,
                                    const char* role) {
  auto idx = Find(header, name);
  if (!idx && name != default_name) {
    throw Error(ErrorKind::kSchema, "missing column '" + name + "' (mapped as " +
                                        role + ")");
  }
  return idx;
}

}  // namespace

Dataset MakeDataset(std::vector<TrialRecord> records, ColumnSchema schema,
                    std::vector<std::string> extra_columns) {
  Dataset ds;
  ds.schema = std::move(schema);
  ds.extra_columns = std::move(extra_columns);
  ds.students = GroupByStudent(std::move(records));
  return ds;
}

LoadResult LoadTrials(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open data file '" + path + "'");
  return LoadTrials(in, schema);
}

LoadResult LoadTrials(std::istream& in, const ColumnSchema& schema) {
  LoadResult result;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kSchema, "empty data file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const char delim = text::DetectDelimiter(line);
  std::vector<std::string> header;
  for (auto& h : text::SplitRecord(line, delim)) header.emplace_back(text::Trim(h));

  const ColumnSchema defaults;
  ColumnIndex col{
      Require(header, schema.student, "student"),
      Require(header, schema.item, "item"),
      Require(header, schema.kc, "kc"),
      Require(header, schema.outcome, "outcome"),
      Optional(header, schema.time, defaults.time, "time"),
      Optional(header, schema.phase, defaults.phase, "phase"),
      Optional(header, schema.category, defaults.category, "category"),
      Optional(header, schema.block_size, defaults.block_size, "block_size"),
  };

  std::vector<std::size_t> extra_idx;
  std::vector<std::string> extra_names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const bool mapped =
        i == col.student || i == col.item || i == col.kc || i == col.outcome ||
        i == col.time || i == col.phase || i == col.category || i == col.block_size;
    if (!mapped) {
      extra_idx.push_back(i);
      extra_names.push_back(header[i]);
    }
  }

  std::vector<TrialRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::Trim(line).empty()) continue;
    ++result.report.rows_read;
    auto fields = text::SplitRecord(line, delim);
    if (fields.size() != header.size()) {
      throw RowError(row, "expected " + std::to_string(header.size()) +
                              " fields, found " + std::to_string(fields.size()));
    }

    TrialRecord r;
    r.source_row = row;
    r.student_id = std::string(text::Trim(fields[col.student]));
    r.item_id = std::string(text::Trim(fields[col.item]));
    r.kc_id = std::string(text::Trim(fields[col.kc]));
    if (r.student_id.empty()) throw RowError(row, "empty student id");

    const auto outcome_text = text::Trim(fields[col.outcome]);
    if (outcome_text.empty()) {
      result.report.dropped.push_back({row, "missing outcome"});
      continue;
    }
    auto outcome = ParseOutcome(outcome_text);
    if (!outcome) {
      throw RowError(row, "unparseable outcome '" + std::string(outcome_text) + "'");
    }
    r.outcome = *outcome;

    if (col.time) {
      auto t = text::ParseDouble(fields[*col.time]);
      if (!t || !std::isfinite(*t) || *t < 0.0) {
        throw RowError(row, "invalid time '" + fields[*col.time] + "'");
      }
      r.time = *t;
    }
    if (col.phase && !text::Trim(fields[*col.phase]).empty()) {
      auto p = ParsePhase(fields[*col.phase]);
      if (!p) throw RowError(row, "unknown phase '" + fields[*col.phase] + "'");
      r.phase = *p;
    }
    if (col.category) r.category = std::string(text::Trim(fields[*col.category]));
    if (r.category.empty()) r.category = r.kc_id;
    if (col.block_size && !text::Trim(fields[*col.block_size]).empty()) {
      auto b = text::ParseInt(fields[*col.block_size]);
      if (!b || *b <= 0) {
        throw RowError(row, "invalid block size '" + fields[*col.block_size] + "'");
      }
      r.block_size = static_cast<int>(*b);
    }
    r.extra.reserve(extra_idx.size());
    for (auto i : extra_idx) r.extra.emplace_back(text::Trim(fields[i]));
    records.push_back(std::move(r));
  }

  result.dataset = MakeDataset(std::move(records), schema, std::move(extra_names));
  for (auto& student : result.dataset.students) {
    auto& trials = student.trials;
    if (!col.time) {
      for (std::size_t i = 0; i < trials.size(); ++i) trials[i].time = static_cast<double>(i);
      continue;
    }
    if (schema.sort_by_time) {
      std::stable_sort(trials.begin(), trials.end(),
                       [](const TrialRecord& a, const TrialRecord& b) { return a.time < b.time; });
      for (std::size_t i = 0; i < trials.size(); ++i) trials[i].sequence_index = i;
      continue;
    }
    for (std::size_t i = 1; i < trials.size(); ++i) {
      if (trials[i].time < trials[i - 1].time) {
        throw Error(ErrorKind::kValidation,
                    "student '" + student.id + "': time decreases at row " +
                        std::to_string(trials[i].source_row));
      }
    }
  }
  return result;
}

void WriteTrials(std::ostream& out, const Dataset& dataset) {
  const auto& s = dataset.schema;
  const char d = ',';
  auto q = [d](std::string_view f) { return text::QuoteField(f, d); };
  out << q(s.student) << d << q(s.item) << d << q(s.kc) << d << q(s.outcome) << d
      << q(s.time) << d << q(s.phase) << d << q(s.category) << d << q(s.block_size);
  for (const auto& name : dataset.extra_columns) out << d << q(name);
  out << '\n';
  for (const auto& student : dataset.students) {
    for (const auto& t : student.trials) {
      out << q(t.student_id) << d << q(t.item_id) << d << q(t.kc_id) << d << t.outcome
          << d << text::FormatDouble(t.time) << d << PhaseName(t.phase) << d
          << q(t.category) << d;
      if (t.block_size) out << *t.block_size;
      for (const auto& v : t.extra) out << d << q(v);
      out << '\n';
    }
  }
}

ContextBuilder::ContextBuilder(Component component, ContextOptions options)
    : component_(component), options_(options) {}

ComparisonTag ContextBuilder::TagFor(const TrialRecord& trial) const {
  if (!last_category_) return ComparisonTag::kNone;
  return *last_category_ == trial.category ? ComparisonTag::kSame
                                           : ComparisonTag::kDifferent;
}

SequenceContext ContextBuilder::Peek(const TrialRecord& next) const {
  SequenceContext ctx;
  ctx.comparison_tag = TagFor(next);
  auto it = levels_.find(LevelOf(next, component_));
  if (it == levels_.end()) return ctx;
  const auto& h = it->second;
  ctx.prior_count = h.times.size();
  ctx.prior_successes = h.successes;
  ctx.prior_failures = h.failures;
  ctx.prior_by_tag = h.by_tag;
  ctx.ages.reserve(h.times.size());
  for (double t : h.times) ctx.ages.push_back(next.time - t);
  if (h.times.size() > 1) {
    ctx.lags.reserve(h.times.size() - 1);
    for (std::size_t i = 1; i < h.times.size(); ++i) {
      ctx.lags.push_back(h.times[i] - h.times[i - 1]);
    }
  }
  return ctx;
}

void ContextBuilder::Commit(const TrialRecord& trial) {
  const auto tag = TagFor(trial);
  if (options_.Updates(trial.phase)) {
    auto& h = levels_[LevelOf(trial, component_)];
    h.times.push_back(trial.time);
    const int y = trial.outcome != 0 ? 1 : 0;
    ++h.by_tag[static_cast<std::size_t>(tag)][y];
    if (y) {
      ++h.successes;
    } else {
      ++h.failures;
    }
  }
  last_category_ = trial.category;
}

std::vector<SequenceContext> BuildContext(std::span<const TrialRecord> trials,
                                          Component component,
                                          const ContextOptions& options) {
  ContextBuilder builder(component, options);
  std::vector<SequenceContext> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    out.push_back(builder.Peek(t));
    builder.Commit(t);
  }
  return out;
}

}  // namespace lktseq
