#include "lktseq/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "lktseq/error.hpp"

namespace lktseq {

double LogitdecState::Value() const { return std::log(s / f); }

namespace {

double SplitCount(const SequenceContext& ctx, std::optional<ComparisonTag> split,
                  int outcome /* -1 = both */) {
  if (!split) {
    if (outcome < 0) return static_cast<double>(ctx.prior_count);
    return static_cast<double>(outcome ? ctx.prior_successes : ctx.prior_failures);
  }
  const auto& by_outcome = ctx.prior_by_tag[static_cast<std::size_t>(*split)];
  if (outcome < 0) return static_cast<double>(by_outcome[0] + by_outcome[1]);
  return static_cast<double>(by_outcome[outcome]);
}

double ContextValue(const Term& term, const std::vector<double>& p,
                    const SequenceContext& ctx) {
  switch (term.feature) {
    case Feature::kLineafm: return FeatLineafm(ctx, term.split);
    case Feature::kLinesuc: return FeatLinesuc(ctx, term.split);
    case Feature::kLinefail: return FeatLinefail(ctx, term.split);
    case Feature::kRecency: return FeatRecency(ctx, {p[0]});
    case Feature::kPpe: return FeatPpe(ctx, {p[0], p[1], p[2], p[3]});
    case Feature::kBase4: return FeatBase4(ctx, {p[0], p[1], p[2], p[3]});
    default: return 0.0;
  }
}

// Terms whose value comes from a SequenceContext (everything except
// intercepts and logitdec).
bool UsesContext(Feature f) {
  return f != Feature::kIntercept && f != Feature::kLogitdec;
}

std::size_t ComponentSlot(Component c) { return static_cast<std::size_t>(c); }

std::vector<std::unordered_map<std::string, std::uint32_t>> LevelIndex(
    const ModelSpec& spec, const ColumnLayout& layout) {
  std::vector<std::unordered_map<std::string, std::uint32_t>> index(spec.terms.size());
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const auto& levels = layout.levels[i];
    for (std::uint32_t k = 0; k < levels.size(); ++k) index[i].emplace(levels[k], k);
  }
  return index;
}

void CheckParams(const ModelSpec& spec, const ColumnLayout& layout, const NlParams& params) {
  if (layout.levels.size() != spec.terms.size() || params.values.size() != spec.terms.size()) {
    throw Error(ErrorKind::kInvalidArgument, "parameters do not match the model terms");
  }
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    if (params.values[i].size() != ParamsOf(spec.terms[i].feature).size()) {
      throw Error(ErrorKind::kInvalidArgument,
                  std::string("wrong parameter count for ") + FeatureName(spec.terms[i].feature));
    }
  }
}

}  // namespace

double FeatLineafm(const SequenceContext& ctx, std::optional<ComparisonTag> split) {
  return SplitCount(ctx, split, -1);
}

double FeatLinesuc(const SequenceContext& ctx, std::optional<ComparisonTag> split) {
  return SplitCount(ctx, split, 1);
}

double FeatLinefail(const SequenceContext& ctx, std::optional<ComparisonTag> split) {
  return SplitCount(ctx, split, 0);
}

double FeatLogitdec(std::span<const int> history, double w) {
  LogitdecState state{w};
  for (int y : history) state.Update(y);
  return state.Value();
}

double FeatRecency(const SequenceContext& ctx, const RecencyParams& params) {
  if (ctx.ages.empty()) return 0.0;
  const double t = std::max(ctx.ages.back(), kMinAge);
  return std::pow(t, -params.d);
}

double FeatPpe(const SequenceContext& ctx, const PpeParams& params) {
  const std::size_t n = ctx.ages.size();
  if (n == 0) return 0.0;
  double weight_sum = 0.0;
  double weighted_age = 0.0;
  for (double age : ctx.ages) {
    const double t = std::max(age, kMinAge);
    const double w = std::pow(t, -params.x);
    weight_sum += w;
    weighted_age += w * t;
  }
  const double model_time = weighted_age / weight_sum;
  double stability = 0.0;
  if (n >= 2) {
    for (double lag : ctx.lags) stability += 1.0 / std::log(lag + std::numbers::e);
    stability /= static_cast<double>(n - 1);
  }
  const double decay = params.b + params.m * stability;
  return std::pow(static_cast<double>(n), params.c) * std::pow(model_time, -decay);
}

double FeatBase4(const SequenceContext& ctx, const Base4Params& params) {
  const std::size_t n = ctx.ages.size();
  if (n == 0) return 0.0;
  const double first_age = std::max(ctx.ages.front(), kMinAge);
  double mean_lag = 0.0;
  if (!ctx.lags.empty()) {
    for (double lag : ctx.lags) mean_lag += lag;
    mean_lag /= static_cast<double>(ctx.lags.size());
  }
  return std::pow(mean_lag + params.s0, params.x) *
         std::pow(static_cast<double>(n), params.c) * std::pow(first_age, -params.d);
}

NlParams InitialParams(const ModelSpec& spec) {
  NlParams out;
  out.values.reserve(spec.terms.size());
  for (const auto& term : spec.terms) {
    std::vector<double> v;
    for (const auto& info : ParamsOf(term.feature)) {
      auto it = term.fixed_params.find(info.name);
      v.push_back(it != term.fixed_params.end() ? it->second : info.initial);
    }
    out.values.push_back(std::move(v));
  }
  return out;
}

std::string TermLabel(const Term& term, const ColumnSchema& schema) {
  Term bare = term;
  bare.fixed_params.clear();
  return RenderTerm(bare, schema);
}

ColumnLayout MakeLayout(const ModelSpec& spec, std::span<const StudentTrials> students,
                        const ColumnSchema& schema) {
  ColumnLayout layout;
  for (const auto& term : spec.terms) {
    layout.offsets.push_back(layout.names.size());
    const auto label = TermLabel(term, schema);
    std::vector<std::string> levels;
    if (term.per_level) {
      std::set<std::string> seen;
      for (const auto& s : students) {
        for (const auto& t : s.trials) seen.insert(LevelOf(t, term.component));
      }
      levels.assign(seen.begin(), seen.end());
      for (const auto& level : levels) layout.names.push_back(label + "#" + level);
    } else {
      layout.names.push_back(label);
    }
    layout.levels.push_back(std::move(levels));
  }
  return layout;
}

double DesignMatrix::Dot(std::size_t row, std::span<const double> beta) const {
  double eta = 0.0;
  for (auto k = row_ptr[row]; k < row_ptr[row + 1]; ++k) eta += val[k] * beta[col[k]];
  return eta;
}

std::vector<double> DesignMatrix::DenseRow(std::size_t row) const {
  std::vector<double> out(NumCols(), 0.0);
  for (auto k = row_ptr[row]; k < row_ptr[row + 1]; ++k) out[col[k]] = val[k];
  return out;
}

std::vector<std::string> DesignMatrix::EmptyColumns() const {
  std::vector<bool> used(NumCols(), false);
  for (auto c : col) used[c] = true;
  std::vector<std::string> out;
  for (std::size_t j = 0; j < NumCols(); ++j) {
    if (!used[j]) out.push_back(columns[j]);
  }
  return out;
}

FeatureStream::FeatureStream(const ModelSpec& spec, const ColumnLayout& layout,
                             const NlParams& params, const ContextOptions& options)
    : spec_(&spec),
      layout_(&layout),
      params_(&params),
      options_(options),
      logitdec_(spec.terms.size()),
      level_index_(LevelIndex(spec, layout)) {
  CheckParams(spec, layout, params);
  for (auto c : {Component::kStudent, Component::kItem, Component::kKc}) {
    builders_.emplace_back(c, options);
  }
}

void FeatureStream::Row(const TrialRecord& next,
                        std::vector<std::pair<std::uint32_t, double>>& out) const {
  std::optional<SequenceContext> ctx[3];
  for (std::size_t i = 0; i < spec_->terms.size(); ++i) {
    const auto& term = spec_->terms[i];
    const auto offset = static_cast<std::uint32_t>(layout_->offsets[i]);
    const auto& level = LevelOf(next, term.component);
    std::optional<std::uint32_t> level_col;
    if (term.per_level) {
      auto it = level_index_[i].find(level);
      if (it == level_index_[i].end()) continue;
      level_col = offset + it->second;
    }
    double value = 0.0;
    if (term.feature == Feature::kIntercept) {
      value = 1.0;
    } else if (term.feature == Feature::kLogitdec) {
      auto it = logitdec_[i].find(level);
      value = it == logitdec_[i].end() ? 0.0 : it->second.Value();
    } else {
      auto& c = ctx[ComponentSlot(term.component)];
      if (!c) c = builders_[ComponentSlot(term.component)].Peek(next);
      value = ContextValue(term, params_->values[i], *c);
    }
    if (value != 0.0) out.emplace_back(level_col.value_or(offset), value);
  }
}

void FeatureStream::Commit(const TrialRecord& trial) {
  for (auto& b : builders_) b.Commit(trial);
  if (!options_.Updates(trial.phase)) return;
  for (std::size_t i = 0; i < spec_->terms.size(); ++i) {
    const auto& term = spec_->terms[i];
    if (term.feature != Feature::kLogitdec) continue;
    auto [it, inserted] = logitdec_[i].try_emplace(LevelOf(trial, term.component));
    if (inserted) it->second.w = params_->values[i][0];
    it->second.Update(trial.outcome);
  }
}

DesignBuilder::DesignBuilder(const ModelSpec& spec, ColumnLayout layout,
                             std::span<const StudentTrials> students,
                             const ContextOptions& options)
    : spec_(spec), layout_(std::move(layout)), options_(options) {
  bool needs[3] = {false, false, false};
  for (const auto& term : spec_.terms) {
    if (UsesContext(term.feature)) needs[ComponentSlot(term.component)] = true;
  }
  const auto level_index = LevelIndex(spec_, layout_);

  for (std::uint32_t s = 0; s < students.size(); ++s) {
    student_begin_.push_back(trials_.size());
    const auto& trials = students[s].trials;
    std::int64_t base[3] = {-1, -1, -1};
    for (std::size_t c = 0; c < 3; ++c) {
      if (!needs[c]) continue;
      base[c] = static_cast<std::int64_t>(contexts_.size());
      auto ctx = BuildContext(trials, static_cast<Component>(c), options_);
      std::move(ctx.begin(), ctx.end(), std::back_inserter(contexts_));
    }
    for (std::uint32_t t = 0; t < trials.size(); ++t) {
      PreparedTrial p;
      p.trial = &trials[t];
      p.ref = {s, t};
      for (std::size_t c = 0; c < 3; ++c) p.ctx[c] = base[c] < 0 ? -1 : base[c] + t;
      p.level_col.resize(spec_.terms.size(), -1);
      for (std::size_t i = 0; i < spec_.terms.size(); ++i) {
        const auto& term = spec_.terms[i];
        if (!term.per_level) {
          p.level_col[i] = static_cast<std::int32_t>(layout_.offsets[i]);
          continue;
        }
        auto it = level_index[i].find(LevelOf(trials[t], term.component));
        if (it != level_index[i].end()) {
          p.level_col[i] = static_cast<std::int32_t>(layout_.offsets[i] + it->second);
        }
      }
      trials_.push_back(std::move(p));
    }
  }
  student_begin_.push_back(trials_.size());
}

DesignMatrix DesignBuilder::Build(const NlParams& params) const {
  CheckParams(spec_, layout_, params);
  DesignMatrix m;
  m.columns = layout_.names;
  m.y.reserve(trials_.size());
  m.rows.reserve(trials_.size());
  m.row_ptr.reserve(trials_.size() + 1);

  std::vector<std::size_t> logitdec_terms;
  for (std::size_t i = 0; i < spec_.terms.size(); ++i) {
    if (spec_.terms[i].feature == Feature::kLogitdec) logitdec_terms.push_back(i);
  }
  std::vector<std::unordered_map<std::string, LogitdecState>> states(spec_.terms.size());

  for (std::size_t s = 0; s + 1 < student_begin_.size(); ++s) {
    for (auto i : logitdec_terms) states[i].clear();
    for (auto k = student_begin_[s]; k < student_begin_[s + 1]; ++k) {
      const auto& p = trials_[k];
      const auto& trial = *p.trial;
      for (std::size_t i = 0; i < spec_.terms.size(); ++i) {
        if (p.level_col[i] < 0) continue;
        const auto& term = spec_.terms[i];
        double value = 0.0;
        if (term.feature == Feature::kIntercept) {
          value = 1.0;
        } else if (term.feature == Feature::kLogitdec) {
          auto it = states[i].find(LevelOf(trial, term.component));
          value = it == states[i].end() ? 0.0 : it->second.Value();
        } else {
          value = ContextValue(term, params.values[i],
                               contexts_[static_cast<std::size_t>(p.ctx[ComponentSlot(term.component)])]);
        }
        if (value != 0.0) {
          m.col.push_back(static_cast<std::uint32_t>(p.level_col[i]));
          m.val.push_back(value);
        }
      }
      m.row_ptr.push_back(m.col.size());
      m.y.push_back(trial.outcome ? 1.0 : 0.0);
      m.rows.push_back(p.ref);

      if (options_.Updates(trial.phase)) {
        for (auto i : logitdec_terms) {
          auto [it, inserted] = states[i].try_emplace(LevelOf(trial, spec_.terms[i].component));
          if (inserted) it->second.w = params.values[i][0];
          it->second.Update(trial.outcome);
        }
      }
    }
  }
  return m;
}

DesignMatrix BuildDesignMatrix(const ModelSpec& spec, const ColumnLayout& layout,
                               std::span<const StudentTrials> students,
                               const NlParams& params, const ContextOptions& options) {
  return DesignBuilder(spec, layout, students, options).Build(params);
}

}  // namespace lktseq
