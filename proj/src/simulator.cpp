#include "lktseq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "lktseq/error.hpp"
#include "lktseq/estimator.hpp"
#include "lktseq/features.hpp"
#include "random.hpp"
#include "text.hpp"

namespace lktseq {

namespace {

std::string Padded(int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) {
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  }
  return digits;
}

int Width(int count, int minimum) {
  return std::max(minimum, static_cast<int>(std::to_string(count).size()));
}

template <typename T>
void Shuffle(std::vector<T>& values, std::mt19937_64& gen) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[rng::Index(gen, i)]);
  }
}

void Validate(const DesignConfig& c) {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (c.n_categories < 1) fail("design: n_categories must be at least 1");
  if (c.n_exemplars < 1) fail("design: n_exemplars must be at least 1");
  if (c.n_repetitions < 1) fail("design: n_repetitions must be at least 1");
  if (c.n_students < 1) fail("design: n_students must be at least 1");
  if (c.block_sizes.empty()) fail("design: block_sizes is empty");
  for (int b : c.block_sizes) {
    if (b < 1) fail("design: block sizes must be positive");
  }
  if (!(c.inter_trial_time > 0.0)) fail("design: inter_trial_time must be positive");
  if (!(c.phase_gap >= 0.0)) fail("design: phase_gap must be nonnegative");
  if (c.novel_per_category < 0) fail("design: novel_per_category must be nonnegative");
  if (c.warmup_trials < 0) fail("design: warmup_trials must be nonnegative");
}

struct Run {
  int category;
  std::vector<int> exemplars;
};

}  // namespace

DesignConfig BirdDesign() { return DesignConfig{}; }

DesignConfig BlobDesign() {
  DesignConfig c;
  c.n_categories = 3;
  c.n_exemplars = 8;
  c.n_repetitions = 3;
  c.block_sizes = {1, 24};
  c.assignment = BlockAssignment::kBetween;
  c.novel_per_category = 8;
  c.warmup_trials = 0;
  return c;
}

Dataset GenerateSequence(const DesignConfig& config, std::vector<std::string>* warnings) {
  Validate(config);
  const int cat_width = Width(config.n_categories, 2);
  const int student_width = Width(config.n_students, 3);
  std::vector<std::string> categories;
  for (int k = 0; k < config.n_categories; ++k) {
    categories.push_back("cat" + Padded(k + 1, cat_width));
  }
  auto learned = [&](int k, int j) { return categories[k] + "_ex" + std::to_string(j + 1); };
  auto novel = [&](int k, int j) { return categories[k] + "_nov" + std::to_string(j + 1); };

  std::set<std::string> notes;
  std::vector<TrialRecord> records;
  const auto n_blocks = static_cast<int>(config.block_sizes.size());

  for (int s = 0; s < config.n_students; ++s) {
    std::mt19937_64 gen(rng::SplitMix(config.seed ^ rng::SplitMix(static_cast<std::uint64_t>(s) + 1)));
    const std::string student = "s" + Padded(s + 1, student_width);
    std::vector<int> block(static_cast<std::size_t>(config.n_categories));
    for (int k = 0; k < config.n_categories; ++k) {
      const int slot = config.assignment == BlockAssignment::kWithin ? (k + s) % n_blocks
                                                                     : s % n_blocks;
      block[k] = config.block_sizes[static_cast<std::size_t>(slot)];
    }

    double t = 0.0;
    auto emit = [&](Phase phase, std::string item, std::string kc, std::string category,
                    std::optional<int> block_size, bool is_novel) {
      TrialRecord r;
      r.student_id = student;
      r.item_id = std::move(item);
      r.kc_id = std::move(kc);
      r.category = std::move(category);
      r.phase = phase;
      r.time = t;
      r.block_size = block_size;
      r.extra = {is_novel ? "1" : "0"};
      records.push_back(std::move(r));
      t += config.inter_trial_time;
    };

    if (config.pretest) {
      std::vector<std::pair<int, int>> items;
      for (int k = 0; k < config.n_categories; ++k) {
        for (int j = 0; j < config.n_exemplars; ++j) items.emplace_back(k, j);
      }
      Shuffle(items, gen);
      for (auto [k, j] : items) {
        emit(Phase::kPretest, learned(k, j), categories[k], categories[k], block[k], false);
      }
      t += config.phase_gap;
    }

    for (int w = 0; w < config.warmup_trials; ++w) {
      emit(Phase::kLearning, "warmup_" + std::to_string(w + 1), "warmup", "warmup",
           std::nullopt, false);
    }

    // Each category's repetitions of its shuffled exemplars, cut into runs of
    // its block size.
    std::vector<std::vector<Run>> runs(static_cast<std::size_t>(config.n_categories));
    for (int k = 0; k < config.n_categories; ++k) {
      std::vector<int> stream;
      for (int r = 0; r < config.n_repetitions; ++r) {
        std::vector<int> order(static_cast<std::size_t>(config.n_exemplars));
        for (int j = 0; j < config.n_exemplars; ++j) order[j] = j;
        Shuffle(order, gen);
        stream.insert(stream.end(), order.begin(), order.end());
      }
      for (std::size_t i = 0; i < stream.size(); i += static_cast<std::size_t>(block[k])) {
        const auto end = std::min(stream.size(), i + static_cast<std::size_t>(block[k]));
        runs[k].push_back({k, std::vector<int>(stream.begin() + static_cast<long>(i),
                                               stream.begin() + static_cast<long>(end))});
      }
      std::reverse(runs[k].begin(), runs[k].end());  // pop from the back
    }

    int last = -1;
    while (true) {
      std::vector<int> active;
      for (int k = 0; k < config.n_categories; ++k) {
        if (!runs[k].empty()) active.push_back(k);
      }
      if (active.empty()) break;
      Shuffle(active, gen);
      if (active.front() == last) {
        if (active.size() > 1) {
          std::swap(active.front(), active[1 + rng::Index(gen, active.size() - 1)]);
        } else {
          notes.insert("interleaving impossible with one remaining category; runs of " +
                       categories[last] + " merged");
        }
      }
      for (int k : active) {
        Run run = std::move(runs[k].back());
        runs[k].pop_back();
        for (int j : run.exemplars) {
          emit(Phase::kLearning, learned(k, j), categories[k], categories[k], block[k], false);
        }
        last = k;
      }
    }

    if (config.posttest) {
      t += config.phase_gap;
      std::vector<std::pair<int, int>> items;  // j < 0 marks a novel exemplar
      for (int k = 0; k < config.n_categories; ++k) {
        for (int j = 0; j < config.n_exemplars; ++j) items.emplace_back(k, j);
        for (int j = 0; j < config.novel_per_category; ++j) items.emplace_back(k, -1 - j);
      }
      Shuffle(items, gen);
      for (auto [k, j] : items) {
        const bool is_novel = j < 0;
        emit(Phase::kPosttest, is_novel ? novel(k, -1 - j) : learned(k, j), categories[k],
             categories[k], block[k], is_novel);
      }
    }
  }

  if (warnings) warnings->insert(warnings->end(), notes.begin(), notes.end());
  return MakeDataset(std::move(records), ColumnSchema{}, {kNovelColumn});
}

Simulation SimulateOutcomes(Dataset skeleton, const GroundTruthLearner& truth,
                            std::uint64_t seed) {
  for (const auto& term : truth.spec.terms) {
    for (const auto& info : ParamsOf(term.feature)) {
      if (!term.fixed_params.contains(info.name)) {
        throw Error(ErrorKind::kInvalidArgument,
                    "truth term " + RenderTerm(term, skeleton.schema) + ": parameter '" +
                        info.name + "' must be given a value");
      }
    }
  }
  const ColumnLayout layout = MakeLayout(truth.spec, skeleton.students, skeleton.schema);
  const NlParams params = InitialParams(truth.spec);

  std::vector<double> beta(layout.NumColumns(), 0.0);
  std::set<std::string> used;
  std::mt19937_64 level_gen(rng::SplitMix(seed ^ 0x5EEDULL));
  std::normal_distribution<double> normal;
  for (std::size_t t = 0; t < truth.spec.terms.size(); ++t) {
    const std::string label = TermLabel(truth.spec.terms[t], skeleton.schema);
    const auto random = truth.random_levels.find(label);
    if (random != truth.random_levels.end()) used.insert(label);
    const std::size_t width = std::max<std::size_t>(1, layout.levels[t].size());
    for (std::size_t i = 0; i < width; ++i) {
      const std::size_t c = layout.offsets[t] + i;
      const std::string& name = layout.names[c];
      if (auto it = truth.coefficients.find(name); it != truth.coefficients.end()) {
        beta[c] = it->second;
        used.insert(name);
      } else if (auto wild = truth.coefficients.find(label + "#*");
                 wild != truth.coefficients.end() && !layout.levels[t].empty()) {
        beta[c] = wild->second;
        used.insert(wild->first);
      } else if (random != truth.random_levels.end()) {
        beta[c] = random->second.first + random->second.second * normal(level_gen);
      }
    }
  }
  for (const auto& [key, value] : truth.coefficients) {
    if (!used.contains(key)) {
      throw Error(ErrorKind::kInvalidArgument, "truth coefficient '" + key + "' matches no column");
    }
  }
  for (const auto& [key, value] : truth.random_levels) {
    if (!used.contains(key)) {
      throw Error(ErrorKind::kInvalidArgument, "truth random levels '" + key + "' match no term");
    }
  }

  std::size_t prob_index;
  if (auto idx = skeleton.ExtraIndex(kTrueProbColumn)) {
    prob_index = *idx;
  } else {
    prob_index = skeleton.extra_columns.size();
    skeleton.extra_columns.emplace_back(kTrueProbColumn);
    for (auto& st : skeleton.students) {
      for (auto& trial : st.trials) trial.extra.resize(skeleton.extra_columns.size());
    }
  }

  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t s = 0; s < skeleton.students.size(); ++s) {
    std::mt19937_64 gen(rng::SplitMix(seed ^ rng::SplitMix(static_cast<std::uint64_t>(s) + 1)));
    FeatureStream stream(truth.spec, layout, params);
    for (auto& trial : skeleton.students[s].trials) {
      row.clear();
      stream.Row(trial, row);
      double eta = 0.0;
      for (auto [c, v] : row) eta += beta[c] * v;
      const double p = Sigmoid(eta);
      trial.outcome = rng::Uniform(gen) < p ? 1 : 0;
      trial.extra[prob_index] = text::FormatDouble(p);
      stream.Commit(trial);
    }
  }
  return {std::move(skeleton), layout.names, std::move(beta)};
}

GroundTruthLearner DefaultTruth(const Dataset& skeleton, std::uint64_t seed) {
  const ColumnSchema& s = skeleton.schema;
  GroundTruthLearner truth;
  truth.spec = ParseModel("logitdec(" + s.student + ", w=0.8) + intercept(" + s.item +
                              ") + lineafm(" + s.kc + ") + recency(" + s.kc + ", d=0.5)",
                          s);
  truth.spec.name = "AFM+recency truth";
  const std::string item_label = TermLabel(truth.spec.terms[1], s);
  truth.coefficients[TermLabel(truth.spec.terms[0], s)] = 0.4;
  truth.coefficients[TermLabel(truth.spec.terms[2], s)] = 0.06;
  truth.coefficients[TermLabel(truth.spec.terms[3], s)] = 2.5;

  constexpr double kItemMean = -1.0;
  constexpr double kItemSd = 0.5;
  const auto novel_index = skeleton.ExtraIndex(kNovelColumn);
  std::map<std::string, bool> items;  // item -> novel
  for (const auto& st : skeleton.students) {
    for (const auto& trial : st.trials) {
      items.emplace(trial.item_id, novel_index && trial.extra[*novel_index] == "1");
    }
  }
  std::mt19937_64 gen(rng::SplitMix(seed ^ 0x17E5ULL));
  std::normal_distribution<double> normal;
  for (const auto& [item, is_novel] : items) {
    const double draw = normal(gen);
    truth.coefficients[item_label + "#" + item] = is_novel ? kItemMean : kItemMean + kItemSd * draw;
  }
  return truth;
}

}  // namespace lktseq
