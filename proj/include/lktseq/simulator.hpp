#pragma once

// Synthetic category-learning trial streams with a logistic ground-truth
// learner.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lktseq/model.hpp"
#include "lktseq/trials.hpp"

namespace lktseq {

enum class BlockAssignment : std::uint8_t {
  kWithin,   // categories rotate through the block sizes within a student
  kBetween,  // each student studies every category at one block size
};

struct DesignConfig {
  int n_categories = 10;
  int n_exemplars = 4;
  int n_repetitions = 4;
  std::vector<int> block_sizes{1, 2, 4, 8, 16};
  BlockAssignment assignment = BlockAssignment::kWithin;
  double inter_trial_time = 5.0;  // seconds between consecutive trials
  double phase_gap = 60.0;        // extra seconds between phases
  int n_students = 200;
  bool pretest = true;
  bool posttest = true;
  int novel_per_category = 2;  // posttest-only exemplars
  int warmup_trials = 8;       // practice trials opening the learning phase
  std::uint64_t seed = 1;
};

/// 10 categories x 4 exemplars x 4 repetitions, block sizes 1..16, 8 warm-up
/// trials, a 40-item pretest and a 60-item posttest (20 novel).
DesignConfig BirdDesign();

/// 3 categories, interleaved versus blocked study between students.
DesignConfig BlobDesign();

/// Extra column flagging posttest-only exemplars.
inline constexpr const char* kNovelColumn = "Novel";
/// Extra column carrying the generating probability of each outcome.
inline constexpr const char* kTrueProbColumn = "TrueProb";

/// Trial skeletons (outcomes all 0) for every student. Non-fatal issues such
/// as an unsatisfiable interleave are appended to `warnings`.
Dataset GenerateSequence(const DesignConfig& config,
                         std::vector<std::string>* warnings = nullptr);

struct GroundTruthLearner {
  // Every nonlinear parameter must be pinned in the formula.
  ModelSpec spec;
  // Column name to coefficient. A key "<term>#*" covers every level of a
  // per-level term; columns left unset are 0.
  std::map<std::string, double> coefficients;
  // Per-level coefficients drawn as mean + sd * N(0, 1), keyed by term label.
  std::map<std::string, std::pair<double, double>> random_levels;
};

struct Simulation {
  Dataset dataset;  // with outcomes and the TrueProb column
  std::vector<std::string> columns;
  std::vector<double> coefficients;  // resolved truth, one per column
};

Simulation SimulateOutcomes(Dataset skeleton, const GroundTruthLearner& truth,
                            std::uint64_t seed);

/// The truth used by `simulate` when none is supplied: an AFM + recency
/// learner (d = 0.5) for the bird and blob designs. Novel items share the
/// mean item intercept.
GroundTruthLearner DefaultTruth(const Dataset& skeleton, std::uint64_t seed);

}  // namespace lktseq
