#pragma once

// Symbolic model formulas: `feature(component[$][%Comparison%Level][, p=v])`
// terms joined by `+`, with an optional `label:` prefix.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lktseq/trials.hpp"

namespace lktseq {

enum class Feature : std::uint8_t {
  kIntercept,
  kLineafm,
  kLinesuc,
  kLinefail,
  kLogitdec,
  kRecency,
  kPpe,
  kBase4,
};

const char* FeatureName(Feature feature);
std::optional<Feature> ParseFeatureName(std::string_view name);

/// lineafm, linesuc, linefail: the only features that accept a split.
bool IsCounting(Feature feature);

/// Features with parameters searched by the outer optimizer.
bool HasNonlinearParams(Feature feature);

struct ParamInfo {
  const char* name;
  double lower;
  double upper;
  double initial;  // starting point of the outer search
  bool lower_open = false;  // (lower, upper] rather than [lower, upper]
};

/// Parameter table of a feature, in canonical order; empty for linear ones.
std::span<const ParamInfo> ParamsOf(Feature feature);

struct Term {
  Feature feature = Feature::kLineafm;
  Component component = Component::kKc;
  bool per_level = false;
  // Comparison split level (kSame or kDifferent) when present.
  std::optional<ComparisonTag> split;
  std::map<std::string, double> fixed_params;

  bool operator==(const Term&) const = default;
};

struct ModelSpec {
  std::vector<Term> terms;
  std::string name;

  bool operator==(const ModelSpec&) const = default;
};

/// Throws ParseError carrying the character offset of the problem.
ModelSpec ParseModel(std::string_view text, const ColumnSchema& schema = {});

std::string RenderTerm(const Term& term, const ColumnSchema& schema = {});
std::string RenderModel(const ModelSpec& spec, const ColumnSchema& schema = {});

}  // namespace lktseq
