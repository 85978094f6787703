#include "lktseq/model.hpp"

#include <array>
#include <cctype>
#include <set>
#include <tuple>

#include "lktseq/error.hpp"
#include "text.hpp"

namespace lktseq {

namespace {

constexpr std::array<ParamInfo, 1> kLogitdecParams{{{"w", 0.0, 1.0, 0.9, true}}};
constexpr std::array<ParamInfo, 1> kRecencyParams{{{"d", 0.0, 3.0, 1.0}}};
constexpr std::array<ParamInfo, 4> kPpeParams{{
    {"x", 0.0, 2.0, 0.6},
    {"c", 0.0, 1.0, 0.1},
    {"b", 0.0, 1.0, 0.04},
    {"m", 0.0, 1.0, 0.08},
}};
constexpr std::array<ParamInfo, 4> kBase4Params{{
    {"x", 0.0, 1.0, 0.5},
    {"c", 0.0, 1.0, 0.5},
    {"d", 0.0, 1.0, 0.5},
    {"s0", 0.1, 3600.0, 10.0},
}};

bool IsDelimiter(char ch) {
  switch (ch) {
    case '(': case ')': case '+': case '%': case '$': case ',': case '=': case ':':
      return true;
    default:
      return false;
  }
}

class Parser {
 public:
  Parser(std::string_view text, const ColumnSchema& schema)
      : text_(text), schema_(schema) {}

  ModelSpec Parse() {
    ModelSpec spec;
    const auto colon = text_.find(':');
    const auto paren = text_.find('(');
    if (colon != std::string_view::npos &&
        (paren == std::string_view::npos || colon < paren)) {
      spec.name = std::string(text::Trim(text_.substr(0, colon)));
      pos_ = colon + 1;
    }
    SkipSpace();
    if (AtEnd()) throw ParseError(pos_, "empty formula");

    std::set<std::tuple<Feature, Component, int>> seen;
    while (true) {
      SkipSpace();
      const auto term_start = pos_;
      Term term = ParseTerm();
      const auto key = std::make_tuple(
          term.feature, term.component,
          term.split ? static_cast<int>(*term.split) : -1);
      if (!seen.insert(key).second) {
        throw ParseError(term_start, "duplicate term '" + RenderTerm(term, schema_) + "'");
      }
      spec.terms.push_back(std::move(term));
      SkipSpace();
      if (AtEnd()) break;
      if (text_[pos_] != '+') throw ParseError(pos_, "expected '+' between terms");
      ++pos_;
      SkipSpace();
      if (AtEnd()) throw ParseError(pos_, "formula ends after '+'");
    }
    return spec;
  }

 private:
  bool AtEnd() const { return pos_ >= text_.size(); }

  void SkipSpace() {
    while (!AtEnd() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  // Identifier characters run up to the next delimiter; interior whitespace
  // is dropped so "KC. . Default." reads as "KC..Default.".
  std::string Identifier() {
    SkipSpace();
    std::string out;
    while (!AtEnd() && !IsDelimiter(text_[pos_])) {
      if (!std::isspace(static_cast<unsigned char>(text_[pos_]))) out += text_[pos_];
      ++pos_;
    }
    return out;
  }

  void Expect(char ch, const char* what) {
    SkipSpace();
    if (AtEnd() || text_[pos_] != ch) {
      throw ParseError(pos_, std::string("expected ") + what);
    }
    ++pos_;
  }

  Term ParseTerm() {
    Term term;
    SkipSpace();
    const auto feature_pos = pos_;
    const auto feature_name = Identifier();
    if (feature_name.empty()) throw ParseError(feature_pos, "expected a feature name");
    auto feature = ParseFeatureName(feature_name);
    if (!feature) throw ParseError(feature_pos, "unknown feature '" + feature_name + "'");
    term.feature = *feature;

    Expect('(', "'(' after feature name");
    SkipSpace();
    const auto component_pos = pos_;
    const auto component_name = Identifier();
    if (component_name.empty()) throw ParseError(component_pos, "expected a component name");
    auto component = schema_.ComponentFor(component_name);
    if (!component) {
      throw ParseError(component_pos, "unknown component '" + component_name + "'");
    }
    term.component = *component;

    SkipSpace();
    if (!AtEnd() && text_[pos_] == '$') {
      if (HasNonlinearParams(term.feature)) {
        throw ParseError(pos_, std::string("'$' is not supported on ") +
                                   FeatureName(term.feature));
      }
      term.per_level = true;
      ++pos_;
      SkipSpace();
    }
    if (term.feature == Feature::kIntercept) term.per_level = true;

    if (!AtEnd() && text_[pos_] == '%') {
      const auto split_pos = pos_;
      if (!IsCounting(term.feature)) {
        throw ParseError(split_pos, std::string("interaction is not valid on ") +
                                        FeatureName(term.feature));
      }
      ++pos_;
      const auto var_pos = pos_;
      const auto variable = Identifier();
      if (text::ToLower(variable) != "comparison") {
        throw ParseError(var_pos, "unknown split variable '" + variable + "'");
      }
      Expect('%', "'%' after split variable");
      const auto level_pos = pos_;
      const auto level = text::ToLower(Identifier());
      if (level == "same") {
        term.split = ComparisonTag::kSame;
      } else if (level == "different") {
        term.split = ComparisonTag::kDifferent;
      } else {
        throw ParseError(level_pos, "unknown split level '" + level + "'");
      }
      SkipSpace();
    }

    while (!AtEnd() && text_[pos_] == ',') {
      ++pos_;
      SkipSpace();
      const auto name_pos = pos_;
      const auto name = Identifier();
      const ParamInfo* info = nullptr;
      for (const auto& p : ParamsOf(term.feature)) {
        if (name == p.name) info = &p;
      }
      if (!info) {
        throw ParseError(name_pos, "unknown parameter '" + name + "' for " +
                                       FeatureName(term.feature));
      }
      Expect('=', "'=' after parameter name");
      SkipSpace();
      const auto value_pos = pos_;
      const auto value_text = Identifier();
      auto value = text::ParseDouble(value_text);
      if (!value) throw ParseError(value_pos, "invalid number '" + value_text + "'");
      const bool below = info->lower_open ? *value <= info->lower : *value < info->lower;
      if (below || *value > info->upper) {
        throw ParseError(value_pos, "parameter " + name + " out of bounds");
      }
      if (!term.fixed_params.emplace(name, *value).second) {
        throw ParseError(name_pos, "parameter '" + name + "' given twice");
      }
      SkipSpace();
    }
    Expect(')', "')' to close the term");
    return term;
  }

  std::string_view text_;
  const ColumnSchema& schema_;
  std::size_t pos_ = 0;
};

}  // namespace

const char* FeatureName(Feature feature) {
  switch (feature) {
    case Feature::kIntercept: return "intercept";
    case Feature::kLineafm: return "lineafm";
    case Feature::kLinesuc: return "linesuc";
    case Feature::kLinefail: return "linefail";
    case Feature::kLogitdec: return "logitdec";
    case Feature::kRecency: return "recency";
    case Feature::kPpe: return "ppe";
    case Feature::kBase4: return "base4";
  }
  return "?";
}

std::optional<Feature> ParseFeatureName(std::string_view name) {
  const auto lower = text::ToLower(name);
  for (auto f : {Feature::kIntercept, Feature::kLineafm, Feature::kLinesuc,
                 Feature::kLinefail, Feature::kLogitdec, Feature::kRecency,
                 Feature::kPpe, Feature::kBase4}) {
    if (lower == FeatureName(f)) return f;
  }
  return std::nullopt;
}

bool IsCounting(Feature feature) {
  return feature == Feature::kLineafm || feature == Feature::kLinesuc ||
         feature == Feature::kLinefail;
}

bool HasNonlinearParams(Feature feature) { return !ParamsOf(feature).empty(); }

std::span<const ParamInfo> ParamsOf(Feature feature) {
  switch (feature) {
    case Feature::kLogitdec: return kLogitdecParams;
    case Feature::kRecency: return kRecencyParams;
    case Feature::kPpe: return kPpeParams;
    case Feature::kBase4: return kBase4Params;
    default: return {};
  }
}

ModelSpec ParseModel(std::string_view text, const ColumnSchema& schema) {
  return Parser(text, schema).Parse();
}

std::string RenderTerm(const Term& term, const ColumnSchema& schema) {
  std::string out = FeatureName(term.feature);
  out += '(';
  out += schema.NameOf(term.component);
  if (term.per_level && term.feature != Feature::kIntercept) out += '$';
  if (term.split) {
    out += "%Comparison%";
    out += ComparisonTagName(*term.split);
  }
  for (const auto& [name, value] : term.fixed_params) {
    out += ", " + name + "=" + text::FormatDouble(value);
  }
  out += ')';
  return out;
}

std::string RenderModel(const ModelSpec& spec, const ColumnSchema& schema) {
  std::string out;
  if (!spec.name.empty()) out = spec.name + ": ";
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    if (i) out += " + ";
    out += RenderTerm(spec.terms[i], schema);
  }
  return out;
}

}  // namespace lktseq
