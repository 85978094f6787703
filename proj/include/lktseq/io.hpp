#pragma once

// JSON and delimited-text forms of fits, CV reports, simulation truths and
// comparison tables.

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lktseq/estimator.hpp"
#include "lktseq/evaluation.hpp"
#include "lktseq/simulator.hpp"

namespace lktseq {

std::string FitToJson(const FitResult& fit);
std::string CvToJson(const CvReport& report);

/// Nonlinear parameters stored in a FitToJson document, matched to `spec`
/// term by term. Throws Error(kSchema) when the document does not fit.
NlParams NlParamsFromFitJson(std::string_view json, const ModelSpec& spec,
                             const ColumnSchema& schema);

/// {"formula", "coefficients": {column: value}, "random_levels":
/// {term: {"mean", "sd"}}}.
GroundTruthLearner TruthFromJson(std::string_view json, const ColumnSchema& schema);
/// The resolved truth of a simulation, loadable by TruthFromJson.
std::string TruthToJson(const GroundTruthLearner& truth, const Simulation& sim,
                        const ColumnSchema& schema);

/// Overrides fields of `base` with those present in a JSON object.
DesignConfig DesignFromJson(std::string_view json, DesignConfig base);
std::string DesignToJson(const DesignConfig& config);

/// Pooled group table of one grouping as tab-separated text.
std::string GroupTableTsv(const CvReport& report, std::size_t grouping);

/// Per-trial feature values as tab-separated text with a header row.
void WriteFeatures(std::ostream& out, const ModelSpec& spec, const Dataset& dataset,
                   const NlParams& params);

enum class ReportFormat { kTable, kDelimited };

/// One row per CV report document, columns R2, AUC, RMSE, r1, r2, r3; NA
/// marks an undefined mean. `names` labels rows whose report has no name.
std::string RenderReport(const std::vector<std::string>& documents,
                         const std::vector<std::string>& names, ReportFormat format);

}  // namespace lktseq
