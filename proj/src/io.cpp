#include "lktseq/io.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "lktseq/error.hpp"
#include "text.hpp"

namespace lktseq {

using Json = nlohmann::ordered_json;

namespace {

Json Optional(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json Mean(const MetricMean& m) {
  return Json{{"mean", Optional(m.mean)}, {"defined", m.defined}, {"undefined", m.undefined}};
}

Json SchemaJson(const ColumnSchema& s) {
  return Json{{"student", s.student}, {"item", s.item},         {"kc", s.kc},
              {"outcome", s.outcome}, {"time", s.time},         {"phase", s.phase},
              {"category", s.category}, {"block_size", s.block_size}};
}

Json ParamsJson(const ModelSpec& spec, const NlParams& params, const ColumnSchema& schema) {
  Json out = Json::array();
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto infos = ParamsOf(spec.terms[t].feature);
    if (infos.empty()) continue;
    Json values = Json::object();
    for (std::size_t j = 0; j < infos.size(); ++j) values[infos[j].name] = params.values[t][j];
    out.push_back(Json{{"term", TermLabel(spec.terms[t], schema)}, {"params", values}});
  }
  return out;
}

Json Parse(std::string_view text, const char* what) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string(what) + ": " + e.what());
  }
}

std::string Fixed(const Json& v) {
  if (!v.is_number()) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
  return buf;
}

}  // namespace

std::string FitToJson(const FitResult& fit) {
  Json doc;
  doc["name"] = fit.spec.name;
  doc["formula"] = RenderModel(ModelSpec{fit.spec.terms, {}}, fit.schema);
  doc["schema"] = SchemaJson(fit.schema);
  doc["converged"] = fit.converged;
  doc["n_trials"] = fit.n_trials;
  doc["log_likelihood"] = fit.log_likelihood;
  doc["null_log_likelihood"] = fit.null_log_likelihood;
  doc["mcfadden_r2"] =
      fit.null_log_likelihood < 0.0 ? Json(1.0 - fit.log_likelihood / fit.null_log_likelihood)
                                    : Json(nullptr);
  doc["objective"] = fit.objective;
  doc["ridge"] = fit.ridge;
  doc["iterations_inner"] = fit.iterations_inner;
  doc["outer_evals"] = fit.outer_evals;
  doc["nonlinear_params"] = ParamsJson(fit.spec, fit.nl_params, fit.schema);
  Json coefs = Json::array();
  for (std::size_t c = 0; c < fit.layout.NumColumns(); ++c) {
    coefs.push_back(Json{{"column", fit.layout.names[c]}, {"value", fit.coefficients[c]}});
  }
  doc["coefficients"] = std::move(coefs);
  doc["outer_trace"] = fit.outer_trace;
  return doc.dump(2) + "\n";
}

std::string CvToJson(const CvReport& report) {
  Json doc;
  doc["name"] = report.name;
  doc["formula"] = report.formula;
  doc["plan"] = Json{{"folds", report.plan.n_folds},
                     {"repeats", report.plan.n_repeats},
                     {"seed", report.plan.seed}};
  Json groupings = Json::array();
  for (const auto& g : report.groupings) {
    Json filter = Json::object();
    for (const auto& [k, v] : g.filter) filter[k] = v;
    groupings.push_back(Json{{"name", g.name}, {"filter", filter}, {"keys", g.keys}});
  }
  doc["groupings"] = std::move(groupings);
  doc["failed_folds"] = report.failed_folds;
  Json metrics;
  metrics["r2_mcfadden"] = Mean(report.r2_mcfadden);
  metrics["auc"] = Mean(report.auc);
  metrics["rmse"] = Mean(report.rmse);
  for (std::size_t g = 0; g < report.groupings.size(); ++g) {
    metrics[report.groupings[g].name] = Mean(report.correlations[g]);
  }
  doc["metrics"] = std::move(metrics);

  Json folds = Json::array();
  for (const auto& f : report.folds) {
    Json j;
    j["repeat"] = f.repeat;
    j["fold"] = f.fold;
    j["failed"] = f.failed;
    if (f.failed) j["error"] = f.error;
    j["train_students"] = f.train_students;
    j["test_students"] = f.test_students;
    j["test_trials"] = f.test_trials;
    j["r2_mcfadden"] = Optional(f.r2_mcfadden);
    j["auc"] = Optional(f.auc);
    j["rmse"] = Optional(f.rmse);
    Json corr = Json::object();
    for (std::size_t g = 0; g < report.groupings.size() && g < f.correlations.size(); ++g) {
      corr[report.groupings[g].name] = Optional(f.correlations[g]);
    }
    j["correlations"] = std::move(corr);
    j["train_log_likelihood"] = f.train_log_likelihood;
    j["converged"] = f.converged;
    Json params = Json::array();
    for (const auto& v : f.nl_params.values) {
      if (!v.empty()) params.push_back(v);
    }
    j["nonlinear_params"] = std::move(params);
    folds.push_back(std::move(j));
  }
  doc["folds"] = std::move(folds);

  Json tables = Json::object();
  for (std::size_t g = 0; g < report.groupings.size(); ++g) {
    Json rows = Json::array();
    for (const auto& row : report.group_tables[g]) {
      rows.push_back(Json{{"key", row.key},
                          {"n", row.n},
                          {"mean_prediction", row.mean_prediction},
                          {"mean_observed", row.mean_observed}});
    }
    tables[report.groupings[g].name] = std::move(rows);
  }
  doc["group_tables"] = std::move(tables);
  return doc.dump(2) + "\n";
}

NlParams NlParamsFromFitJson(std::string_view json, const ModelSpec& spec,
                             const ColumnSchema& schema) {
  const Json doc = Parse(json, "fit result");
  if (!doc.contains("nonlinear_params") || !doc["nonlinear_params"].is_array()) {
    throw Error(ErrorKind::kSchema, "fit result: no nonlinear_params array");
  }
  NlParams params = InitialParams(spec);
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto infos = ParamsOf(spec.terms[t].feature);
    if (infos.empty()) continue;
    const std::string label = TermLabel(spec.terms[t], schema);
    const Json* found = nullptr;
    for (const auto& entry : doc["nonlinear_params"]) {
      if (entry.value("term", "") == label) found = &entry;
    }
    if (!found) throw Error(ErrorKind::kSchema, "fit result: no parameters for " + label);
    for (std::size_t j = 0; j < infos.size(); ++j) {
      const auto& p = (*found)["params"];
      if (!p.contains(infos[j].name) || !p[infos[j].name].is_number()) {
        throw Error(ErrorKind::kSchema, "fit result: " + label + " lacks " + infos[j].name);
      }
      params.values[t][j] = p[infos[j].name].get<double>();
    }
  }
  return params;
}

GroundTruthLearner TruthFromJson(std::string_view json, const ColumnSchema& schema) {
  const Json doc = Parse(json, "truth");
  if (!doc.is_object() || !doc.contains("formula") || !doc["formula"].is_string()) {
    throw Error(ErrorKind::kSchema, "truth: a \"formula\" string is required");
  }
  GroundTruthLearner truth;
  truth.spec = ParseModel(doc["formula"].get<std::string>(), schema);
  for (const auto& [key, value] : doc.items()) {
    if (key == "formula") continue;
    if (key == "coefficients") {
      for (const auto& [column, v] : value.items()) {
        if (!v.is_number()) throw Error(ErrorKind::kSchema, "truth: coefficient '" + column + "' is not a number");
        truth.coefficients[column] = v.get<double>();
      }
    } else if (key == "random_levels") {
      for (const auto& [term, v] : value.items()) {
        if (!v.is_object() || !v.contains("mean") || !v.contains("sd")) {
          throw Error(ErrorKind::kSchema, "truth: random_levels '" + term + "' needs mean and sd");
        }
        truth.random_levels[term] = {v["mean"].get<double>(), v["sd"].get<double>()};
      }
    } else {
      throw Error(ErrorKind::kSchema, "truth: unknown key '" + key + "'");
    }
  }
  return truth;
}

std::string TruthToJson(const GroundTruthLearner& truth, const Simulation& sim,
                        const ColumnSchema& schema) {
  Json doc;
  doc["formula"] = RenderModel(truth.spec, schema);
  Json coefs = Json::object();
  for (std::size_t c = 0; c < sim.columns.size(); ++c) coefs[sim.columns[c]] = sim.coefficients[c];
  doc["coefficients"] = std::move(coefs);
  return doc.dump(2) + "\n";
}

DesignConfig DesignFromJson(std::string_view json, DesignConfig base) {
  const Json doc = Parse(json, "design");
  if (!doc.is_object()) throw Error(ErrorKind::kSchema, "design: expected an object");
  try {
    for (const auto& [key, v] : doc.items()) {
      if (key == "n_categories") base.n_categories = v.get<int>();
      else if (key == "n_exemplars") base.n_exemplars = v.get<int>();
      else if (key == "n_repetitions") base.n_repetitions = v.get<int>();
      else if (key == "block_sizes") base.block_sizes = v.get<std::vector<int>>();
      else if (key == "assignment") {
        const auto a = v.get<std::string>();
        if (a == "within") base.assignment = BlockAssignment::kWithin;
        else if (a == "between") base.assignment = BlockAssignment::kBetween;
        else throw Error(ErrorKind::kSchema, "design: assignment must be within or between");
      }
      else if (key == "inter_trial_time") base.inter_trial_time = v.get<double>();
      else if (key == "phase_gap") base.phase_gap = v.get<double>();
      else if (key == "n_students") base.n_students = v.get<int>();
      else if (key == "pretest") base.pretest = v.get<bool>();
      else if (key == "posttest") base.posttest = v.get<bool>();
      else if (key == "novel_per_category") base.novel_per_category = v.get<int>();
      else if (key == "warmup_trials") base.warmup_trials = v.get<int>();
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else throw Error(ErrorKind::kSchema, "design: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchema, std::string("design: ") + e.what());
  }
  return base;
}

std::string DesignToJson(const DesignConfig& c) {
  Json doc{{"n_categories", c.n_categories},
           {"n_exemplars", c.n_exemplars},
           {"n_repetitions", c.n_repetitions},
           {"block_sizes", c.block_sizes},
           {"assignment", c.assignment == BlockAssignment::kWithin ? "within" : "between"},
           {"inter_trial_time", c.inter_trial_time},
           {"phase_gap", c.phase_gap},
           {"n_students", c.n_students},
           {"pretest", c.pretest},
           {"posttest", c.posttest},
           {"novel_per_category", c.novel_per_category},
           {"warmup_trials", c.warmup_trials},
           {"seed", c.seed}};
  return doc.dump(2) + "\n";
}

std::string GroupTableTsv(const CvReport& report, std::size_t grouping) {
  if (grouping >= report.groupings.size()) {
    throw Error(ErrorKind::kInvalidArgument, "no grouping " + std::to_string(grouping));
  }
  std::ostringstream out;
  for (const auto& k : report.groupings[grouping].keys) out << k << '\t';
  out << "n\tmean_prediction\tmean_observed\n";
  for (const auto& row : report.group_tables[grouping]) {
    for (const auto& k : row.key) out << k << '\t';
    out << row.n << '\t' << text::FormatDouble(row.mean_prediction) << '\t'
        << text::FormatDouble(row.mean_observed) << '\n';
  }
  return out.str();
}

void WriteFeatures(std::ostream& out, const ModelSpec& spec, const Dataset& dataset,
                   const NlParams& params) {
  const ColumnLayout layout = MakeLayout(spec, dataset.students, dataset.schema);
  const DesignMatrix design = BuildDesignMatrix(spec, layout, dataset.students, params);
  out << "student\titem\ttrial\toutcome";
  for (const auto& name : layout.names) out << '\t' << name;
  out << '\n';
  for (std::size_t r = 0; r < design.NumRows(); ++r) {
    const RowRef ref = design.rows[r];
    const TrialRecord& trial = dataset.students[ref.student].trials[ref.trial];
    out << trial.student_id << '\t' << trial.item_id << '\t' << trial.sequence_index << '\t'
        << trial.outcome;
    for (double v : design.DenseRow(r)) out << '\t' << text::FormatDouble(v);
    out << '\n';
  }
}

std::string RenderReport(const std::vector<std::string>& documents,
                         const std::vector<std::string>& names, ReportFormat format) {
  static const char* kKeys[] = {"r2_mcfadden", "auc", "rmse", "r1", "r2", "r3"};
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"model", "R2", "AUC", "RMSE", "r1", "r2", "r3"});
  for (std::size_t i = 0; i < documents.size(); ++i) {
    const std::string label = i < names.size() ? names[i] : "report " + std::to_string(i + 1);
    Json doc;
    try {
      doc = Json::parse(documents[i]);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kSchema, label + ": not JSON: " + e.what());
    }
    if (!doc.is_object() || !doc.contains("metrics") || !doc["metrics"].is_object()) {
      throw Error(ErrorKind::kSchema, label + ": not a cv report (no metrics object)");
    }
    const Json& m = doc["metrics"];
    for (const char* k : {"r2_mcfadden", "auc", "rmse"}) {
      if (!m.contains(k)) throw Error(ErrorKind::kSchema, label + ": cv report lacks metric " + k);
    }
    std::vector<std::string> row;
    const std::string name = doc.value("name", "");
    row.push_back(name.empty() ? label : name);
    for (const char* k : kKeys) {
      row.push_back(m.contains(k) && m[k].is_object() ? Fixed(m[k].value("mean", Json(nullptr)))
                                                      : "NA");
    }
    rows.push_back(std::move(row));
  }

  std::ostringstream out;
  if (format == ReportFormat::kDelimited) {
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "\t" : "") << row[c];
      out << '\n';
    }
    return out.str();
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c == 0) out << row[c] << pad;
      else out << "  " << pad << row[c];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lktseq
