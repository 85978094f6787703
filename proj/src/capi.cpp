#define LKTSEQ_BUILDING 1
#include "lktseq/lktseq.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "lktseq/error.hpp"
#include "lktseq/estimator.hpp"
#include "lktseq/evaluation.hpp"
#include "lktseq/io.hpp"
#include "lktseq/model.hpp"
#include "lktseq/simulator.hpp"
#include "lktseq/trials.hpp"
#include "text.hpp"

struct lkt_dataset {
  lktseq::Dataset dataset;
  lktseq::LoadReport report;
};

struct lkt_model {
  lktseq::ModelSpec spec;
  lktseq::ColumnSchema schema;
};

struct lkt_fit {
  lktseq::FitResult result;
};

struct lkt_cv {
  lktseq::CvReport report;
};

namespace {

thread_local std::string g_error;
thread_local long g_parse_offset = -1;

lkt_status StatusOf(lktseq::ErrorKind kind) {
  using lktseq::ErrorKind;
  switch (kind) {
    case ErrorKind::kInvalidArgument: return LKT_INVALID_ARGUMENT;
    case ErrorKind::kIo: return LKT_IO;
    case ErrorKind::kSchema: return LKT_SCHEMA;
    case ErrorKind::kRow: return LKT_ROW;
    case ErrorKind::kValidation: return LKT_VALIDATION;
    case ErrorKind::kParse: return LKT_PARSE;
    case ErrorKind::kSingular: return LKT_SINGULAR;
    case ErrorKind::kFit: return LKT_FIT;
  }
  return LKT_INTERNAL;
}

template <typename F>
lkt_status Guard(F&& body) {
  g_error.clear();
  g_parse_offset = -1;
  try {
    body();
    return LKT_OK;
  } catch (const lktseq::ParseError& e) {
    g_error = e.what();
    g_parse_offset = static_cast<long>(e.offset());
    return LKT_PARSE;
  } catch (const lktseq::Error& e) {
    g_error = e.what();
    return StatusOf(e.kind());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return LKT_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return LKT_INTERNAL;
  }
}

lkt_status Fail(lkt_status status, std::string message) {
  g_error = std::move(message);
  return status;
}

char* Dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

lktseq::ColumnSchema SchemaOf(const lkt_schema* s) {
  lktseq::ColumnSchema schema;
  if (!s) return schema;
  auto set = [](std::string& field, const char* value) {
    if (value) field = value;
  };
  set(schema.student, s->student);
  set(schema.item, s->item);
  set(schema.kc, s->kc);
  set(schema.outcome, s->outcome);
  set(schema.time, s->time);
  set(schema.phase, s->phase);
  set(schema.category, s->category);
  set(schema.block_size, s->block_size);
  schema.sort_by_time = s->sort_by_time != 0;
  return schema;
}

void WriteFile(const char* path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lktseq::Error(lktseq::ErrorKind::kIo, std::string("cannot write ") + path);
  out << content;
  if (!out) throw lktseq::Error(lktseq::ErrorKind::kIo, std::string("write failed: ") + path);
}

}  // namespace

extern "C" {

const char* lkt_version(void) { return LKTSEQ_VERSION; }

const char* lkt_last_error(void) { return g_error.c_str(); }

long lkt_last_parse_offset(void) { return g_parse_offset; }

void lkt_string_free(char* s) { std::free(s); }

void lkt_schema_init(lkt_schema* schema) {
  if (schema) *schema = lkt_schema{};
}

lkt_status lkt_dataset_load(const char* path, const lkt_schema* schema, lkt_dataset** out) {
  if (!path || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_dataset_load: null argument");
  return Guard([&] {
    auto loaded = lktseq::LoadTrials(std::string(path), SchemaOf(schema));
    *out = new lkt_dataset{std::move(loaded.dataset), std::move(loaded.report)};
  });
}

size_t lkt_dataset_num_students(const lkt_dataset* d) { return d ? d->dataset.students.size() : 0; }

size_t lkt_dataset_num_trials(const lkt_dataset* d) { return d ? d->dataset.NumTrials() : 0; }

size_t lkt_dataset_num_dropped(const lkt_dataset* d) { return d ? d->report.dropped.size() : 0; }

lkt_status lkt_dataset_dropped(const lkt_dataset* d, size_t i, size_t* row, const char** reason) {
  if (!d || i >= d->report.dropped.size()) {
    return Fail(LKT_INVALID_ARGUMENT, "lkt_dataset_dropped: index out of range");
  }
  if (row) *row = d->report.dropped[i].row;
  if (reason) *reason = d->report.dropped[i].reason.c_str();
  return LKT_OK;
}

lkt_status lkt_dataset_write_csv(const lkt_dataset* d, const char* path) {
  if (!d || !path) return Fail(LKT_INVALID_ARGUMENT, "lkt_dataset_write_csv: null argument");
  return Guard([&] {
    std::ostringstream text;
    lktseq::WriteTrials(text, d->dataset);
    WriteFile(path, text.str());
  });
}

void lkt_dataset_free(lkt_dataset* d) { delete d; }

lkt_status lkt_model_parse(const char* formula, const lkt_schema* schema, lkt_model** out) {
  if (!formula || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_model_parse: null argument");
  return Guard([&] {
    auto s = SchemaOf(schema);
    auto spec = lktseq::ParseModel(formula, s);
    *out = new lkt_model{std::move(spec), std::move(s)};
  });
}

lkt_status lkt_model_render(const lkt_model* m, char** out) {
  if (!m || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_model_render: null argument");
  return Guard([&] { *out = Dup(lktseq::RenderModel(m->spec, m->schema)); });
}

size_t lkt_model_num_terms(const lkt_model* m) { return m ? m->spec.terms.size() : 0; }

void lkt_model_free(lkt_model* m) { delete m; }

void lkt_fit_options_init(lkt_fit_options* options) {
  if (!options) return;
  const lktseq::SearchConfig defaults;
  options->ridge = defaults.inner.ridge;
  options->seed = defaults.seed;
  options->restarts = defaults.restarts;
  options->max_evals = defaults.max_evals_per_restart;
}

namespace {

lktseq::SearchConfig SearchOf(double ridge, uint64_t seed, int restarts, int max_evals) {
  if (!(ridge >= 0.0)) throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "ridge must be nonnegative");
  if (restarts < 1) throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "restarts must be at least 1");
  if (max_evals < 1) throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "max_evals must be at least 1");
  lktseq::SearchConfig config;
  config.inner.ridge = ridge;
  config.seed = seed;
  config.restarts = restarts;
  config.max_evals_per_restart = max_evals;
  return config;
}

// Formulas parse against the dataset's schema so column names agree.
void CheckSchema(const lkt_model* m, const lkt_dataset* d) {
  const auto& a = m->schema;
  const auto& b = d->dataset.schema;
  if (a.student != b.student || a.item != b.item || a.kc != b.kc) {
    throw lktseq::Error(lktseq::ErrorKind::kSchema,
                        "model and dataset were read with different column mappings");
  }
}

}  // namespace

lkt_status lkt_fit_run(const lkt_model* m, const lkt_dataset* d, const lkt_fit_options* options,
                       lkt_fit** out) {
  if (!m || !d || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_fit_run: null argument");
  return Guard([&] {
    lkt_fit_options o;
    lkt_fit_options_init(&o);
    if (options) o = *options;
    CheckSchema(m, d);
    auto result = lktseq::FitModel(m->spec, d->dataset.students, d->dataset.schema,
                                   SearchOf(o.ridge, o.seed, o.restarts, o.max_evals));
    *out = new lkt_fit{std::move(result)};
  });
}

int lkt_fit_converged(const lkt_fit* f) { return f && f->result.converged ? 1 : 0; }

double lkt_fit_log_likelihood(const lkt_fit* f) { return f ? f->result.log_likelihood : 0.0; }

int lkt_fit_outer_evals(const lkt_fit* f) { return f ? f->result.outer_evals : 0; }

size_t lkt_fit_num_coefficients(const lkt_fit* f) { return f ? f->result.coefficients.size() : 0; }

lkt_status lkt_fit_coefficient(const lkt_fit* f, size_t i, const char** name, double* value) {
  if (!f || i >= f->result.coefficients.size()) {
    return Fail(LKT_INVALID_ARGUMENT, "lkt_fit_coefficient: index out of range");
  }
  if (name) *name = f->result.layout.names[i].c_str();
  if (value) *value = f->result.coefficients[i];
  return LKT_OK;
}

lkt_status lkt_fit_to_json(const lkt_fit* f, char** out) {
  if (!f || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_fit_to_json: null argument");
  return Guard([&] { *out = Dup(lktseq::FitToJson(f->result)); });
}

void lkt_fit_free(lkt_fit* f) { delete f; }

lkt_status lkt_features_write(const lkt_model* m, const lkt_dataset* d, const char* fit_json,
                              const char* path) {
  if (!m || !d || !path) return Fail(LKT_INVALID_ARGUMENT, "lkt_features_write: null argument");
  return Guard([&] {
    CheckSchema(m, d);
    const auto params = fit_json ? lktseq::NlParamsFromFitJson(fit_json, m->spec, m->schema)
                                 : lktseq::InitialParams(m->spec);
    std::ostringstream text;
    lktseq::WriteFeatures(text, m->spec, d->dataset, params);
    WriteFile(path, text.str());
  });
}

void lkt_cv_options_init(lkt_cv_options* options) {
  if (!options) return;
  const lktseq::CvPlan plan;
  const lktseq::SearchConfig search;
  *options = lkt_cv_options{};
  options->folds = plan.n_folds;
  options->repeats = plan.n_repeats;
  options->seed = plan.seed;
  options->ridge = search.inner.ridge;
  options->restarts = search.restarts;
  options->max_evals = search.max_evals_per_restart;
  options->jobs = 1;
}

lkt_status lkt_cv_run(const lkt_model* m, const lkt_dataset* d, const lkt_cv_options* options,
                      lkt_cv** out) {
  if (!m || !d || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_cv_run: null argument");
  return Guard([&] {
    lkt_cv_options o;
    lkt_cv_options_init(&o);
    if (options) o = *options;
    CheckSchema(m, d);
    if (o.folds < 2) throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "folds must be at least 2");
    if (o.repeats < 1) throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "repeats must be at least 1");
    lktseq::CvOptions cv;
    cv.plan = {o.folds, o.repeats, o.seed};
    cv.search = SearchOf(o.ridge, o.seed, o.restarts, o.max_evals);
    cv.jobs = o.jobs > 0 ? o.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    cv.groupings = lktseq::DefaultGroupings(d->dataset, o.novel_column ? o.novel_column : "Novel",
                                            o.r3_filter ? o.r3_filter : "");
    if (o.group_by && *o.group_by) {
      lktseq::GroupSpec custom;
      custom.name = "custom";
      for (auto& key : lktseq::text::SplitList(o.group_by, ',')) custom.keys.push_back(std::string(lktseq::text::Trim(key)));
      if (o.filter && *o.filter) custom.filter = lktseq::ParseFilter(o.filter);
      cv.groupings.push_back(std::move(custom));
    }
    *out = new lkt_cv{lktseq::RunCv(m->spec, d->dataset, cv)};
  });
}

size_t lkt_cv_failed_folds(const lkt_cv* cv) { return cv ? cv->report.failed_folds : 0; }

size_t lkt_cv_num_groupings(const lkt_cv* cv) { return cv ? cv->report.groupings.size() : 0; }

const char* lkt_cv_grouping_name(const lkt_cv* cv, size_t i) {
  if (!cv || i >= cv->report.groupings.size()) return nullptr;
  return cv->report.groupings[i].name.c_str();
}

lkt_status lkt_cv_metric(const lkt_cv* cv, const char* metric, double* value) {
  if (!cv || !metric || !value) return Fail(LKT_INVALID_ARGUMENT, "lkt_cv_metric: null argument");
  const auto& r = cv->report;
  const lktseq::MetricMean* m = nullptr;
  const std::string name = metric;
  if (name == "r2_mcfadden") m = &r.r2_mcfadden;
  else if (name == "auc") m = &r.auc;
  else if (name == "rmse") m = &r.rmse;
  for (std::size_t g = 0; !m && g < r.groupings.size(); ++g) {
    if (r.groupings[g].name == name) m = &r.correlations[g];
  }
  if (!m) return Fail(LKT_INVALID_ARGUMENT, "unknown metric '" + name + "'");
  if (!m->mean) return Fail(LKT_VALIDATION, "metric '" + name + "' is undefined on every fold");
  *value = *m->mean;
  return LKT_OK;
}

lkt_status lkt_cv_to_json(const lkt_cv* cv, char** out) {
  if (!cv || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_cv_to_json: null argument");
  return Guard([&] { *out = Dup(lktseq::CvToJson(cv->report)); });
}

lkt_status lkt_cv_group_table(const lkt_cv* cv, size_t grouping, char** out) {
  if (!cv || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_cv_group_table: null argument");
  return Guard([&] { *out = Dup(lktseq::GroupTableTsv(cv->report, grouping)); });
}

void lkt_cv_free(lkt_cv* cv) { delete cv; }

lkt_status lkt_simulate(const char* design, const char* config_json, uint64_t seed,
                        lkt_dataset** out, char** truth_json, char** warnings) {
  if (!design || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_simulate: null argument");
  return Guard([&] {
    using nlohmann::ordered_json;
    const std::string kind = design;
    lktseq::DesignConfig config;
    if (kind == "bird" || kind == "custom") config = lktseq::BirdDesign();
    else if (kind == "blob") config = lktseq::BlobDesign();
    else throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument, "unknown design '" + kind + "'");

    ordered_json doc = ordered_json::object();
    if (config_json) {
      try {
        doc = ordered_json::parse(config_json);
      } catch (const nlohmann::json::exception& e) {
        throw lktseq::Error(lktseq::ErrorKind::kSchema, std::string("config: ") + e.what());
      }
      if (!doc.is_object()) throw lktseq::Error(lktseq::ErrorKind::kSchema, "config: expected an object");
      for (const auto& [key, value] : doc.items()) {
        if (key != "design" && key != "truth") {
          throw lktseq::Error(lktseq::ErrorKind::kSchema, "config: unknown key '" + key + "'");
        }
      }
    }
    if (kind == "custom" && !doc.contains("design")) {
      throw lktseq::Error(lktseq::ErrorKind::kInvalidArgument,
                          "the custom design needs a config with a \"design\" object");
    }
    if (doc.contains("design")) config = lktseq::DesignFromJson(doc["design"].dump(), config);
    config.seed = seed;

    std::vector<std::string> notes;
    lktseq::Dataset skeleton = lktseq::GenerateSequence(config, &notes);
    const auto truth = doc.contains("truth")
                           ? lktseq::TruthFromJson(doc["truth"].dump(), skeleton.schema)
                           : lktseq::DefaultTruth(skeleton, seed);
    auto sim = lktseq::SimulateOutcomes(std::move(skeleton), truth, seed);

    char* truth_text = nullptr;
    char* warning_text = nullptr;
    if (truth_json) {
      ordered_json t;
      t["design"] = ordered_json::parse(lktseq::DesignToJson(config));
      t["truth"] = ordered_json::parse(lktseq::TruthToJson(truth, sim, sim.dataset.schema));
      truth_text = Dup(t.dump(2) + "\n");
    }
    if (warnings) {
      std::string joined;
      for (const auto& n : notes) joined += n + "\n";
      warning_text = Dup(joined);
    }
    *out = new lkt_dataset{std::move(sim.dataset), {}};
    if (truth_json) *truth_json = truth_text;
    if (warnings) *warnings = warning_text;
  });
}

lkt_status lkt_report_render(const char* const* documents, const char* const* names, size_t n,
                             lkt_report_format format, char** out) {
  if ((!documents && n) || !out) return Fail(LKT_INVALID_ARGUMENT, "lkt_report_render: null argument");
  return Guard([&] {
    std::vector<std::string> docs;
    std::vector<std::string> labels;
    for (size_t i = 0; i < n; ++i) {
      docs.emplace_back(documents[i] ? documents[i] : "");
      labels.emplace_back(names && names[i] ? names[i] : "report " + std::to_string(i + 1));
    }
    *out = Dup(lktseq::RenderReport(docs, labels, format == LKT_REPORT_DELIMITED
                                                      ? lktseq::ReportFormat::kDelimited
                                                      : lktseq::ReportFormat::kTable));
  });
}

}  // extern "C"
