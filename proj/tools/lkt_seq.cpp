// lkt-seq: command-line front end over the lktseq C API.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lktseq/lktseq.h"

namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNotConverged = 2;

struct Failure {
  std::string message;
};

struct Columns {
  std::string student = "Anon.Student.Id";
  std::string item = "Problem.Name";
  std::string kc = "KC..Default.";
  std::string outcome = "Outcome";
  std::string time = "CF..Time";
  std::string phase = "Phase";
  std::string category = "Category";
  std::string block_size = "BlockSize";
  bool sort_time = false;

  lkt_schema Schema() const {
    lkt_schema s;
    lkt_schema_init(&s);
    s.student = student.c_str();
    s.item = item.c_str();
    s.kc = kc.c_str();
    s.outcome = outcome.c_str();
    s.time = time.c_str();
    s.phase = phase.c_str();
    s.category = category.c_str();
    s.block_size = block_size.c_str();
    s.sort_by_time = sort_time ? 1 : 0;
    return s;
  }
};

struct Search {
  double ridge = 1e-6;
  int restarts = 3;
  int max_evals = 200;
};

struct Options {
  Columns columns;
  Search search;
  std::uint64_t seed = 1;
  bool verbose = false;
  std::string data;
  std::string model;
  std::string name;
  std::string out;
  // cv
  int folds = 5;
  int repeats = 10;
  int jobs = 0;
  std::string group_by;
  std::string filter;
  std::string r3_filter;
  std::string novel_column = "Novel";
  // features
  std::string params;
  // simulate
  std::string design = "bird";
  std::string config;
  std::string truth;
  // report
  std::vector<std::string> reports;
  std::string format = "table";
};

void Check(lkt_status status, const std::string& context) {
  if (status != LKT_OK) throw Failure{context + ": " + lkt_last_error()};
}

struct CString {
  char* p = nullptr;
  ~CString() { lkt_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};

using Dataset = Handle<lkt_dataset, lkt_dataset_free>;
using Model = Handle<lkt_model, lkt_model_free>;
using Fit = Handle<lkt_fit, lkt_fit_free>;
using Cv = Handle<lkt_cv, lkt_cv_free>;

std::string ReadFile(const std::string& path, const std::string& flag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{flag + ": cannot read " + path};
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void WriteFile(const std::string& path, const std::string& content, const std::string& flag) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{flag + ": cannot write " + path};
  out << content;
  if (!out) throw Failure{flag + ": write failed for " + path};
}

void LoadData(const Options& o, Dataset& d) {
  const lkt_schema schema = o.columns.Schema();
  Check(lkt_dataset_load(o.data.c_str(), &schema, &d.p), "--data " + o.data);
  const size_t dropped = lkt_dataset_num_dropped(d.p);
  for (size_t i = 0; i < dropped; ++i) {
    size_t row = 0;
    const char* reason = nullptr;
    lkt_dataset_dropped(d.p, i, &row, &reason);
    std::cerr << "warning: " << o.data << ": row " << row << " dropped: " << reason << "\n";
  }
}

void ParseModel(const Options& o, Model& m) {
  const lkt_schema schema = o.columns.Schema();
  const std::string formula = o.name.empty() ? o.model : o.name + ": " + o.model;
  if (lkt_model_parse(formula.c_str(), &schema, &m.p) != LKT_OK) {
    throw Failure{"--model: " + std::string(lkt_last_error())};
  }
}

// Every option of the subcommand with its value, in declaration order.
Json Arguments(const CLI::App& sub) {
  Json args = Json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name();
    if (name.empty() || name == "--help") continue;
    const auto& results = opt->results();
    if (opt->get_expected_max() == 0) {
      args[name] = !results.empty();
    } else if (opt->get_items_expected_max() > 1) {
      args[name] = results;
    } else {
      args[name] = results.empty() ? Json(opt->get_default_str()) : Json(results.back());
    }
  }
  return args;
}

void WriteManifest(const std::string& out, const CLI::App& sub, const Options& o,
                   const std::vector<std::string>& outputs) {
  Json manifest;
  manifest["tool"] = "lkt-seq";
  manifest["version"] = lkt_version();
  manifest["subcommand"] = sub.get_name();
  manifest["arguments"] = Arguments(sub);
  manifest["seed"] = o.seed;
  manifest["outputs"] = outputs;
  WriteFile(out + ".manifest.json", manifest.dump(2) + "\n", "--out");
}

int RunFit(const CLI::App& sub, const Options& o) {
  Dataset d;
  Model m;
  LoadData(o, d);
  ParseModel(o, m);
  lkt_fit_options fo;
  lkt_fit_options_init(&fo);
  fo.ridge = o.search.ridge;
  fo.seed = o.seed;
  fo.restarts = o.search.restarts;
  fo.max_evals = o.search.max_evals;
  Fit f;
  Check(lkt_fit_run(m.p, d.p, &fo, &f.p), "fit");
  CString json;
  Check(lkt_fit_to_json(f.p, &json.p), "fit");
  WriteFile(o.out, json.str(), "--out");
  WriteManifest(o.out, sub, o, {o.out});
  if (o.verbose) {
    std::cerr << "log-likelihood " << lkt_fit_log_likelihood(f.p) << ", "
              << lkt_fit_outer_evals(f.p) << " outer evaluations\n";
  }
  if (!lkt_fit_converged(f.p)) {
    std::cerr << "warning: fit did not converge; results written to " << o.out << "\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

std::string TablePath(const std::string& out, const std::string& grouping) {
  std::filesystem::path p(out);
  const std::string stem = p.stem().string();
  return (p.parent_path() / (stem + "." + grouping + ".tsv")).string();
}

int RunCvCommand(const CLI::App& sub, const Options& o) {
  Dataset d;
  Model m;
  LoadData(o, d);
  ParseModel(o, m);
  lkt_cv_options co;
  lkt_cv_options_init(&co);
  co.folds = o.folds;
  co.repeats = o.repeats;
  co.seed = o.seed;
  co.ridge = o.search.ridge;
  co.restarts = o.search.restarts;
  co.max_evals = o.search.max_evals;
  co.jobs = o.jobs;
  co.novel_column = o.novel_column.c_str();
  co.r3_filter = o.r3_filter.empty() ? nullptr : o.r3_filter.c_str();
  co.group_by = o.group_by.empty() ? nullptr : o.group_by.c_str();
  co.filter = o.filter.empty() ? nullptr : o.filter.c_str();
  if (!o.filter.empty() && o.group_by.empty()) throw Failure{"--filter: requires --group-by"};
  Cv cv;
  Check(lkt_cv_run(m.p, d.p, &co, &cv.p), "cv");
  CString json;
  Check(lkt_cv_to_json(cv.p, &json.p), "cv");
  WriteFile(o.out, json.str(), "--out");
  std::vector<std::string> outputs{o.out};
  for (size_t g = 0; g < lkt_cv_num_groupings(cv.p); ++g) {
    CString table;
    Check(lkt_cv_group_table(cv.p, g, &table.p), "cv");
    const std::string path = TablePath(o.out, lkt_cv_grouping_name(cv.p, g));
    WriteFile(path, table.str(), "--out");
    outputs.push_back(path);
  }
  WriteManifest(o.out, sub, o, outputs);

  const Json report = Json::parse(json.str());
  std::size_t unconverged = 0;
  for (const auto& fold : report["folds"]) {
    if (!fold["failed"].get<bool>() && !fold["converged"].get<bool>()) ++unconverged;
  }
  const size_t failed = lkt_cv_failed_folds(cv.p);
  if (failed) std::cerr << "warning: " << failed << " folds failed and were excluded\n";
  if (o.verbose) {
    double v = 0.0;
    for (const char* k : {"r2_mcfadden", "auc", "rmse"}) {
      if (lkt_cv_metric(cv.p, k, &v) == LKT_OK) std::cerr << k << " " << v << "\n";
    }
  }
  if (unconverged) {
    std::cerr << "warning: " << unconverged << " fold fits did not converge; results written to "
              << o.out << "\n";
    return kExitNotConverged;
  }
  return kExitOk;
}

int RunFeatures(const CLI::App& sub, const Options& o) {
  Dataset d;
  Model m;
  LoadData(o, d);
  ParseModel(o, m);
  std::optional<std::string> params;
  if (!o.params.empty()) params = ReadFile(o.params, "--params");
  Check(lkt_features_write(m.p, d.p, params ? params->c_str() : nullptr, o.out.c_str()),
        "features");
  WriteManifest(o.out, sub, o, {o.out});
  return kExitOk;
}

int RunSimulate(const CLI::App& sub, const Options& o) {
  std::optional<std::string> config;
  if (!o.config.empty()) config = ReadFile(o.config, "--config");
  Dataset d;
  CString truth;
  CString warnings;
  Check(lkt_simulate(o.design.c_str(), config ? config->c_str() : nullptr, o.seed, &d.p,
                     &truth.p, &warnings.p),
        config ? "--config " + o.config : "--design " + o.design);
  if (!warnings.str().empty()) std::cerr << "warning: " << warnings.str();
  Check(lkt_dataset_write_csv(d.p, o.out.c_str()), "--out " + o.out);
  std::vector<std::string> outputs{o.out};
  if (!o.truth.empty()) {
    WriteFile(o.truth, truth.str(), "--truth");
    outputs.push_back(o.truth);
  }
  WriteManifest(o.out, sub, o, outputs);
  if (o.verbose) {
    std::cerr << lkt_dataset_num_students(d.p) << " students, " << lkt_dataset_num_trials(d.p)
              << " trials\n";
  }
  return kExitOk;
}

int RunReport(const Options& o) {
  std::vector<std::string> docs;
  std::vector<std::string> names;
  for (const auto& path : o.reports) {
    docs.push_back(ReadFile(path, "report"));
    names.push_back(path);
  }
  std::vector<const char*> doc_ptrs;
  std::vector<const char*> name_ptrs;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    doc_ptrs.push_back(docs[i].c_str());
    name_ptrs.push_back(names[i].c_str());
  }
  CString table;
  Check(lkt_report_render(doc_ptrs.data(), name_ptrs.data(), docs.size(),
                          o.format == "delimited" ? LKT_REPORT_DELIMITED : LKT_REPORT_TABLE,
                          &table.p),
        "report");
  if (o.out.empty()) {
    std::cout << table.str();
  } else {
    WriteFile(o.out, table.str(), "--out");
  }
  return kExitOk;
}

void AddColumns(CLI::App* sub, Columns& c) {
  sub->add_option("--col-student", c.student, "Student column")->capture_default_str();
  sub->add_option("--col-item", c.item, "Item column")->capture_default_str();
  sub->add_option("--col-kc", c.kc, "Knowledge component column")->capture_default_str();
  sub->add_option("--col-outcome", c.outcome, "Outcome column")->capture_default_str();
  sub->add_option("--col-time", c.time, "Time column (seconds)")->capture_default_str();
  sub->add_option("--col-phase", c.phase, "Phase column")->capture_default_str();
  sub->add_option("--col-category", c.category, "Category column")->capture_default_str();
  sub->add_option("--col-blocksize,--col-block-size", c.block_size, "Block size column")->capture_default_str();
  sub->add_flag("--sort-time", c.sort_time, "Sort each student's rows by time");
}

void AddSearch(CLI::App* sub, Search& s) {
  sub->add_option("--ridge", s.ridge, "Ridge penalty on the linear coefficients")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--restarts", s.restarts, "Outer search starts")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--max-evals", s.max_evals, "Outer evaluations per start")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void AddSeed(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "Random seed (falls back to LKT_SEQ_SEED)")
      ->envname("LKT_SEQ_SEED")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Logistic knowledge tracing with sequence features", "lkt-seq"};
  app.set_version_flag("--version", std::string("lkt-seq ") + lkt_version());
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.fallthrough();
  app.add_flag("-v,--verbose", o.verbose, "Progress and summaries on standard error");

  auto* fit = app.add_subcommand("fit", "Fit a model to a trial log");
  fit->add_option("--data", o.data, "Trial log (CSV or TSV)")->required();
  fit->add_option("--model", o.model, "Model formula")->required();
  fit->add_option("--name", o.name, "Model label");
  fit->add_option("--out", o.out, "Fit result JSON")->required();
  AddColumns(fit, o.columns);
  AddSearch(fit, o.search);
  AddSeed(fit, o);

  auto* cv = app.add_subcommand("cv", "Student-stratified repeated cross-validation");
  cv->add_option("--data", o.data, "Trial log (CSV or TSV)")->required();
  cv->add_option("--model", o.model, "Model formula")->required();
  cv->add_option("--name", o.name, "Model label");
  cv->add_option("--out", o.out, "CV report JSON; group tables are written beside it")
      ->required();
  cv->add_option("--folds", o.folds, "Folds per repeat")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  cv->add_option("--repeats", o.repeats, "Repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cv->add_option("--group-by", o.group_by, "Extra grouping keys, comma separated");
  cv->add_option("--filter", o.filter, "Row filter for the extra grouping, Col=value,...");
  cv->add_option("--r3-filter", o.r3_filter, "Filter restricting the r2 grouping to form r3");
  cv->add_option("--novel-column", o.novel_column, "Column flagging novel posttest items")
      ->capture_default_str();
  cv->add_option("--jobs", o.jobs, "Worker threads (0 = available parallelism)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  AddColumns(cv, o.columns);
  AddSearch(cv, o.search);
  AddSeed(cv, o);

  auto* features = app.add_subcommand("features", "Write per-trial feature columns");
  features->add_option("--data", o.data, "Trial log (CSV or TSV)")->required();
  features->add_option("--model", o.model, "Model formula")->required();
  features->add_option("--params", o.params, "Fit result JSON supplying nonlinear parameters");
  features->add_option("--out", o.out, "Feature table (TSV)")->required();
  AddColumns(features, o.columns);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic trial log");
  simulate->add_option("--design", o.design, "Design preset")
      ->check(CLI::IsMember({"bird", "blob", "custom"}))
      ->capture_default_str();
  simulate->add_option("--config", o.config, "JSON with \"design\" and \"truth\" objects");
  simulate->add_option("--out", o.out, "Trial log (CSV)")->required();
  simulate->add_option("--truth", o.truth, "Where to write the resolved design and truth");
  AddSeed(simulate, o);

  auto* report = app.add_subcommand("report", "Compare CV reports in one table");
  report->add_option("reports", o.reports, "CV report JSON files")->required();
  report->add_option("--format", o.format, "Output format")
      ->check(CLI::IsMember({"table", "delimited"}))
      ->capture_default_str();
  report->add_option("--out", o.out, "Output file (default standard output)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*fit) return RunFit(*fit, o);
    if (*cv) return RunCvCommand(*cv, o);
    if (*features) return RunFeatures(*features, o);
    if (*simulate) return RunSimulate(*simulate, o);
    if (*report) return RunReport(o);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
