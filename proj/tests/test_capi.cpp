#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "lktseq/lktseq.h"

namespace fs = std::filesystem;

namespace {

fs::path TempDir() {
  const auto dir = fs::temp_directory_path() / "lktseq_test_capi";
  fs::create_directories(dir);
  return dir;
}

lkt_dataset* Simulated(int students) {
  const std::string config = R"({"design": {"n_students": )" + std::to_string(students) + "}}";
  lkt_dataset* d = nullptr;
  char* truth = nullptr;
  REQUIRE(lkt_simulate("bird", config.c_str(), 3, &d, &truth, nullptr) == LKT_OK);
  CHECK(std::strstr(truth, "\"formula\"") != nullptr);
  lkt_string_free(truth);
  return d;
}

}  // namespace

TEST_CASE("version string") { CHECK(std::string(lkt_version()) == "0.1.0"); }

TEST_CASE("simulate, save, reload") {
  lkt_dataset* d = Simulated(4);
  CHECK(lkt_dataset_num_students(d) == 4);
  CHECK(lkt_dataset_num_trials(d) == 4 * 268);
  const auto path = (TempDir() / "sim.csv").string();
  REQUIRE(lkt_dataset_write_csv(d, path.c_str()) == LKT_OK);
  lkt_dataset* back = nullptr;
  REQUIRE(lkt_dataset_load(path.c_str(), nullptr, &back) == LKT_OK);
  CHECK(lkt_dataset_num_trials(back) == lkt_dataset_num_trials(d));
  CHECK(lkt_dataset_num_dropped(back) == 0);
  lkt_dataset_free(back);
  lkt_dataset_free(d);
}

TEST_CASE("fit and cross-validate through handles") {
  lkt_dataset* d = Simulated(6);
  lkt_model* m = nullptr;
  REQUIRE(lkt_model_parse("AFM: intercept(Problem.Name) + lineafm(KC..Default.)", nullptr, &m) == LKT_OK);
  CHECK(lkt_model_num_terms(m) == 2);
  char* text = nullptr;
  REQUIRE(lkt_model_render(m, &text) == LKT_OK);
  CHECK(std::string(text) == "AFM: intercept(Problem.Name) + lineafm(KC..Default.)");
  lkt_string_free(text);

  lkt_fit_options fo;
  lkt_fit_options_init(&fo);
  CHECK(fo.ridge == 1e-6);
  lkt_fit* f = nullptr;
  REQUIRE(lkt_fit_run(m, d, &fo, &f) == LKT_OK);
  CHECK(lkt_fit_converged(f) == 1);
  CHECK(lkt_fit_outer_evals(f) == 1);
  CHECK(lkt_fit_log_likelihood(f) < 0.0);
  CHECK(lkt_fit_num_coefficients(f) == 69);
  const char* name = nullptr;
  double value = 0.0;
  REQUIRE(lkt_fit_coefficient(f, 68, &name, &value) == LKT_OK);
  CHECK(std::string(name) == "lineafm(KC..Default.)");
  CHECK(lkt_fit_coefficient(f, 69, &name, &value) == LKT_INVALID_ARGUMENT);
  char* json = nullptr;
  REQUIRE(lkt_fit_to_json(f, &json) == LKT_OK);
  const auto features = (TempDir() / "features.tsv").string();
  CHECK(lkt_features_write(m, d, json, features.c_str()) == LKT_OK);
  CHECK(fs::file_size(features) > 0);
  lkt_string_free(json);
  lkt_fit_free(f);

  lkt_cv_options co;
  lkt_cv_options_init(&co);
  CHECK(co.folds == 5);
  CHECK(co.repeats == 10);
  co.folds = 3;
  co.repeats = 1;
  co.r3_filter = "Novel=1";
  co.group_by = "phase";
  co.filter = "phase=posttest";
  lkt_cv* cv = nullptr;
  REQUIRE(lkt_cv_run(m, d, &co, &cv) == LKT_OK);
  CHECK(lkt_cv_failed_folds(cv) == 0);
  REQUIRE(lkt_cv_num_groupings(cv) == 4);
  CHECK(std::string(lkt_cv_grouping_name(cv, 3)) == "custom");
  double auc = 0.0;
  CHECK(lkt_cv_metric(cv, "auc", &auc) == LKT_OK);
  CHECK(auc > 0.5);
  double r3 = 0.0;
  CHECK(lkt_cv_metric(cv, "r3", &r3) == LKT_OK);
  double custom = 0.0;
  CHECK(lkt_cv_metric(cv, "custom", &custom) == LKT_VALIDATION);
  CHECK(lkt_cv_metric(cv, "nope", &custom) == LKT_INVALID_ARGUMENT);
  char* table = nullptr;
  REQUIRE(lkt_cv_group_table(cv, 3, &table) == LKT_OK);
  CHECK(std::string(table).rfind("phase\tn\t", 0) == 0);
  lkt_string_free(table);
  char* report_json = nullptr;
  REQUIRE(lkt_cv_to_json(cv, &report_json) == LKT_OK);
  const char* docs[] = {report_json};
  const char* names[] = {"cv.json"};
  char* report = nullptr;
  REQUIRE(lkt_report_render(docs, names, 1, LKT_REPORT_DELIMITED, &report) == LKT_OK);
  CHECK(std::string(report).find("\nAFM\t") != std::string::npos);
  lkt_string_free(report);
  lkt_string_free(report_json);
  lkt_cv_free(cv);
  lkt_model_free(m);
  lkt_dataset_free(d);
}

TEST_CASE("errors map to status codes") {
  lkt_model* m = nullptr;
  CHECK(lkt_model_parse("lineafm(KC..Default.) + bogus(KC..Default.)", nullptr, &m) == LKT_PARSE);
  CHECK(m == nullptr);
  CHECK(lkt_last_parse_offset() == 24);
  CHECK(std::string(lkt_last_error()).find("offset 24") != std::string::npos);

  lkt_dataset* d = nullptr;
  CHECK(lkt_dataset_load("/nonexistent/file.csv", nullptr, &d) == LKT_IO);
  CHECK(lkt_dataset_load(nullptr, nullptr, &d) == LKT_INVALID_ARGUMENT);

  const auto path = (TempDir() / "bad.csv").string();
  {
    std::ofstream out(path);
    out << "Anon.Student.Id,Problem.Name,Outcome\ns1,i1,1\n";
  }
  CHECK(lkt_dataset_load(path.c_str(), nullptr, &d) == LKT_SCHEMA);
  CHECK(std::string(lkt_last_error()).find("KC..Default.") != std::string::npos);

  lkt_schema schema;
  lkt_schema_init(&schema);
  schema.kc = "Skill";
  CHECK(lkt_model_parse("lineafm(Skill)", &schema, &m) == LKT_OK);
  lkt_dataset* sim = Simulated(2);
  lkt_fit* f = nullptr;
  CHECK(lkt_fit_run(m, sim, nullptr, &f) == LKT_SCHEMA);
  lkt_model_free(m);
  lkt_dataset_free(sim);

  CHECK(lkt_simulate("swamp", nullptr, 1, &d, nullptr, nullptr) == LKT_INVALID_ARGUMENT);
  CHECK(lkt_simulate("bird", "{not json", 1, &d, nullptr, nullptr) == LKT_SCHEMA);
  lkt_model_free(nullptr);
  lkt_dataset_free(nullptr);
}
