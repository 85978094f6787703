#include <doctest.h>

#include <cmath>
#include <random>

#include "lktseq/features.hpp"
#include "lktseq/model.hpp"
#include "oracle.hpp"

using namespace lktseq;

namespace {

SequenceContext Ctx(std::vector<double> ages, std::vector<double> lags) {
  SequenceContext c;
  c.prior_count = ages.size();
  c.ages = std::move(ages);
  c.lags = std::move(lags);
  return c;
}

std::vector<TrialRecord> Categories(const std::vector<std::string>& cats) {
  std::vector<TrialRecord> out;
  for (std::size_t i = 0; i < cats.size(); ++i) {
    TrialRecord r;
    r.student_id = "s";
    r.item_id = "i" + std::to_string(i);
    r.kc_id = cats[i];
    r.category = cats[i];
    r.time = static_cast<double>(i);
    r.sequence_index = i;
    r.outcome = static_cast<int>(i % 2);
    out.push_back(r);
  }
  return out;
}

std::vector<StudentTrials> Students(std::vector<std::vector<TrialRecord>> streams) {
  std::vector<StudentTrials> out;
  for (std::size_t s = 0; s < streams.size(); ++s) {
    StudentTrials st;
    st.id = "s" + std::to_string(s);
    for (auto& t : streams[s]) t.student_id = st.id;
    st.trials = std::move(streams[s]);
    out.push_back(std::move(st));
  }
  return out;
}

}  // namespace

TEST_CASE("lineafm on a blocked run and an interleaved run") {
  const auto blocked = BuildContext(Categories({"A", "A", "A", "A"}));
  CHECK(FeatLineafm(blocked[3]) == 3);
  CHECK(FeatLineafm(blocked[3], ComparisonTag::kSame) == 2);
  CHECK(FeatLineafm(blocked[3], ComparisonTag::kDifferent) == 0);
  CHECK(FeatLineafm(blocked[0]) == 0);

  const auto inter = BuildContext(Categories({"A", "B", "A", "B"}));
  CHECK(FeatLineafm(inter[2]) == 1);
  CHECK(FeatLineafm(inter[2], ComparisonTag::kDifferent) == 0);
  CHECK(FeatLineafm(inter[3], ComparisonTag::kDifferent) == 1);
}

TEST_CASE("linesuc and linefail count by outcome") {
  auto s = Categories({"A", "A", "A", "A"});
  s[0].outcome = 1;
  s[1].outcome = 0;
  s[2].outcome = 1;
  const auto ctx = BuildContext(s);
  CHECK(FeatLinesuc(ctx[3]) == 2);
  CHECK(FeatLinefail(ctx[3]) == 1);
  CHECK(FeatLinesuc(ctx[0]) == 0);
  CHECK(FeatLinefail(ctx[0]) == 0);
  CHECK(FeatLinesuc(ctx[3], ComparisonTag::kSame) == 1);
  CHECK(FeatLinefail(ctx[3], ComparisonTag::kSame) == 1);
}

TEST_CASE("logitdec recurrence") {
  CHECK(FeatLogitdec({}, 0.9) == 0.0);
  const std::vector<int> h1{1, 1, 1, 0};
  CHECK(FeatLogitdec(h1, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const std::vector<int> h2{1, 1, 0};
  // 2.439 / 1.729 after three steps at w = 0.9
  CHECK(FeatLogitdec(h2, 0.9) == doctest::Approx(0.3440449125326298).epsilon(1e-14));
  CHECK(FeatLogitdec(h2, 0.9) == doctest::Approx(std::log(2.439 / 1.729)).epsilon(1e-14));
}

TEST_CASE("logitdec at w = 1 is the smoothed success-failure log ratio") {
  std::mt19937_64 gen(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<int> h(gen() % 40);
    int succ = 0;
    for (auto& y : h) {
      y = static_cast<int>(gen() % 2);
      succ += y;
    }
    const int fail = static_cast<int>(h.size()) - succ;
    CHECK(FeatLogitdec(h, 1.0) == doctest::Approx(std::log((succ + 1.0) / (fail + 1.0))).epsilon(1e-13));
  }
}

TEST_CASE("recency") {
  CHECK(FeatRecency(Ctx({}, {}), {0.5}) == 0.0);
  CHECK(FeatRecency(Ctx({1.0}, {}), {2.7}) == 1.0);
  CHECK(FeatRecency(Ctx({9.0, 4.0}, {5.0}), {0.5}) == 0.5);
  CHECK(FeatRecency(Ctx({0.0}, {}), {1.3}) == 1.0);
  for (double d : {0.0, 0.3, 1.0, 3.0}) {
    for (double t : {1.0, 2.5, 100.0, 1e6}) {
      const double v = FeatRecency(Ctx({t}, {}), {d});
      CHECK(v > 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("ppe") {
  CHECK(FeatPpe(Ctx({}, {}), {}) == 0.0);
  CHECK(FeatPpe(Ctx({1.0}, {}), {1.7, 0.3, 0.9, 0.4}) == 1.0);
  const double v = FeatPpe(Ctx({100.0, 60.0, 10.0}, {40.0, 50.0}), {0.6, 0.1, 0.04, 0.08});
  CHECK(v == doctest::Approx(0.8994752632743532).epsilon(1e-13));
}

TEST_CASE("ppe grows with spacing when ages are fixed") {
  const PpeParams p{0.6, 0.3, 0.2, 0.7};
  const std::vector<double> ages{500.0, 300.0, 200.0, 50.0};
  double previous = 0.0;
  for (double scale = 0.0; scale <= 1000.0; scale += 25.0) {
    const double v = FeatPpe(Ctx(ages, {scale, 2.0 * scale, 0.5 * scale}), p);
    CHECK(v >= previous);
    previous = v;
  }
}

TEST_CASE("base4") {
  CHECK(FeatBase4(Ctx({}, {}), {}) == 0.0);
  const Base4Params zero_x{0.0, 0.5, 0.4, 10.0};
  CHECK(FeatBase4(Ctx({90.0, 40.0}, {50.0}), zero_x) ==
        doctest::Approx(std::pow(2.0, 0.5) * std::pow(90.0, -0.4)).epsilon(1e-14));
  const Base4Params p{0.5, 0.0, 0.0, 1.0};
  CHECK(FeatBase4(Ctx({60.0, 30.0, 0.0}, {0.0, 0.0}), p) == doctest::Approx(1.0));
  CHECK(FeatBase4(Ctx({60.0, 30.0, 0.0}, {30.0, 30.0}), p) ==
        doctest::Approx(std::sqrt(31.0)).epsilon(1e-14));
}

TEST_CASE("AFM columns on a two-student, three-item toy set") {
  auto a = Categories({"A", "A", "B"});
  auto b = Categories({"B", "A"});
  const auto students = Students({a, b});
  const auto spec = ParseModel("logitdec(Anon.Student.Id)+intercept(Problem.Name)+lineafm(KC..Default.)");
  const auto layout = MakeLayout(spec, students, {});
  CHECK(layout.names == std::vector<std::string>{
                           "logitdec(Anon.Student.Id)", "intercept(Problem.Name)#i0",
                           "intercept(Problem.Name)#i1", "intercept(Problem.Name)#i2",
                           "lineafm(KC..Default.)"});
  const auto split = ParseModel(
      "logitdec(Anon.Student.Id)+intercept(Problem.Name)+lineafm(KC..Default.%Comparison%Same)+"
      "lineafm(KC..Default.%Comparison%Different)");
  const auto split_layout = MakeLayout(split, students, {});
  CHECK(split_layout.NumColumns() == layout.NumColumns() + 1);
  CHECK(split_layout.names.back() == "lineafm(KC..Default.%Comparison%Different)");
}

TEST_CASE("design rows follow student and sequence order") {
  const auto students = Students({Categories({"A", "B"}), Categories({"A"})});
  const auto spec = ParseModel("intercept(Problem.Name) + lineafm(KC..Default.)");
  const auto layout = MakeLayout(spec, students, {});
  const auto d = BuildDesignMatrix(spec, layout, students, InitialParams(spec));
  REQUIRE(d.NumRows() == 3);
  CHECK(d.rows[0].student == 0);
  CHECK(d.rows[1].trial == 1);
  CHECK(d.rows[2].student == 1);
  CHECK(d.y == std::vector<double>{0.0, 1.0, 0.0});
  CHECK(d.DenseRow(0) == std::vector<double>{1.0, 0.0, 0.0});
}

TEST_CASE("levels absent from the data give no column and unseen levels contribute nothing") {
  const auto train = Students({Categories({"A", "A"})});
  const auto test = Students({Categories({"A", "B", "C"})});
  const auto spec = ParseModel("intercept(KC..Default.) + lineafm(KC..Default.$)");
  const auto layout = MakeLayout(spec, train, {});
  CHECK(layout.names == std::vector<std::string>{"intercept(KC..Default.)#A", "lineafm(KC..Default.$)#A"});
  const auto d = BuildDesignMatrix(spec, layout, test, InitialParams(spec));
  CHECK(d.DenseRow(1) == std::vector<double>{0.0, 0.0});
  CHECK(d.DenseRow(2) == std::vector<double>{0.0, 0.0});
  CHECK(d.DenseRow(0) == std::vector<double>{1.0, 0.0});
  CHECK(d.EmptyColumns() == std::vector<std::string>{"lineafm(KC..Default.$)#A"});
}

TEST_CASE("design columns equal prefix recomputation on random streams") {
  const auto spec = ParseModel(
      "logitdec(Anon.Student.Id) + logitdec(KC..Default.) + intercept(Problem.Name) + "
      "lineafm(KC..Default.) + lineafm(KC..Default.%Comparison%Same) + "
      "lineafm(KC..Default.%Comparison%Different) + linesuc(KC..Default.%Comparison%Same) + "
      "linefail(KC..Default.%Comparison%Different) + lineafm(Problem.Name$) + "
      "recency(KC..Default.) + ppe(KC..Default.) + base4(KC..Default.)");
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int rep = 0; rep < 60; ++rep) {
    auto students = Students({oracle::RandomStream(gen, 80), oracle::RandomStream(gen, 40)});
    const auto layout = MakeLayout(spec, students, {});
    NlParams p = InitialParams(spec);
    p.values[0][0] = 0.05 + 0.95 * unit(gen);
    p.values[1][0] = 0.05 + 0.95 * unit(gen);
    p.values[9][0] = 3.0 * unit(gen);
    p.values[10] = {2.0 * unit(gen), unit(gen), unit(gen), unit(gen)};
    p.values[11] = {unit(gen), unit(gen), unit(gen), 0.1 + 100.0 * unit(gen)};
    const auto d = BuildDesignMatrix(spec, layout, students, p);
    for (std::size_t r = 0; r < d.NumRows(); ++r) {
      const auto& s = students[d.rows[r].student].trials;
      const std::size_t i = d.rows[r].trial;
      const auto row = d.DenseRow(r);
      auto col = [&](const std::string& name) {
        for (std::size_t c = 0; c < layout.names.size(); ++c) {
          if (layout.names[c] == name) return row[c];
        }
        return 0.0;
      };
      using oracle::Close;
      const auto kc = Component::kKc;
      CHECK(Close(row[0], oracle::Logitdec(s, i, Component::kStudent, p.values[0][0])));
      CHECK(Close(row[1], oracle::Logitdec(s, i, kc, p.values[1][0])));
      CHECK(col("intercept(Problem.Name)#" + s[i].item_id) == 1.0);
      CHECK(col("lineafm(KC..Default.)") == oracle::Count(s, i, kc, std::nullopt, -1));
      CHECK(col("lineafm(KC..Default.%Comparison%Same)") ==
            oracle::Count(s, i, kc, ComparisonTag::kSame, -1));
      CHECK(col("lineafm(KC..Default.%Comparison%Different)") ==
            oracle::Count(s, i, kc, ComparisonTag::kDifferent, -1));
      CHECK(col("linesuc(KC..Default.%Comparison%Same)") ==
            oracle::Count(s, i, kc, ComparisonTag::kSame, 1));
      CHECK(col("linefail(KC..Default.%Comparison%Different)") ==
            oracle::Count(s, i, kc, ComparisonTag::kDifferent, 0));
      CHECK(col("lineafm(Problem.Name$)#" + s[i].item_id) ==
            oracle::Count(s, i, Component::kItem, std::nullopt, -1));
      CHECK(Close(col("recency(KC..Default.)"), oracle::Recency(s, i, kc, p.values[9][0])));
      const auto& pp = p.values[10];
      CHECK(Close(col("ppe(KC..Default.)"), oracle::Ppe(s, i, kc, pp[0], pp[1], pp[2], pp[3])));
      const auto& bp = p.values[11];
      CHECK(Close(col("base4(KC..Default.)"), oracle::Base4(s, i, kc, bp[0], bp[1], bp[2], bp[3])));
      // Split partition: Same + Different + None-tagged predecessors = unsplit.
      CHECK(col("lineafm(KC..Default.%Comparison%Same)") +
                col("lineafm(KC..Default.%Comparison%Different)") +
                oracle::NonePrior(s, i, kc) ==
            col("lineafm(KC..Default.)"));
    }
  }
}

TEST_CASE("features are causal") {
  const auto spec = ParseModel(
      "logitdec(Anon.Student.Id) + lineafm(KC..Default.%Comparison%Same) + recency(KC..Default.) + "
      "ppe(KC..Default.) + base4(KC..Default.)");
  std::mt19937_64 gen(41);
  for (int rep = 0; rep < 20; ++rep) {
    auto original = oracle::RandomStream(gen, 60);
    auto edited = original;
    const std::size_t cut = edited.size() / 2;
    for (std::size_t j = cut; j < edited.size(); ++j) {
      edited[j].outcome = 1 - edited[j].outcome;
      edited[j].category = "Z";
      edited[j].kc_id = edited[j].kc_id + "x";
      edited[j].time += 1000.0;
    }
    const auto a = Students({original});
    const auto b = Students({edited});
    const auto layout = MakeLayout(spec, a, {});
    const auto da = BuildDesignMatrix(spec, layout, a, InitialParams(spec));
    const auto db = BuildDesignMatrix(spec, layout, b, InitialParams(spec));
    for (std::size_t r = 0; r < cut; ++r) CHECK(da.DenseRow(r) == db.DenseRow(r));
  }
}

TEST_CASE("streaming evaluation matches the batch design") {
  const auto spec = ParseModel(
      "logitdec(Anon.Student.Id) + intercept(Problem.Name) + lineafm(KC..Default.%Comparison%Different) + "
      "linefail(KC..Default.) + recency(KC..Default.) + ppe(KC..Default.)");
  std::mt19937_64 gen(8);
  const auto students = Students({oracle::RandomStream(gen, 120)});
  const auto layout = MakeLayout(spec, students, {});
  const auto params = InitialParams(spec);
  const auto d = BuildDesignMatrix(spec, layout, students, params);
  FeatureStream stream(spec, layout, params);
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t i = 0; i < students[0].trials.size(); ++i) {
    row.clear();
    stream.Row(students[0].trials[i], row);
    std::vector<double> dense(layout.NumColumns(), 0.0);
    for (auto [c, v] : row) dense[c] = v;
    CHECK(dense == d.DenseRow(i));
    stream.Commit(students[0].trials[i]);
  }
}

TEST_CASE("initial parameters use pinned values") {
  const auto spec = ParseModel("recency(KC..Default., d=0.25) + ppe(KC..Default., m=0.5) + lineafm(KC..Default.)");
  const auto p = InitialParams(spec);
  CHECK(p.values[0] == std::vector<double>{0.25});
  CHECK(p.values[1] == std::vector<double>{0.6, 0.1, 0.04, 0.5});
  CHECK(p.values[2].empty());
  CHECK(TermLabel(spec.terms[0], {}) == "recency(KC..Default.)");
}
