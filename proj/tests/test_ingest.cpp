#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "asefd/error.hpp"
#include "asefd/ingest.hpp"
#include "asefd/preprocess.hpp"

using namespace asefd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("asefd_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const fs::path& path, const std::string& text) {
  std::ofstream(path) << text;
  return path;
}

Errc error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an asefd::Error");
  return Errc::Config;
}

double max_norm(const Trial& t) {
  double m = 0.0;
  for (const auto& s : t.samples) m = std::max(m, s.norm());
  return m;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("ADC conversion") {
  const AdcSpec adc{16.0, 13};
  CHECK(adc.scale() * 4096 == doctest::Approx(16.0).epsilon(1e-15));
  CHECK(adc.scale() * 0 == 0.0);
  CHECK_THROWS_AS((AdcSpec{16.0, 7}.scale()), Error);
  CHECK_THROWS_AS((AdcSpec{16.0, 17}.scale()), Error);

  const auto dir = scratch_dir("adc");
  const auto path = write_file(dir / "F01_SA01_R01.txt", "t,ax,ay,az\n0,4096,0,-4096\n");
  const auto trial = load_trial_csv(path, {}, adc, {"SA01", std::nullopt, 200.0});
  REQUIRE(trial.samples.size() == 1);
  CHECK(trial.samples[0].ax == 16.0);
  CHECK(trial.samples[0].ay == 0.0);
  CHECK(trial.samples[0].az == -16.0);
}

TEST_CASE("values already in g pass through") {
  const auto dir = scratch_dir("passthrough");
  const auto path = write_file(dir / "D03_SA02_R01.csv", "t,ax,ay,az\n0,0.1,-0.98,0.05\n0.005,0,1,0\n");
  const auto trial = load_trial_csv(path, {}, std::nullopt, {"SA02", std::nullopt, 200.0});
  REQUIRE(trial.samples.size() == 2);
  CHECK(trial.samples[0] == Sample{0.1, -0.98, 0.05});
  CHECK(trial.activity_code == "D03");
  CHECK(trial.label == Label::Adl);
  CHECK(trial.rate_hz == 200.0);

  // Loading is pure.
  CHECK(load_trial_csv(path, {}, std::nullopt, {"SA02", std::nullopt, 200.0}) == trial);
}

TEST_CASE("headerless, semicolon-terminated rows by column index") {
  const auto dir = scratch_dir("headerless");
  const auto path = write_file(dir / "F10_SA03_R02.txt", " 17, -179, -99, -18, -504, -352;\n 15, -174, -90, -12, -502, -360;\n");
  CsvSchema schema;
  schema.has_header = false;
  schema.t = "";
  schema.ax = "0";
  schema.ay = "1";
  schema.az = "2";
  const auto trial = load_trial_csv(path, schema, AdcSpec{16.0, 13}, {"SA03", std::nullopt, 200.0});
  REQUIRE(trial.samples.size() == 2);
  CHECK(trial.label == Label::Fall);
  CHECK(trial.samples[1].ay == doctest::Approx(-174 * 32.0 / 8192.0));
}

TEST_CASE("distinct load errors") {
  const auto dir = scratch_dir("errors");
  CHECK(error_code_of([&] { load_trial_csv(dir / "nope.csv", {}, std::nullopt, {"S", std::nullopt, 200}); }) ==
        Errc::MissingFile);
  const auto bad = write_file(dir / "F01_x.csv", "t,ax,ay,az\n0,0.1,abc,0\n");
  CHECK(error_code_of([&] { load_trial_csv(bad, {}, std::nullopt, {"S", std::nullopt, 200}); }) == Errc::MalformedRow);
  const auto empty = write_file(dir / "F01_y.csv", "t,ax,ay,az\n");
  CHECK(error_code_of([&] { load_trial_csv(empty, {}, std::nullopt, {"S", std::nullopt, 200}); }) == Errc::EmptyFile);
  const auto unknown = write_file(dir / "Q07_z.csv", "t,ax,ay,az\n0,0,0,1\n");
  CHECK(error_code_of([&] { load_trial_csv(unknown, {}, std::nullopt, {"S", std::nullopt, 200}); }) ==
        Errc::UnknownActivityCode);
  const auto huge = write_file(dir / "F01_w.csv", "t,ax,ay,az\n0,0,0,40\n");
  CHECK(error_code_of([&] { load_trial_csv(huge, {}, std::nullopt, {"S", std::nullopt, 200}); }) == Errc::MalformedRow);
}

TEST_CASE("label rules are configurable") {
  LabelRules rules;
  CHECK(rules.classify("F14") == Label::Fall);
  CHECK(rules.classify("A03") == Label::Adl);
  CHECK(rules.classify("Fall") == Label::Fall);
  CHECK(rules.classify("ADL") == Label::Adl);
  rules.exact.push_back({"A99", Label::Fall});
  CHECK(rules.classify("A99") == Label::Fall);
  CHECK_THROWS_AS(rules.classify("X1"), Error);
}

TEST_CASE("synthetic trials") {
  SUBCASE("seeded determinism") {
    CHECK(synth_trial(SynthKind::FallLike, 7, 200, 10) == synth_trial(SynthKind::FallLike, 7, 200, 10));
    CHECK_FALSE(synth_trial(SynthKind::FallLike, 7, 200, 10) == synth_trial(SynthKind::FallLike, 8, 200, 10));
  }
  SUBCASE("still stays below 1.5 g, fall exceeds 3 g") {
    CHECK(max_norm(synth_trial(SynthKind::AdlStill, 1, 200, 10)) < 1.5);
    CHECK(max_norm(synth_trial(SynthKind::FallLike, 1, 200, 10)) >= 3.0);
    CHECK(max_norm(synth_trial(SynthKind::AdlWalk, 1, 200, 10)) < 2.5);
  }
  SUBCASE("fall has exactly one interior global maximum") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      for (double rate : {200.0, 238.0, 50.0, 12.5}) {
        const auto t = synth_trial(SynthKind::FallLike, seed, rate, 4.0 + static_cast<double>(seed % 7));
        const auto peak = impact_index(t.samples);
        const double top = t.samples[peak].norm();
        int count = 0;
        for (const auto& s : t.samples) count += s.norm() == top;
        CHECK(count == 1);
        CHECK(peak > 0);
        CHECK(peak + 1 < t.samples.size());
      }
    }
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(synth_trial(SynthKind::AdlStill, 1, 0.0, 10), Error);
    CHECK_THROWS_AS(synth_trial(SynthKind::AdlStill, 1, 200, 3.9), Error);
  }
}

TEST_CASE("LOSO partition") {
  SUBCASE("one fold per subject, disjoint, conserving trials") {
    for (int subjects : {2, 3, 21}) {
      const auto m = synth_manifest({subjects, 4, 50.0, 5.0, 3});
      const auto folds = partition_loso(m);
      CHECK(folds.size() == static_cast<std::size_t>(subjects));
      std::size_t tested = 0;
      std::multiset<std::size_t> seen;
      for (const auto& f : folds) {
        tested += f.test_trials.size();
        seen.insert(f.test_trials.begin(), f.test_trials.end());
        for (auto i : f.train_trials) CHECK(m.trials[i].subject_id != f.test_subject);
        for (auto i : f.test_trials) CHECK(m.trials[i].subject_id == f.test_subject);
        CHECK(f.train_trials.size() + f.test_trials.size() == m.trials.size());
      }
      CHECK(tested == m.trials.size());
      for (std::size_t i = 0; i < m.trials.size(); ++i) CHECK(seen.count(i) == 1);
    }
  }
  SUBCASE("single subject is rejected") {
    const auto m = synth_manifest({1, 4, 50.0, 5.0, 3});
    CHECK(error_code_of([&] { partition_loso(m); }) == Errc::SingleSubject);
  }
}

TEST_CASE("manifest round trip through CSV files") {
  const auto dir = scratch_dir("manifest");
  const auto m = synth_manifest({3, 4, 50.0, 5.0, 11});
  const auto path = write_dataset(m, dir);
  const auto loaded = load_manifest(path);
  CHECK(loaded.dataset == DatasetKind::Synthetic);
  CHECK(loaded.vertical_axis == Axis::Z);
  REQUIRE(loaded.trials.size() == m.trials.size());
  for (std::size_t i = 0; i < m.trials.size(); ++i) CHECK(loaded.trials[i] == m.trials[i]);

  std::ofstream(dir / "excluding.json") << R"({"dataset":"fallalld","exclude_subjects":["S02"],
    "trials":[{"path":"trials/F01_S01_R01.csv","subject_id":"S01"},
              {"path":"trials/F01_S02_R01.csv","subject_id":"S02"}]})";
  const auto ex = load_manifest(dir / "excluding.json");
  CHECK(ex.trials.size() == 1);
  CHECK(ex.vertical_axis == Axis::Y);
  CHECK(ex.window_backward_s == 1.23);
  CHECK(ex.trials[0].rate_hz == 238.0);
}

}  // TEST_SUITE
