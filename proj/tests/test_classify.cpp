#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "asefd/classify.hpp"
#include "asefd/error.hpp"
#include "oracles.hpp"

using namespace asefd;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<Label> y;
};

Blobs blobs(std::uint64_t seed, int per_class, double sep, int dims = 2) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Blobs b;
  b.x.resize(2 * per_class, dims);
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool fall = i % 2 == 0;
    for (int d = 0; d < dims; ++d) b.x(i, d) = g(rng) + (d == 0 ? (fall ? sep : -sep) : 0.0);
    b.y.push_back(fall ? Label::Fall : Label::Adl);
  }
  return b;
}

}  // namespace

TEST_SUITE("classify") {

TEST_CASE("standardizer") {
  Eigen::MatrixXd x(2, 2);
  x << 1, 5, 3, 5;
  const auto s = Standardizer::fit(x);
  CHECK(s.mean(0) == 2.0);
  CHECK(s.std(0) == doctest::Approx(std::sqrt(2.0)));
  const auto z = s.apply_rows(x);
  CHECK(z(0, 0) == doctest::Approx(-0.70710678));
  CHECK(z(1, 0) == doctest::Approx(0.70710678));
  CHECK(z(0, 1) == 0.0);
  CHECK(z(1, 1) == 0.0);
  CHECK(s.apply(s.mean).isZero(0.0));
}

TEST_CASE("SVM symmetric two-point problem") {
  Eigen::MatrixXd x(2, 2);
  x << 1, 0, -1, 0;
  const std::vector<Label> y{Label::Fall, Label::Adl};
  const auto m = train_svm(x, y);
  CHECK(std::fabs(predict_svm(m, Eigen::Vector2d(0, 0)).decision) <= 1e-6);
  CHECK(predict_svm(m, Eigen::Vector2d(2, 0)).label == Label::Fall);
  CHECK(predict_svm(m, Eigen::Vector2d(-2, 0)).label == Label::Adl);
}

TEST_CASE("SVM on blobs") {
  const auto b = blobs(1, 20, 3.0);
  const auto m = train_svm(b.x, b.y);
  double balance = 0.0;
  for (long i = 0; i < m.alpha.size(); ++i) {
    CHECK(m.alpha(i) >= 0.0);
    CHECK(m.alpha(i) <= 1.0);
    balance += m.coef(i);
  }
  CHECK(std::fabs(balance) <= 1e-6);
  CHECK(m.kkt_gap <= 1e-3);
  for (long i = 0; i < b.x.rows(); ++i) {
    const Eigen::VectorXd xi = b.x.row(i);
    const auto p = predict_svm(m, xi);
    CHECK(p.label == b.y[static_cast<std::size_t>(i)]);
    CHECK(p.decision == doctest::Approx(oracle::svm_decision(m.support_vectors, m.coef, m.bias, 1.0, xi)).epsilon(1e-9));
  }
  for (long i = 0; i < m.alpha.size(); ++i) {
    if (m.alpha(i) < 1.0 - 1e-8) {
      const Eigen::VectorXd sv = m.support_vectors.row(i);
      CHECK(std::fabs(std::fabs(predict_svm(m, sv).decision) - 1.0) <= 1e-3);
    }
  }
  CHECK(predict_svm(m, Eigen::Vector2d(5, 0)).label == Label::Fall);
  CHECK(predict_svm(m, Eigen::Vector2d(-5, 0)).label == Label::Adl);
}

TEST_CASE("SVM is invariant to row order") {
  const auto b = blobs(2, 25, 1.0, 3);
  std::vector<long> perm(b.x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
  Eigen::MatrixXd xp(b.x.rows(), b.x.cols());
  std::vector<Label> yp;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    xp.row(static_cast<long>(i)) = b.x.row(perm[i]);
    yp.push_back(b.y[static_cast<std::size_t>(perm[i])]);
  }
  const auto m1 = train_svm(b.x, b.y);
  const auto m2 = train_svm(xp, yp);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 2);
  for (int q = 0; q < 200; ++q) {
    const Eigen::Vector3d v(g(rng), g(rng), g(rng));
    const auto d1 = predict_svm(m1, v).decision;
    const auto d2 = predict_svm(m2, v).decision;
    if (std::fabs(d1) > 1e-2) CHECK(predict_svm(m1, v).label == predict_svm(m2, v).label);
    CHECK(d1 == doctest::Approx(d2).epsilon(5e-3).scale(1.0));
  }
}

TEST_CASE("SVM argument errors") {
  Eigen::MatrixXd x(2, 1);
  x << 0, 1;
  const std::vector<Label> same{Label::Fall, Label::Fall};
  try {
    train_svm(x, same);
    FAIL("expected SingleClass");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleClass);
  }
}

TEST_CASE("kNN") {
  SUBCASE("vote counts neighbours, not distance") {
    Eigen::MatrixXd x(4, 1);
    x << 1, -1, 0.5, 10;
    const std::vector<Label> y{Label::Fall, Label::Fall, Label::Adl, Label::Adl};
    const auto m = train_knn(x, y);
    CHECK(predict_knn(m, Eigen::VectorXd::Zero(1)) == Label::Fall);
  }
  SUBCASE("training points with agreeing neighbours") {
    Eigen::MatrixXd x(6, 1);
    x << 0, 0.1, 0.2, 5, 5.1, 5.2;
    const std::vector<Label> y{Label::Adl, Label::Adl, Label::Adl, Label::Fall, Label::Fall, Label::Fall};
    const auto m = train_knn(x, y);
    for (long i = 0; i < 6; ++i) CHECK(predict_knn(m, Eigen::VectorXd(x.row(i))) == y[static_cast<std::size_t>(i)]);
  }
  SUBCASE("exhaustive oracle and shift invariance") {
    const auto b = blobs(8, 60, 0.5, 4);
    const auto m = train_knn(b.x, b.y);
    Eigen::MatrixXd shifted = b.x;
    const Eigen::RowVector4d shift(3, -1, 0.5, 7);
    shifted.rowwise() += shift;
    const auto ms = train_knn(shifted, b.y);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g(0, 1.5);
    for (int q = 0; q < 300; ++q) {
      Eigen::Vector4d v(g(rng), g(rng), g(rng), g(rng));
      const auto p = predict_knn(m, v);
      CHECK(p == oracle::knn_exhaustive(b.x, b.y, v, 3));
      CHECK(predict_knn(ms, v + shift.transpose()) == p);
    }
  }
  SUBCASE("errors") {
    Eigen::MatrixXd x(2, 1);
    x << 0, 1;
    const std::vector<Label> y{Label::Fall, Label::Adl};
    CHECK_THROWS_AS(train_knn(x, y), Error);
    CHECK_THROWS_AS(train_knn(x, y, 2), Error);
  }
}

TEST_CASE("detector persistence") {
  const auto b = blobs(5, 15, 2.0, 3);
  const auto dir = std::filesystem::temp_directory_path();
  for (auto kind : {ClassifierKind::Svm, ClassifierKind::Knn}) {
    const auto d = fit_detector(b.x * 40.0, b.y, kind);
    CHECK(d.kind() == kind);
    const auto path = dir / ("asefd_test_" + to_string(kind) + ".fdm");
    d.save(path);
    const auto back = FallDetector::load(path);
    CHECK(back.kind() == kind);
    for (long i = 0; i < b.x.rows(); ++i) {
      const Eigen::VectorXd v = b.x.row(i) * 40.0;
      CHECK(back.predict(v) == d.predict(v));
    }
  }
  CHECK(parse_classifier("svm") == ClassifierKind::Svm);
  CHECK(parse_classifier("knn") == ClassifierKind::Knn);
  CHECK_THROWS_AS(parse_classifier("tree"), Error);
}

}  // TEST_SUITE
