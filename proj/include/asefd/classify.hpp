#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "asefd/ingest.hpp"

namespace asefd {

// Z-score scaling fitted on training rows; zero-variance features map to 0.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;

  static Standardizer fit(const Eigen::MatrixXd& x);  // one row per sample
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;
};

struct SvmParams {
  double box = 1.0;           // C
  double kernel_scale = 1.0;  // sigma in exp(-|u - v|^2 / sigma^2)
  double tolerance = 1e-3;    // maximal KKT violation at exit
  long max_iterations = 10'000'000;
};

struct SvmModel {
  Eigen::MatrixXd support_vectors;  // one row per vector
  Eigen::VectorXd coef;             // alpha_i * y_i
  Eigen::VectorXd alpha;            // alpha_i, same order
  std::vector<Label> sv_labels;
  double bias = 0.0;
  SvmParams params;
  long iterations = 0;
  double kkt_gap = 0.0;             // m(alpha) - M(alpha) at exit

  double kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
};

struct SvmPrediction {
  Label label;
  double decision;
};

double rbf_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double kernel_scale);

/// Soft-margin dual solved by SMO with maximal-violating-pair selection.
/// FALL is the positive class.
SvmModel train_svm(const Eigen::MatrixXd& x, std::span<const Label> y, const SvmParams& params = {});
SvmPrediction predict_svm(const SvmModel& model, const Eigen::VectorXd& x);

struct KnnModel {
  Eigen::MatrixXd points;  // one row per training vector
  std::vector<Label> labels;
  int k = 3;
};

KnnModel train_knn(const Eigen::MatrixXd& x, std::span<const Label> y, int k = 3);
/// Majority vote of the k nearest rows by Euclidean distance; equal distances
/// prefer the lower training index.
Label predict_knn(const KnnModel& model, const Eigen::VectorXd& x);

enum class ClassifierKind { Svm, Knn };
std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier(const std::string& text);

// Standardizer plus either model, persisted as one "FDML" container.
struct FallDetector {
  Standardizer standardizer;
  std::variant<SvmModel, KnnModel> model;

  ClassifierKind kind() const;
  Label predict(const Eigen::VectorXd& raw_features) const;

  void save(const std::filesystem::path& path) const;
  static FallDetector load(const std::filesystem::path& path);
};

/// Fits the standardizer on x, then the requested classifier.
FallDetector fit_detector(const Eigen::MatrixXd& x, std::span<const Label> y, ClassifierKind kind,
                          const SvmParams& svm = {});

}  // namespace asefd
