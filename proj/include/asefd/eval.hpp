#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "asefd/ase.hpp"
#include "asefd/classify.hpp"
#include "asefd/ingest.hpp"

namespace asefd {

// FALL is the positive class.
struct ConfusionMatrix {
  long tp = 0, tn = 0, fp = 0, fn = 0;

  long total() const { return tp + tn + fp + fn; }
  void add(Label truth, Label predicted);
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  bool operator==(const ConfusionMatrix&) const = default;
};

// Empty optional = undefined (zero denominator).
struct Metrics {
  std::optional<double> acc, sen, spe, pre;
};

Metrics metrics(const ConfusionMatrix& cm);

enum class FrontEnd { Original, Ase };
std::string to_string(FrontEnd fe);

// "Original", "ASE", "ASE (L2)", "ASE (Dropout)", "ASE (L2 & Dropout)".
std::string front_end_label(FrontEnd fe, double l2_weight, double dropout);

/// Records which subjects each training stage of a fold consumed and throws
/// LeakageDetected the moment the held-out subject shows up.
class LeakageGuard {
 public:
  explicit LeakageGuard(std::string test_subject) : test_subject_(std::move(test_subject)) {}

  void touch(const std::string& stage, std::span<const std::string> subjects);
  const std::string& test_subject() const { return test_subject_; }
  const std::map<std::string, std::set<std::string>>& seen() const { return seen_; }

 private:
  std::string test_subject_;
  std::map<std::string, std::set<std::string>> seen_;
};

// Called once per fold (and front end) with the guard's record after training.
using LeakageObserver = std::function<void(const LeakageGuard&)>;

struct EvalOptions {
  int alpha = 7;
  ClassifierKind classifier = ClassifierKind::Svm;
  FrontEnd front_end = FrontEnd::Original;
  double l2_weight = 0.0;
  double dropout = 0.0;
  TrainSpec train;  // train.seed is the base seed; each fold derives its own
  SvmParams svm;
  int jobs = 1;
  LeakageObserver observer;
};

struct FoldResult {
  std::string test_subject;
  ConfusionMatrix cm;
  Metrics metrics;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

struct EvalReport {
  std::string dataset;
  ClassifierKind classifier = ClassifierKind::Svm;
  FrontEnd front_end = FrontEnd::Original;
  std::string front_end_name;
  int alpha = 0;
  double rate_hz = 0.0;
  std::uint64_t seed = 0;
  std::vector<FoldResult> folds;
  Metrics mean;                  // per-fold average over folds where defined
  std::array<int, 4> excluded{};  // folds left out of acc, sen, spe, pre

  ConfusionMatrix pooled() const;
};

/// Per-fold arithmetic means; undefined fold metrics are skipped and counted.
void average_folds(EvalReport& report);

EvalReport run_loso(const DatasetManifest& manifest, const EvalOptions& options);

struct SweepSpec {
  std::vector<int> alphas;
  std::vector<ClassifierKind> classifiers{ClassifierKind::Svm, ClassifierKind::Knn};
  std::vector<FrontEnd> front_ends{FrontEnd::Original, FrontEnd::Ase};
  double l2_weight = 0.0;
  double dropout = 0.0;
  TrainSpec train;
  SvmParams svm;
  int jobs = 1;
  LeakageObserver observer;
};

/// Every (alpha, front end, classifier) cell. One autoencoder is trained per
/// fold and alpha and shared by the classifiers. Order: alpha, then front end,
/// then classifier.
std::vector<EvalReport> sweep(const DatasetManifest& manifest, const SweepSpec& spec);

/// Effective rate after dropping to 1 / 2^alpha of base_rate_hz.
double rate_for_alpha(double base_rate_hz, int alpha);

void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports, bool include_folds);
void write_report_json(const std::filesystem::path& path, std::span<const EvalReport> reports);
/// Accuracy (%) pivot: one row per classifier x front end, one column per rate.
void write_accuracy_table(const std::filesystem::path& path, std::span<const EvalReport> reports);

}  // namespace asefd
