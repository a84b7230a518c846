#include "asefd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "asefd/error.hpp"
#include "asefd/features.hpp"
#include "asefd/preprocess.hpp"
#include "asefd/rng.hpp"

namespace asefd {

using Eigen::Index;
using Eigen::MatrixXd;

void ConfusionMatrix::add(Label truth, Label predicted) {
  if (truth == Label::Fall) (predicted == Label::Fall ? tp : fn) += 1;
  else (predicted == Label::Adl ? tn : fp) += 1;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  tp += o.tp;
  tn += o.tn;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.tp < 0 || cm.tn < 0 || cm.fp < 0 || cm.fn < 0) {
    throw Error(Errc::InvalidArgument, "confusion counts must be non-negative");
  }
  const auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  return {ratio(cm.tp + cm.tn, cm.total()), ratio(cm.tp, cm.tp + cm.fn), ratio(cm.tn, cm.tn + cm.fp),
          ratio(cm.tp, cm.tp + cm.fp)};
}

std::string to_string(FrontEnd fe) { return fe == FrontEnd::Original ? "original" : "ase"; }

std::string front_end_label(FrontEnd fe, double l2_weight, double dropout) {
  if (fe == FrontEnd::Original) return "Original";
  if (l2_weight > 0 && dropout > 0) return "ASE (L2 & Dropout)";
  if (l2_weight > 0) return "ASE (L2)";
  if (dropout > 0) return "ASE (Dropout)";
  return "ASE";
}

void LeakageGuard::touch(const std::string& stage, std::span<const std::string> subjects) {
  auto& seen = seen_[stage];
  for (const auto& s : subjects) {
    if (s == test_subject_) {
      throw Error(Errc::LeakageDetected, "stage '" + stage + "' received data from held-out subject " + s);
    }
    seen.insert(s);
  }
}

ConfusionMatrix EvalReport::pooled() const {
  ConfusionMatrix cm;
  for (const auto& f : folds) cm += f.cm;
  return cm;
}

void average_folds(EvalReport& report) {
  std::array<double, 4> sum{};
  std::array<int, 4> count{};
  report.excluded = {};
  for (const auto& f : report.folds) {
    const std::optional<double>* m[4] = {&f.metrics.acc, &f.metrics.sen, &f.metrics.spe, &f.metrics.pre};
    for (int k = 0; k < 4; ++k) {
      if (*m[k]) {
        sum[k] += **m[k];
        ++count[k];
      } else {
        ++report.excluded[k];
      }
    }
  }
  std::optional<double>* out[4] = {&report.mean.acc, &report.mean.sen, &report.mean.spe, &report.mean.pre};
  for (int k = 0; k < 4; ++k) {
    *out[k] = count[k] > 0 ? std::optional<double>(sum[k] / count[k]) : std::nullopt;
  }
}

double rate_for_alpha(double base_rate_hz, int alpha) {
  check_alpha(alpha);
  return base_rate_hz / static_cast<double>(1 << alpha);
}

// ---------------------------------------------------------------------------

namespace {

std::string dataset_name(const DatasetManifest& m) { return to_string(m.dataset); }

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// Windows and frames that do not depend on any fold.
struct Prepared {
  std::vector<std::vector<Sample>> windows;
  double base_rate = 0.0;
};

Prepared prepare(const DatasetManifest& manifest) {
  if (manifest.trials.empty()) throw Error(Errc::InvalidArgument, "manifest has no trials");
  Prepared p;
  const WindowSpec spec{manifest.window_backward_s, manifest.window_forward_s};
  p.windows.reserve(manifest.trials.size());
  for (const auto& t : manifest.trials) p.windows.push_back(impact_window(t, spec));
  p.base_rate = manifest.trials.front().rate_hz;
  return p;
}

std::vector<FramePair> frame_pairs(const DatasetManifest& manifest, const Prepared& prep, int alpha) {
  std::vector<FramePair> pairs;
  pairs.reserve(prep.windows.size());
  for (std::size_t i = 0; i < prep.windows.size(); ++i) {
    pairs.push_back(make_frame_pair(prep.windows[i], alpha, manifest.trials[i].rate_hz));
  }
  return pairs;
}

// Features of the resampled low-rate frame, bypassing the autoencoder.
FeatureVector original_features(const Frame& lr, Axis vertical) {
  return frame_features(denormalize(resample_frame(lr, kHrPerAxis)), vertical);
}

std::vector<std::string> subjects_of(const DatasetManifest& m, std::span<const std::size_t> idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(m.trials[i].subject_id);
  return out;
}

void check_both_labels(const DatasetManifest& m, const LosoFold& fold) {
  bool fall = false, adl = false;
  for (auto i : fold.train_trials) (m.trials[i].label == Label::Fall ? fall : adl) = true;
  if (!fall || !adl) {
    throw Error(Errc::SingleClass, "training split for held-out subject " + fold.test_subject +
                                       " lacks one of the labels");
  }
}

MatrixXd feature_matrix(const std::vector<FeatureVector>& features, std::span<const std::size_t> idx) {
  MatrixXd x(static_cast<Index>(idx.size()), static_cast<Index>(kFeatureCount));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < kFeatureCount; ++c) x(static_cast<Index>(r), static_cast<Index>(c)) = features[idx[r]][c];
  }
  return x;
}

// Per-trial features for one fold and front end. Only the autoencoder path
// depends on the fold.
std::vector<FeatureVector> fold_features(const DatasetManifest& manifest, const std::vector<FramePair>& pairs,
                                         const std::vector<FeatureVector>* original, const LosoFold& fold,
                                         std::size_t fold_index, FrontEnd fe, int alpha, double l2, double dropout,
                                         const TrainSpec& train_spec, LeakageGuard& guard) {
  if (fe == FrontEnd::Original) return *original;

  std::vector<FramePair> train_pairs;
  train_pairs.reserve(fold.train_trials.size());
  for (auto i : fold.train_trials) train_pairs.push_back(pairs[i]);
  guard.touch("ase_training", subjects_of(manifest, fold.train_trials));

  TrainSpec spec = train_spec;
  spec.seed = mix_seed(train_spec.seed, static_cast<std::uint64_t>(fold_index) * 8u + static_cast<std::uint64_t>(alpha));
  const auto model = train(train_pairs, build_config(alpha, l2, dropout), spec).model;

  std::vector<Frame> lr_frames;
  lr_frames.reserve(pairs.size());
  std::vector<std::size_t> used;
  for (auto i : fold.train_trials) used.push_back(i);
  for (auto i : fold.test_trials) used.push_back(i);
  for (auto i : used) lr_frames.push_back(pairs[i].lr);
  const auto enhanced = enhance_batch(model, lr_frames);

  std::vector<FeatureVector> features(pairs.size());
  for (std::size_t k = 0; k < used.size(); ++k) {
    features[used[k]] = frame_features(denormalize(enhanced[k]), manifest.vertical_axis);
  }
  return features;
}

ConfusionMatrix classify_fold(const DatasetManifest& manifest, const std::vector<FeatureVector>& features,
                              const LosoFold& fold, ClassifierKind kind, const SvmParams& svm,
                              LeakageGuard& guard) {
  const auto train_subjects = subjects_of(manifest, fold.train_trials);
  const MatrixXd x_train = feature_matrix(features, fold.train_trials);
  std::vector<Label> y_train;
  for (auto i : fold.train_trials) y_train.push_back(manifest.trials[i].label);

  guard.touch("standardizer", train_subjects);
  guard.touch(to_string(kind), train_subjects);
  const FallDetector detector = fit_detector(x_train, y_train, kind, svm);

  ConfusionMatrix cm;
  for (auto i : fold.test_trials) {
    Eigen::VectorXd v(static_cast<Index>(kFeatureCount));
    for (std::size_t c = 0; c < kFeatureCount; ++c) v(static_cast<Index>(c)) = features[i][c];
    cm.add(manifest.trials[i].label, detector.predict(v));
  }
  return cm;
}

}  // namespace

std::vector<EvalReport> sweep(const DatasetManifest& manifest, const SweepSpec& spec) {
  std::vector<EvalReport> reports;
  if (spec.alphas.empty() || spec.classifiers.empty() || spec.front_ends.empty()) return reports;
  for (int a : spec.alphas) check_alpha(a);

  const auto folds = partition_loso(manifest);
  for (const auto& f : folds) check_both_labels(manifest, f);
  const Prepared prep = prepare(manifest);

  for (int alpha : spec.alphas) {
    const auto pairs = frame_pairs(manifest, prep, alpha);
    std::vector<FeatureVector> original;
    if (std::find(spec.front_ends.begin(), spec.front_ends.end(), FrontEnd::Original) != spec.front_ends.end()) {
      original.reserve(pairs.size());
      for (const auto& p : pairs) original.push_back(original_features(p.lr, manifest.vertical_axis));
    }

    // cells[fe][clf][fold]
    const std::size_t n_fe = spec.front_ends.size(), n_clf = spec.classifiers.size();
    std::vector<std::vector<std::vector<ConfusionMatrix>>> cells(
        n_fe, std::vector<std::vector<ConfusionMatrix>>(n_clf, std::vector<ConfusionMatrix>(folds.size())));

    parallel_for(folds.size(), spec.jobs, [&](std::size_t f) {
      const auto& fold = folds[f];
      for (std::size_t e = 0; e < n_fe; ++e) {
        LeakageGuard guard(fold.test_subject);
        const auto features = fold_features(manifest, pairs, &original, fold, f, spec.front_ends[e], alpha,
                                            spec.l2_weight, spec.dropout, spec.train, guard);
        for (std::size_t c = 0; c < n_clf; ++c) {
          cells[e][c][f] = classify_fold(manifest, features, fold, spec.classifiers[c], spec.svm, guard);
        }
        if (spec.observer) spec.observer(guard);
      }
    });

    for (std::size_t e = 0; e < n_fe; ++e) {
      for (std::size_t c = 0; c < n_clf; ++c) {
        EvalReport r;
        r.dataset = dataset_name(manifest);
        r.classifier = spec.classifiers[c];
        r.front_end = spec.front_ends[e];
        r.front_end_name = front_end_label(r.front_end, spec.l2_weight, spec.dropout);
        r.alpha = alpha;
        r.rate_hz = rate_for_alpha(prep.base_rate, alpha);
        r.seed = spec.train.seed;
        for (std::size_t f = 0; f < folds.size(); ++f) {
          FoldResult fr;
          fr.test_subject = folds[f].test_subject;
          fr.cm = cells[e][c][f];
          fr.metrics = metrics(fr.cm);
          fr.n_train = folds[f].train_trials.size();
          fr.n_test = folds[f].test_trials.size();
          r.folds.push_back(std::move(fr));
        }
        average_folds(r);
        reports.push_back(std::move(r));
      }
    }
  }
  return reports;
}

EvalReport run_loso(const DatasetManifest& manifest, const EvalOptions& options) {
  SweepSpec spec;
  spec.alphas = {options.alpha};
  spec.classifiers = {options.classifier};
  spec.front_ends = {options.front_end};
  spec.l2_weight = options.l2_weight;
  spec.dropout = options.dropout;
  spec.train = options.train;
  spec.svm = options.svm;
  spec.jobs = options.jobs;
  spec.observer = options.observer;
  auto reports = sweep(manifest, spec);
  return std::move(reports.front());
}

// ---------------------------------------------------------------------------
// Export

namespace {

std::string fmt_metric(const std::optional<double>& v) {
  if (!v) return "UNDEFINED";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string fmt_rate(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", std::round(r * 100.0) / 100.0);
  return buf;
}

nlohmann::json metric_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports, bool include_folds) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  out << "dataset,classifier,front_end,alpha,rate_hz,fold,TP,TN,FP,FN,acc,sen,spe,pre\n";
  const auto row = [&](const EvalReport& r, const std::string& fold, const ConfusionMatrix& cm, const Metrics& m) {
    out << r.dataset << ',' << to_string(r.classifier) << ',' << r.front_end_name << ',' << r.alpha << ','
        << fmt_rate(r.rate_hz) << ',' << fold << ',' << cm.tp << ',' << cm.tn << ',' << cm.fp << ',' << cm.fn << ','
        << fmt_metric(m.acc) << ',' << fmt_metric(m.sen) << ',' << fmt_metric(m.spe) << ',' << fmt_metric(m.pre)
        << '\n';
  };
  for (const auto& r : reports) {
    if (include_folds) {
      for (const auto& f : r.folds) row(r, f.test_subject, f.cm, f.metrics);
    }
    row(r, "mean", r.pooled(), r.mean);
  }
}

void write_report_json(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json j;
    j["dataset"] = r.dataset;
    j["classifier"] = to_string(r.classifier);
    j["front_end"] = r.front_end_name;
    j["alpha"] = r.alpha;
    j["rate_hz"] = r.rate_hz;
    j["seed"] = r.seed;
    j["mean"] = {{"acc", metric_json(r.mean.acc)}, {"sen", metric_json(r.mean.sen)},
                 {"spe", metric_json(r.mean.spe)}, {"pre", metric_json(r.mean.pre)}};
    j["excluded_folds"] = {{"acc", r.excluded[0]}, {"sen", r.excluded[1]}, {"spe", r.excluded[2]}, {"pre", r.excluded[3]}};
    j["folds"] = nlohmann::json::array();
    for (const auto& f : r.folds) {
      j["folds"].push_back({{"fold", f.test_subject},
                            {"TP", f.cm.tp}, {"TN", f.cm.tn}, {"FP", f.cm.fp}, {"FN", f.cm.fn},
                            {"acc", metric_json(f.metrics.acc)}, {"sen", metric_json(f.metrics.sen)},
                            {"spe", metric_json(f.metrics.spe)}, {"pre", metric_json(f.metrics.pre)}});
    }
    doc.push_back(std::move(j));
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

void write_accuracy_table(const std::filesystem::path& path, std::span<const EvalReport> reports) {
  std::vector<double> rates;
  std::vector<std::pair<std::string, std::string>> rows;
  for (const auto& r : reports) {
    if (std::find(rates.begin(), rates.end(), r.rate_hz) == rates.end()) rates.push_back(r.rate_hz);
    const std::pair<std::string, std::string> key{to_string(r.classifier), r.front_end_name};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  std::sort(rates.begin(), rates.end(), std::greater<>());

  std::ofstream out(path);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  out << "classifier,front_end";
  for (double rate : rates) out << ',' << fmt_rate(rate);
  out << '\n';
  for (const auto& [clf, fe] : rows) {
    out << clf << ',' << fe;
    for (double rate : rates) {
      out << ',';
      for (const auto& r : reports) {
        if (to_string(r.classifier) == clf && r.front_end_name == fe && r.rate_hz == rate && r.mean.acc) {
          char buf[32];
          std::snprintf(buf, sizeof buf, "%.2f", *r.mean.acc * 100.0);
          out << buf;
        }
      }
    }
    out << '\n';
  }
}

}  // namespace asefd
