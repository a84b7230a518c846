// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "asefd/ase.hpp"
#include "asefd/classify.hpp"
#include "asefd/cost.hpp"
#include "asefd/error.hpp"
#include "asefd/eval.hpp"
#include "asefd/features.hpp"
#include "asefd/ingest.hpp"
#include "asefd/preprocess.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace asefd;

namespace {

// Pinned tolerances.
constexpr double kGradRelTol = 1e-4;
constexpr double kGradStep = 1e-4;
constexpr double kGradFloor = 1e-7;
constexpr double kOverfitMae = 0.02;
constexpr int kOverfitMaxEpochs = 2000;
constexpr double kFeatureRelTol = 1e-9;
constexpr double kFeatureFloor = 1e-12;
constexpr double kSvmDecisionRelTol = 1e-9;
constexpr double kSvmBalanceTol = 1e-6;
constexpr double kSvmKktTol = 1e-3;
constexpr double kMetricIdentityTol = 1e-12;
constexpr double kAccuracySlack = 0.02;
constexpr double kCostRelTol = 0.07;
constexpr double kConservationRelTol = 1e-15;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Check {
  bool pass = true;
  std::ostringstream notes;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) notes << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

// 1 ------------------------------------------------------------------------
Outcome downsampling_oracle() {
  std::mt19937_64 rng(101);
  Check c;
  int compositions = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng() % 5000;
    const int alpha = static_cast<int>(rng() % 8);
    Trial t;
    t.rate_hz = 200.0;
    for (std::size_t k = 0; k < n; ++k) t.samples.push_back({double(k), 0.0, 0.0});
    const auto d = downsample(t, alpha);
    const auto expect = oracle::downsample_positions(n, alpha);
    bool same = d.samples.size() == expect.size();
    for (std::size_t k = 0; same && k < expect.size(); ++k) same = d.samples[k].ax == double(expect[k]);
    c.require(same, "n=" + std::to_string(n) + " alpha=" + std::to_string(alpha));

    for (int a1 = 0; a1 <= alpha; ++a1) {
      const int a2 = alpha - a1;
      c.require(downsample(downsample(t, a1), a2).samples == d.samples,
                "composition " + std::to_string(a1) + "+" + std::to_string(a2));
      ++compositions;
    }
  }
  c.notes << "1000 cases, " << compositions << " compositions";
  return {c.pass, c.notes.str()};
}

// 2 ------------------------------------------------------------------------
Outcome architecture_table() {
  const std::vector<std::vector<int>> dense{
      {768, 768, 768, 768, 768},
      {384, 384, 384, 384, 768, 768},
      {192, 192, 192, 384, 768, 768},
      {96, 96, 96, 96, 192, 384, 768, 768},
      {48, 48, 48, 96, 192, 384, 768, 768},
      {24, 24, 48, 96, 192, 384, 768, 768},
      {12, 24, 48, 96, 192, 384, 768, 768},
      {12, 24, 48, 96, 192, 384, 768, 768},
  };
  const int channels[] = {40, 35, 30, 25, 20, 15, 10, 5};
  const int inputs[] = {768, 384, 192, 96, 48, 24, 12, 6};
  Check c;
  for (int a = 0; a <= 7; ++a) {
    const auto cfg = build_config(a);
    const auto shapes = layer_shapes(cfg);
    const std::string tag = "alpha " + std::to_string(a);
    c.require(cfg.in_len == inputs[a], tag + " input");
    c.require(cfg.channels == channels[a], tag + " channels");
    c.require(cfg.encoder_dense == dense[static_cast<std::size_t>(a)], tag + " dense widths");
    c.require(shapes.size() == dense[static_cast<std::size_t>(a)].size() + 4, tag + " layer count");
    c.require(shapes[0].kind == LayerKind::Conv3x3 && shapes[0].rows == channels[a] && shapes[0].cols == 9,
              tag + " first conv");
    c.require(shapes[1].kind == LayerKind::Conv3x3 && shapes[1].rows == channels[a] && shapes[1].cols == 9 * channels[a],
              tag + " second conv");
    const auto& dec_conv = shapes[shapes.size() - 2];
    c.require(dec_conv.kind == LayerKind::Conv3x3 && dec_conv.rows == 1, tag + " decoder conv");
    c.require(shapes.back().kind == LayerKind::Dense && shapes.back().rows == 768, tag + " decoder dense");
  }
  c.notes << "8 rows checked";
  return {c.pass, c.notes.str()};
}

// 3 ------------------------------------------------------------------------
Outcome gradient_check() {
  Check c;
  double worst = 0.0;
  std::size_t checked = 0;
  std::map<std::string, double> per_kind;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const double l2 = seed % 2 ? 1e-3 : 0.0;
    auto gc = gradcheck::make_case(1000 + seed, l2);
    const auto r = gradcheck::check(gc, kGradStep, kGradFloor);
    checked += r.checked;
    worst = std::max(worst, r.max_rel_err);
    c.require(r.max_rel_err <= kGradRelTol, "seed " + std::to_string(seed) + " " + r.worst);
  }
  // The reduced model has every layer type: conv, dense + ReLU, final dense.
  const auto shapes = layer_shapes(gradcheck::reduced_config(0.0));
  bool conv = false, relu_dense = false, linear_dense = false;
  for (const auto& s : shapes) {
    conv = conv || s.kind == LayerKind::Conv3x3;
    relu_dense = relu_dense || (s.kind == LayerKind::Dense && s.relu);
    linear_dense = linear_dense || (s.kind == LayerKind::Dense && !s.relu);
  }
  c.require(conv && relu_dense && linear_dense, "layer coverage");
  char buf[128];
  std::snprintf(buf, sizeof buf, "20 cases, %zu components, max rel err %.2e", checked, worst);
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

// 4 ------------------------------------------------------------------------
Outcome overfit_capacity() {
  std::vector<FramePair> pairs;
  const SynthKind kinds[] = {SynthKind::FallLike, SynthKind::AdlWalk, SynthKind::AdlStill};
  for (int i = 0; i < 20; ++i) {
    const auto t = synth_trial(kinds[i % 3], 4000 + static_cast<std::uint64_t>(i), 200.0, 10.0);
    pairs.push_back(make_frame_pair(impact_window(t, {1.44, 2.0}), 4, 200.0));
  }
  TrainSpec spec;
  spec.max_epochs = kOverfitMaxEpochs;
  spec.patience = kOverfitMaxEpochs;
  spec.stop_train_mae = kOverfitMae;
  spec.seed = 4;
  const auto cfg = build_config(4);
  const auto a = train(pairs, cfg, spec);
  const auto b = train(pairs, cfg, spec);

  Check c;
  const auto& last = a.history.back();
  c.require(last.train_mae < kOverfitMae, "training MAE not reached");
  c.require(last.epoch <= kOverfitMaxEpochs, "epoch budget");
  bool same = a.history.size() == b.history.size();
  for (std::size_t i = 0; same && i < a.history.size(); ++i) {
    same = a.history[i].train_mae == b.history[i].train_mae && a.history[i].val_mae == b.history[i].val_mae;
  }
  for (std::size_t l = 0; same && l < a.model.layers().size(); ++l) {
    same = a.model.layers()[l].weight == b.model.layers()[l].weight && a.model.layers()[l].bias == b.model.layers()[l].bias;
  }
  c.require(same, "rerun differs");
  char buf[128];
  std::snprintf(buf, sizeof buf, "training MAE %.4f after %d epochs, rerun identical: %s", last.train_mae, last.epoch,
                same ? "yes" : "no");
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

// 5 ------------------------------------------------------------------------
Frame frame_from(const std::vector<std::array<double, 3>>& s) {
  Frame f;
  f.per_axis_len = s.size();
  f.values.resize(3 * s.size());
  for (std::size_t j = 0; j < s.size(); ++j) {
    for (std::size_t a = 0; a < 3; ++a) f.values[a * s.size() + j] = s[j][a];
  }
  return f;
}

Outcome feature_oracle() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  Check c;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = i % 5 == 0 ? 3 + rng() % 20 : 256;
    const int vertical = static_cast<int>(rng() % 3);
    std::vector<std::array<double, 3>> s(n);
    const double spread = std::exp(u(rng));
    for (auto& v : s) {
      v = {spread * g(rng), spread * u(rng), 1.0 + spread * std::pow(g(rng), 3)};
    }
    const auto f = frame_features(frame_from(s), static_cast<Axis>(vertical));
    const auto expect = oracle::naive_features(s, vertical);
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      const double e = oracle::rel_err(f[k], expect[k], kFeatureFloor);
      worst = std::max(worst, e);
      c.require(e <= kFeatureRelTol, "frame " + std::to_string(i) + " " + feature_names()[k]);
    }
  }

  // Degenerate conventions, exact.
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<std::array<double, 3>> s(64);
    const double level = 0.3 + axis;
    for (auto& v : s) {
      v = {g(rng), g(rng), g(rng)};
      v[static_cast<std::size_t>(axis)] = level;
    }
    const auto f = frame_features(frame_from(s), Axis::Z);
    const std::string ch = axis == 0 ? "ax" : axis == 1 ? "ay" : "az";
    c.require(f.at("mean_" + ch) == level, "constant mean");
    c.require(f.at("std_" + ch) == 0.0 && f.at("var_" + ch) == 0.0, "constant std/var");
    c.require(f.at("max_" + ch) == level && f.at("min_" + ch) == level && f.at("range_" + ch) == 0.0, "constant extremes");
    c.require(f.at("kurtosis_" + ch) == 0.0 && f.at("skewness_" + ch) == 0.0, "constant moments");
    for (const auto& name : feature_names()) {
      if (name.rfind("corr_", 0) == 0 && name.find("_" + ch) != std::string::npos) {
        c.require(f.at(name) == 0.0, "constant correlation " + name);
      }
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "500 frames x 54 features, max rel err %.2e; constant-channel conventions exact", worst);
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

// 6 ------------------------------------------------------------------------
struct ToySet {
  Eigen::MatrixXd x;
  std::vector<Label> y;
};

ToySet toy(std::uint64_t seed, int per_class, double sep, int dims) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ToySet t;
  t.x.resize(2 * per_class, dims);
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool fall = i < per_class;
    for (int d = 0; d < dims; ++d) t.x(i, d) = 0.5 * g(rng) + (d == 0 ? (fall ? sep : -sep) : 0.0);
    t.y.push_back(fall ? Label::Fall : Label::Adl);
  }
  return t;
}

Outcome classifier_oracles() {
  Check c;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g(0.0, 1.0);

  // kNN against the exhaustive scan. Integer-valued features force many ties.
  int knn_queries = 0;
  for (int set = 0; set < 4; ++set) {
    const int dims = 2 + set;
    Eigen::MatrixXd x(80, dims);
    std::vector<Label> y;
    for (long i = 0; i < x.rows(); ++i) {
      for (long d = 0; d < dims; ++d) x(i, d) = set % 2 ? std::round(2 * g(rng)) : g(rng);
      y.push_back(rng() % 2 ? Label::Fall : Label::Adl);
    }
    const auto model = train_knn(x, y);
    for (int q = 0; q < 250; ++q, ++knn_queries) {
      Eigen::VectorXd v(dims);
      for (long d = 0; d < dims; ++d) v(d) = set % 2 ? std::round(2 * g(rng)) : g(rng);
      c.require(predict_knn(model, v) == oracle::knn_exhaustive(x, y, v, 3), "knn query");
    }
  }

  // SVM on toy sets: decision oracle, dual feasibility, KKT, training accuracy.
  double worst_decision = 0.0, worst_balance = 0.0, worst_gap = 0.0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const auto t = toy(seed, 20, 2.0, 2 + static_cast<int>(seed % 3));
    const auto m = train_svm(t.x, t.y);
    double balance = 0.0;
    for (long i = 0; i < m.alpha.size(); ++i) {
      c.require(m.alpha(i) >= 0.0 && m.alpha(i) <= m.params.box, "0 <= alpha <= C");
      balance += m.coef(i);
    }
    worst_balance = std::max(worst_balance, std::fabs(balance));
    worst_gap = std::max(worst_gap, m.kkt_gap);
    c.require(std::fabs(balance) <= kSvmBalanceTol, "sum alpha y");
    c.require(m.kkt_gap <= kSvmKktTol, "KKT violation");
    for (long i = 0; i < t.x.rows(); ++i) {
      const Eigen::VectorXd xi = t.x.row(i);
      const auto p = predict_svm(m, xi);
      c.require(p.label == t.y[static_cast<std::size_t>(i)], "training accuracy");
    }
    for (int q = 0; q < 200; ++q) {
      Eigen::VectorXd v(t.x.cols());
      for (long d = 0; d < v.size(); ++d) v(d) = 2.0 * g(rng);
      const double ours = predict_svm(m, v).decision;
      const double ref = oracle::svm_decision(m.support_vectors, m.coef, m.bias, m.params.kernel_scale, v);
      const double e = oracle::rel_err(ours, ref, 1e-300);
      worst_decision = std::max(worst_decision, e);
      c.require(e <= kSvmDecisionRelTol, "decision oracle");
    }
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "kNN %d queries; SVM decision rel err %.1e, |sum alpha y| %.1e, KKT gap %.1e, training acc 100%%",
                knn_queries, worst_decision, worst_balance, worst_gap);
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

// 7 ------------------------------------------------------------------------
Outcome metric_identities() {
  std::mt19937_64 rng(707);
  Check c;
  int undefined = 0;
  for (int i = 0; i < 1000; ++i) {
    auto draw = [&] { return rng() % 4 == 0 ? 0L : static_cast<long>(rng() % 500); };
    const ConfusionMatrix cm{draw(), draw(), draw(), draw()};
    const auto m = metrics(cm);
    const bool acc_def = cm.total() > 0, sen_def = cm.tp + cm.fn > 0, spe_def = cm.tn + cm.fp > 0,
               pre_def = cm.tp + cm.fp > 0;
    c.require(m.acc.has_value() == acc_def && m.sen.has_value() == sen_def && m.spe.has_value() == spe_def &&
                  m.pre.has_value() == pre_def,
              "undefined pattern");
    undefined += !sen_def + !spe_def + !pre_def + !acc_def;
    auto close = [](double lhs, long rhs) {
      return std::fabs(lhs - double(rhs)) <= kMetricIdentityTol * std::max(1.0, double(rhs));
    };
    if (m.sen) c.require(close(*m.sen * double(cm.tp + cm.fn), cm.tp), "SEN identity");
    if (m.spe) c.require(close(*m.spe * double(cm.tn + cm.fp), cm.tn), "SPE identity");
    if (m.pre) c.require(close(*m.pre * double(cm.tp + cm.fp), cm.tp), "PRE identity");
    if (m.acc) c.require(close(*m.acc * double(cm.total()), cm.tp + cm.tn), "ACC identity");
  }
  const auto zero = metrics({});
  c.require(!zero.acc && !zero.sen && !zero.spe && !zero.pre, "all-zero matrix");
  c.notes << "1000 matrices, " << undefined << " undefined metrics, all on zero denominators";
  return {c.pass, c.notes.str()};
}

// 8 ------------------------------------------------------------------------
Outcome loso_integrity() {
  const auto manifest = synth_manifest({3, 6, 50.0, 6.0, 808});
  SweepSpec spec;
  spec.alphas = {0, 1, 2, 3, 4, 5, 6, 7};
  spec.train.max_epochs = 2;
  spec.train.patience = 2;
  spec.train.seed = 8;
  std::mutex mu;
  std::size_t guards = 0;
  std::set<std::string> stages;
  bool clean = true;
  spec.observer = [&](const LeakageGuard& g) {
    std::lock_guard lock(mu);
    ++guards;
    for (const auto& [stage, subjects] : g.seen()) {
      stages.insert(stage);
      clean = clean && subjects.count(g.test_subject()) == 0;
    }
  };

  Check c;
  std::vector<EvalReport> reports;
  try {
    reports = sweep(manifest, spec);
  } catch (const Error& e) {
    c.require(false, "sweep threw " + std::string(errc_name(e.code())) + ": " + e.what());
    return {false, c.notes.str()};
  }
  const auto folds = partition_loso(manifest);
  c.require(clean, "guard saw the held-out subject");
  c.require(reports.size() == 8 * 2 * 2, "cell count");
  c.require(guards == 8 * folds.size() * 2, "observer calls");
  for (const char* s : {"ase_training", "standardizer", "svm", "knn"}) c.require(stages.count(s) == 1, s);
  long total = 0;
  for (const auto& r : reports) {
    c.require(r.folds.size() == distinct_subjects(manifest.trials).size(), "fold count");
    for (const auto& f : r.folds) c.require(f.cm.total() == static_cast<long>(f.n_test), "fold conservation");
    c.require(r.pooled().total() == static_cast<long>(manifest.trials.size()), "sweep conservation");
    total += r.pooled().total();
  }
  c.notes << reports.size() << " cells, " << guards << " guarded fold runs, " << total << " test predictions";
  return {c.pass, c.notes.str()};
}

// 9 ------------------------------------------------------------------------
Outcome direction_check() {
  const auto manifest = synth_manifest({6, 40, 200.0, 10.0, 909});
  SweepSpec spec;
  spec.alphas = {7};
  spec.classifiers = {ClassifierKind::Svm};
  spec.train.seed = 9;
  spec.train.max_epochs = 100;
  spec.train.patience = 10;
  const auto reports = sweep(manifest, spec);
  const double acc_orig = *reports.at(0).mean.acc;
  const double acc_ase = *reports.at(1).mean.acc;

  // Held-out reconstruction: train on the first five subjects, score the sixth.
  const WindowSpec window{manifest.window_backward_s, manifest.window_forward_s};
  const auto folds = partition_loso(manifest);
  const auto& fold = folds.back();
  std::vector<FramePair> train_pairs, test_pairs;
  for (auto i : fold.train_trials) train_pairs.push_back(make_frame_pair(impact_window(manifest.trials[i], window), 7, 200.0));
  for (auto i : fold.test_trials) test_pairs.push_back(make_frame_pair(impact_window(manifest.trials[i], window), 7, 200.0));
  const auto model = train(train_pairs, build_config(7), spec.train).model;
  // Scored with the training loss, in normalized units; the physical-unit
  // figures are reported alongside.
  double mae_ase = 0.0, mae_nn = 0.0, g_ase = 0.0, g_nn = 0.0;
  for (const auto& p : test_pairs) {
    const auto enhanced = enhance(model, p.lr);
    const auto nearest = upsample_nearest(p.lr);
    mae_ase += mae_loss(enhanced, p.hr);
    mae_nn += mae_loss(nearest, p.hr);
    const auto hr = denormalize(p.hr);
    g_ase += oracle::mean_abs_diff(denormalize(enhanced).values, hr.values);
    g_nn += oracle::mean_abs_diff(denormalize(nearest).values, hr.values);
  }
  const double n_test = double(test_pairs.size());
  mae_ase /= n_test;
  mae_nn /= n_test;
  g_ase /= n_test;
  g_nn /= n_test;

  Check c;
  c.require(acc_ase >= acc_orig - kAccuracySlack, "ASE accuracy below the original");
  c.require(mae_ase < mae_nn, "enhancement does not beat nearest-neighbour upsampling");
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "SVM acc ASE %.4f vs original %.4f; held-out MAE ASE %.4f vs nearest %.4f (in g: %.4f vs %.4f)",
                acc_ase, acc_orig, mae_ase, mae_nn, g_ase, g_nn);
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

// 10 -----------------------------------------------------------------------
Outcome cost_model() {
  const CostModel model;
  Check c;
  double worst_battery = 0.0, worst_response = 0.0;
  for (const auto& row : reference_cost_rows()) {
    const auto e = estimate(model, row.mflops);
    const double eb = std::fabs(*e.battery_life_h - row.battery_h) / row.battery_h;
    const double er = std::fabs(e.response_time_s - row.response_s) / row.response_s;
    worst_battery = std::max(worst_battery, eb);
    worst_response = std::max(worst_response, er);
    c.require(eb <= kCostRelTol, "battery " + std::to_string(row.mflops));
    c.require(er <= kCostRelTol, "response " + std::to_string(row.mflops));
    c.require(estimate(model, 2 * row.mflops).response_time_s == 2 * e.response_time_s, "linearity");
    c.require(estimate(model, 2 * row.mflops).power_ma == 2 * e.power_ma, "power linearity");
    c.require(std::fabs(*e.battery_life_h * e.power_ma - model.battery_mah) <= kConservationRelTol * model.battery_mah * 4,
              "battery * power");
  }
  const auto zero = estimate(model, 0.0);
  c.require(zero.power_ma == 0.0 && !zero.battery_life_h && zero.response_time_s == 0.0, "zero load");
  char buf[160];
  std::snprintf(buf, sizeof buf, "8 rows, max rel err battery %.1f%%, response %.1f%%", 100 * worst_battery,
                100 * worst_response);
  c.notes << buf;
  return {c.pass, c.notes.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 downsampling oracle", downsampling_oracle},
      {"2 architecture table", architecture_table},
      {"3 gradient check", gradient_check},
      {"4 overfit capacity", overfit_capacity},
      {"5 feature oracle", feature_oracle},
      {"6 classifier oracles", classifier_oracles},
      {"7 metric identities", metric_identities},
      {"8 LOSO integrity", loso_integrity},
      {"9 end-to-end direction", direction_check},
      {"10 cost model", cost_model},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
