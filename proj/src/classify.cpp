#include "asefd/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "asefd/binio.hpp"
#include "asefd/error.hpp"

namespace asefd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Standardizer Standardizer::fit(const MatrixXd& x) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(Errc::TooFewSamples, "cannot fit a standardizer on no data");
  Standardizer s;
  s.mean = x.colwise().mean().transpose();
  s.std = VectorXd::Zero(x.cols());
  if (x.rows() > 1) {
    for (Index j = 0; j < x.cols(); ++j) {
      const double ss = (x.col(j).array() - s.mean(j)).square().sum();
      s.std(j) = std::sqrt(ss / static_cast<double>(x.rows() - 1));
    }
  }
  return s;
}

VectorXd Standardizer::apply(const VectorXd& v) const {
  if (v.size() != mean.size()) throw Error(Errc::GeometryMismatch, "feature dimension does not match standardizer");
  VectorXd out(v.size());
  for (Index j = 0; j < v.size(); ++j) out(j) = std[j] > 0.0 ? (v(j) - mean(j)) / std(j) : 0.0;
  return out;
}

MatrixXd Standardizer::apply_rows(const MatrixXd& x) const {
  MatrixXd out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) out.row(i) = apply(x.row(i).transpose()).transpose();
  return out;
}

double rbf_kernel(const VectorXd& u, const VectorXd& v, double kernel_scale) {
  return std::exp(-(u - v).squaredNorm() / (kernel_scale * kernel_scale));
}

double SvmModel::kernel(const VectorXd& u, const VectorXd& v) const { return rbf_kernel(u, v, params.kernel_scale); }

namespace {

double sign_of(Label l) { return l == Label::Fall ? 1.0 : -1.0; }

void check_training_set(const MatrixXd& x, std::span<const Label> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(Errc::InvalidArgument, "feature rows and labels differ in count");
  }
}

}  // namespace

SvmModel train_svm(const MatrixXd& x, std::span<const Label> labels, const SvmParams& params) {
  check_training_set(x, labels);
  const bool has_fall = std::find(labels.begin(), labels.end(), Label::Fall) != labels.end();
  const bool has_adl = std::find(labels.begin(), labels.end(), Label::Adl) != labels.end();
  if (!has_fall || !has_adl) throw Error(Errc::SingleClass, "SVM training needs both FALL and ADL samples");
  if (!(params.box > 0.0) || !(params.kernel_scale > 0.0)) {
    throw Error(Errc::InvalidArgument, "box constraint and kernel scale must be positive");
  }

  const Index n = x.rows();
  const double c = params.box;
  constexpr double kTau = 1e-12;
  constexpr double kClip = 1e-12;

  VectorXd y(n);
  for (Index i = 0; i < n; ++i) y(i) = sign_of(labels[static_cast<std::size_t>(i)]);

  // Q_ij = y_i y_j K_ij, kept in full.
  MatrixXd q(n, n);
  const double inv_s2 = 1.0 / (params.kernel_scale * params.kernel_scale);
  for (Index i = 0; i < n; ++i) {
    q(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double k = std::exp(-(x.row(i) - x.row(j)).squaredNorm() * inv_s2);
      q(i, j) = q(j, i) = y(i) * y(j) * k;
    }
  }

  VectorXd alpha = VectorXd::Zero(n);
  VectorXd grad = VectorXd::Constant(n, -1.0);
  const auto in_up = [&](Index t) { return (y(t) > 0 && alpha(t) < c) || (y(t) < 0 && alpha(t) > 0); };
  const auto in_low = [&](Index t) { return (y(t) > 0 && alpha(t) > 0) || (y(t) < 0 && alpha(t) < c); };

  SvmModel model;
  model.params = params;
  long iter = 0;
  double gap = 0.0;
  for (; iter < params.max_iterations; ++iter) {
    Index i = -1, j = -1;
    double g_max = -std::numeric_limits<double>::infinity();
    double g_min = std::numeric_limits<double>::infinity();
    for (Index t = 0; t < n; ++t) {
      const double v = -y(t) * grad(t);
      if (in_up(t) && v > g_max) {
        g_max = v;
        i = t;
      }
      if (in_low(t) && v < g_min) {
        g_min = v;
        j = t;
      }
    }
    gap = g_max - g_min;
    if (i < 0 || j < 0 || gap < params.tolerance) break;

    const double old_i = alpha(i), old_j = alpha(j);
    if (y(i) != y(j)) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (-grad(i) - grad(j)) / quad;
      const double diff = alpha(i) - alpha(j);
      alpha(i) += delta;
      alpha(j) += delta;
      if (diff > 0) {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = diff; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = -diff; }
      }
      if (diff > 0) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = c - diff; }
      } else {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = c + diff; }
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0) quad = kTau;
      const double delta = (grad(i) - grad(j)) / quad;
      const double sum = alpha(i) + alpha(j);
      alpha(i) -= delta;
      alpha(j) += delta;
      if (sum > c) {
        if (alpha(i) > c) { alpha(i) = c; alpha(j) = sum - c; }
      } else {
        if (alpha(j) < 0) { alpha(j) = 0; alpha(i) = sum; }
      }
      if (sum > c) {
        if (alpha(j) > c) { alpha(j) = c; alpha(i) = sum - c; }
      } else {
        if (alpha(i) < 0) { alpha(i) = 0; alpha(j) = sum; }
      }
    }
    for (Index t : {i, j}) {
      if (alpha(t) < kClip) alpha(t) = 0.0;
      if (alpha(t) > c - kClip) alpha(t) = c;
    }
    const double d_i = alpha(i) - old_i, d_j = alpha(j) - old_j;
    grad += q.col(i) * d_i + q.col(j) * d_j;
  }

  // Bias from free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum = 0.0;
  int n_free = 0;
  for (Index t = 0; t < n; ++t) {
    const double yg = y(t) * grad(t);
    if (alpha(t) >= c) {
      if (y(t) < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (alpha(t) <= 0) {
      if (y(t) > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum += yg;
    }
  }
  const double rho = n_free > 0 ? sum / n_free : (ub + lb) / 2.0;
  model.bias = -rho;
  model.iterations = iter;
  model.kkt_gap = gap;

  std::vector<Index> sv;
  for (Index t = 0; t < n; ++t) {
    if (alpha(t) > 0.0) sv.push_back(t);
  }
  model.support_vectors.resize(static_cast<Index>(sv.size()), x.cols());
  model.coef.resize(static_cast<Index>(sv.size()));
  model.alpha.resize(static_cast<Index>(sv.size()));
  for (std::size_t k = 0; k < sv.size(); ++k) {
    const auto kk = static_cast<Index>(k);
    model.support_vectors.row(kk) = x.row(sv[k]);
    model.alpha(kk) = alpha(sv[k]);
    model.coef(kk) = alpha(sv[k]) * y(sv[k]);
    model.sv_labels.push_back(labels[static_cast<std::size_t>(sv[k])]);
  }
  return model;
}

SvmPrediction predict_svm(const SvmModel& model, const VectorXd& x) {
  if (x.size() != model.support_vectors.cols() && model.support_vectors.rows() > 0) {
    throw Error(Errc::GeometryMismatch, "query dimension does not match the SVM");
  }
  const double inv_s2 = 1.0 / (model.params.kernel_scale * model.params.kernel_scale);
  double f = model.bias;
  for (Index i = 0; i < model.support_vectors.rows(); ++i) {
    f += model.coef(i) * std::exp(-(model.support_vectors.row(i).transpose() - x).squaredNorm() * inv_s2);
  }
  return {f > 0.0 ? Label::Fall : Label::Adl, f};
}

KnnModel train_knn(const MatrixXd& x, std::span<const Label> y, int k) {
  check_training_set(x, y);
  if (k < 1 || k % 2 == 0) throw Error(Errc::InvalidArgument, "k must be odd and positive");
  if (x.rows() < k) throw Error(Errc::TooFewSamples, "kNN needs at least k training points");
  return {x, std::vector<Label>(y.begin(), y.end()), k};
}

Label predict_knn(const KnnModel& model, const VectorXd& x) {
  if (x.size() != model.points.cols()) throw Error(Errc::GeometryMismatch, "query dimension does not match the kNN");
  const Index n = model.points.rows();
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = {(model.points.row(i).transpose() - x).squaredNorm(), i};
  const auto k = static_cast<std::size_t>(model.k);
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  int falls = 0;
  for (std::size_t i = 0; i < k; ++i) falls += model.labels[static_cast<std::size_t>(dist[i].second)] == Label::Fall;
  return 2 * falls > model.k ? Label::Fall : Label::Adl;
}

std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::Svm ? "svm" : "knn"; }

ClassifierKind parse_classifier(const std::string& text) {
  if (text == "svm" || text == "SVM") return ClassifierKind::Svm;
  if (text == "knn" || text == "kNN" || text == "KNN") return ClassifierKind::Knn;
  throw Error(Errc::InvalidArgument, "unknown classifier '" + text + "'");
}

// ---------------------------------------------------------------------------

ClassifierKind FallDetector::kind() const {
  return std::holds_alternative<SvmModel>(model) ? ClassifierKind::Svm : ClassifierKind::Knn;
}

Label FallDetector::predict(const VectorXd& raw_features) const {
  const VectorXd z = standardizer.apply(raw_features);
  if (const auto* svm = std::get_if<SvmModel>(&model)) return predict_svm(*svm, z).label;
  return predict_knn(std::get<KnnModel>(model), z);
}

FallDetector fit_detector(const MatrixXd& x, std::span<const Label> y, ClassifierKind kind, const SvmParams& svm) {
  FallDetector det;
  det.standardizer = Standardizer::fit(x);
  const MatrixXd z = det.standardizer.apply_rows(x);
  if (kind == ClassifierKind::Svm) det.model = train_svm(z, y, svm);
  else det.model = train_knn(z, y);
  return det;
}

namespace {

constexpr std::uint8_t kDetectorVersion = 1;

void put_vector(std::ostream& out, const VectorXd& v) {
  for (Index i = 0; i < v.size(); ++i) binio::put_f64(out, v(i));
}

VectorXd get_vector(std::istream& in, Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = binio::get_f64(in);
  return v;
}

}  // namespace

void FallDetector::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  binio::put_magic(out, "FDML");
  binio::put_u8(out, kDetectorVersion);
  binio::put_u8(out, kind() == ClassifierKind::Svm ? 1 : 2);
  const auto dim = standardizer.mean.size();
  binio::put_u32(out, static_cast<std::uint32_t>(dim));
  put_vector(out, standardizer.mean);
  put_vector(out, standardizer.std);
  if (const auto* svm = std::get_if<SvmModel>(&model)) {
    binio::put_f64(out, svm->params.box);
    binio::put_f64(out, svm->params.kernel_scale);
    binio::put_f64(out, svm->params.tolerance);
    binio::put_f64(out, svm->bias);
    binio::put_u32(out, static_cast<std::uint32_t>(svm->support_vectors.rows()));
    for (Index i = 0; i < svm->support_vectors.rows(); ++i) {
      binio::put_u8(out, svm->sv_labels[static_cast<std::size_t>(i)] == Label::Fall ? 1 : 0);
      binio::put_f64(out, svm->alpha(i));
      binio::put_f64(out, svm->coef(i));
      put_vector(out, svm->support_vectors.row(i).transpose());
    }
  } else {
    const auto& knn = std::get<KnnModel>(model);
    binio::put_u32(out, static_cast<std::uint32_t>(knn.k));
    binio::put_u32(out, static_cast<std::uint32_t>(knn.points.rows()));
    for (Index i = 0; i < knn.points.rows(); ++i) {
      binio::put_u8(out, knn.labels[static_cast<std::size_t>(i)] == Label::Fall ? 1 : 0);
      put_vector(out, knn.points.row(i).transpose());
    }
  }
}

FallDetector FallDetector::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "cannot read " + path.string());
  binio::expect_magic(in, "FDML");
  if (binio::get_u8(in) != kDetectorVersion) throw Error(Errc::BadFormat, "unsupported detector version");
  const auto kind = binio::get_u8(in);
  const auto dim = static_cast<Index>(binio::get_u32(in));
  FallDetector det;
  det.standardizer.mean = get_vector(in, dim);
  det.standardizer.std = get_vector(in, dim);
  if (kind == 1) {
    SvmModel svm;
    svm.params.box = binio::get_f64(in);
    svm.params.kernel_scale = binio::get_f64(in);
    svm.params.tolerance = binio::get_f64(in);
    svm.bias = binio::get_f64(in);
    const auto n = static_cast<Index>(binio::get_u32(in));
    svm.support_vectors.resize(n, dim);
    svm.alpha.resize(n);
    svm.coef.resize(n);
    for (Index i = 0; i < n; ++i) {
      svm.sv_labels.push_back(binio::get_u8(in) ? Label::Fall : Label::Adl);
      svm.alpha(i) = binio::get_f64(in);
      svm.coef(i) = binio::get_f64(in);
      svm.support_vectors.row(i) = get_vector(in, dim).transpose();
    }
    det.model = std::move(svm);
  } else if (kind == 2) {
    KnnModel knn;
    knn.k = static_cast<int>(binio::get_u32(in));
    const auto n = static_cast<Index>(binio::get_u32(in));
    knn.points.resize(n, dim);
    for (Index i = 0; i < n; ++i) {
      knn.labels.push_back(binio::get_u8(in) ? Label::Fall : Label::Adl);
      knn.points.row(i) = get_vector(in, dim).transpose();
    }
    det.model = std::move(knn);
  } else {
    throw Error(Errc::BadFormat, "unknown classifier kind in detector file");
  }
  return det;
}

}  // namespace asefd
