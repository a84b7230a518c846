#pragma once

// Independent reference implementations used only by the tests. Nothing here
// calls into the code paths it checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "asefd/ingest.hpp"

namespace oracle {

// 0-based positions kept when keeping 1-based indices k = 1 + 2^alpha * n with
// 1 <= k <= n_s.
inline std::vector<std::size_t> downsample_positions(std::size_t n_s, int alpha) {
  std::vector<std::size_t> out;
  const std::size_t step = std::size_t{1} << alpha;
  for (std::size_t n = 0;; ++n) {
    const std::size_t k = 1 + step * n;
    if (k > n_s) break;
    out.push_back(k - 1);
  }
  return out;
}

inline bool all_equal(const std::vector<long double>& x) {
  for (auto v : x) {
    if (v != x[0]) return false;
  }
  return true;
}

// All 54 features computed with long double scalar loops.
inline std::array<double, 54> naive_features(const std::vector<std::array<double, 3>>& s, int vertical) {
  const std::size_t n = s.size();
  std::array<std::vector<long double>, 6> ch;
  for (auto& c : ch) c.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const long double x = s[j][0], y = s[j][1], z = s[j][2];
    ch[0][j] = x;
    ch[1][j] = y;
    ch[2][j] = z;
    ch[3][j] = std::sqrt(x * x + y * y + z * z);
    const long double a[3] = {x, y, z};
    ch[4][j] = std::fabs(a[vertical]);
    long double h = 0;
    for (int k = 0; k < 3; ++k) {
      if (k != vertical) h += a[k] * a[k];
    }
    ch[5][j] = std::sqrt(h);
  }

  std::array<double, 54> f{};
  for (int c = 0; c < 6; ++c) {
    const auto& v = ch[c];
    const bool flat = all_equal(v);
    long double sum = 0;
    for (auto x : v) sum += x;
    const long double mean = flat ? v[0] : sum / n;
    long double m2 = 0, m3 = 0, m4 = 0, hi = v[0], lo = v[0];
    for (auto x : v) {
      const long double d = x - mean;
      m2 += d * d;
      m3 += d * d * d;
      m4 += d * d * d * d;
      hi = std::max(hi, x);
      lo = std::min(lo, x);
    }
    const long double sd = flat ? 0 : std::sqrt(m2 / (n - 1));
    m2 /= n;
    m3 /= n;
    m4 /= n;
    f[0 + c] = static_cast<double>(mean);
    f[6 + c] = static_cast<double>(sd);
    f[12 + c] = static_cast<double>(sd * sd);
    f[18 + c] = static_cast<double>(hi);
    f[24 + c] = static_cast<double>(lo);
    f[30 + c] = static_cast<double>(hi - lo);
    f[36 + c] = flat ? 0.0 : static_cast<double>(m4 / (m2 * m2));
    f[42 + c] = flat ? 0.0 : static_cast<double>(m3 / std::pow(m2, 1.5L));
  }
  const int pairs[6][2] = {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}};
  for (int p = 0; p < 6; ++p) {
    const auto& a = ch[pairs[p][0]];
    const auto& b = ch[pairs[p][1]];
    if (all_equal(a) || all_equal(b)) {
      f[48 + p] = 0.0;
      continue;
    }
    long double ma = 0, mb = 0;
    for (std::size_t j = 0; j < n; ++j) {
      ma += a[j];
      mb += b[j];
    }
    ma /= n;
    mb /= n;
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t j = 0; j < n; ++j) {
      sab += (a[j] - ma) * (b[j] - mb);
      saa += (a[j] - ma) * (a[j] - ma);
      sbb += (b[j] - mb) * (b[j] - mb);
    }
    f[48 + p] = static_cast<double>(sab / std::sqrt(saa * sbb));
  }
  return f;
}

// Full scan: sort every training index by (distance, index) and vote.
inline asefd::Label knn_exhaustive(const Eigen::MatrixXd& pts, const std::vector<asefd::Label>& labels,
                                   const Eigen::VectorXd& q, int k) {
  std::vector<std::pair<double, long>> d;
  for (long i = 0; i < pts.rows(); ++i) {
    double s = 0;
    for (long c = 0; c < pts.cols(); ++c) s += (pts(i, c) - q(c)) * (pts(i, c) - q(c));
    d.push_back({std::sqrt(s), i});
  }
  std::sort(d.begin(), d.end());
  int falls = 0;
  for (int i = 0; i < k; ++i) falls += labels[static_cast<std::size_t>(d[static_cast<std::size_t>(i)].second)] == asefd::Label::Fall;
  return 2 * falls > k ? asefd::Label::Fall : asefd::Label::Adl;
}

// sum_i coef_i * exp(-|sv_i - x|^2 / s^2) + b with plain loops.
inline double svm_decision(const Eigen::MatrixXd& sv, const Eigen::VectorXd& coef, double bias, double scale,
                           const Eigen::VectorXd& x) {
  long double f = bias;
  for (long i = 0; i < sv.rows(); ++i) {
    long double d2 = 0;
    for (long c = 0; c < sv.cols(); ++c) d2 += (sv(i, c) - x(c)) * (sv(i, c) - x(c));
    f += coef(i) * std::exp(-d2 / (scale * scale));
  }
  return static_cast<double>(f);
}

inline double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a[i]) - b[i]);
  return static_cast<double>(s / a.size());
}

inline double rel_err(double a, double b, double floor = 0.0) {
  const double den = std::max({std::fabs(a), std::fabs(b), floor});
  return den == 0.0 ? 0.0 : std::fabs(a - b) / den;
}

}  // namespace oracle
