#pragma once

/**
 * Diversity and quality metrics.
 *
 * Per-prompt diversity:
 *   vendi_score        exp of the Shannon entropy of eig(K/N)
 *   truncated_entropy  Gaussian differential entropy over the N largest
 *                      covariance eigenvalues
 * Across-prompt quality/coverage against a reference set:
 *   improved_precision_recall  k-NN hypersphere manifold membership
 *   mauve_lite                 divergence frontier over k-means histograms
 * Significance:
 *   paired_ttest_one_tailed    H1: mean(a) > mean(b)
 */

#include "divergauge/features.hpp"
#include "divergauge/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace divergauge {

struct MetricValue {
  std::string name;
  double value = 0.0;
  std::size_t n_samples = 0;
  std::map<std::string, double> params;
  bool degenerate = false;
};

struct PRResult {
  double precision = 0.0;
  double recall = 0.0;
  std::size_t k = 3;
};

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 0.5;  // one-tailed, H1: mean(a) > mean(b)
  double mean_difference = 0.0;
  bool degenerate = false;  // zero variance of the differences
};

// ============================================================================
// Vendi Score
// ============================================================================

inline void check_similarity_matrix(const SymMatrix& k) {
  if (k.dim() == 0) throw std::invalid_argument("similarity matrix is empty");
  if (!k.all_finite()) throw std::invalid_argument("similarity matrix has non-finite entries");
  for (std::size_t i = 0; i < k.dim(); ++i) {
    if (k(i, i) != 1.0)
      throw std::invalid_argument("similarity matrix diagonal must be exactly 1 (row " +
                                  std::to_string(i) + ")");
    for (std::size_t j = 0; j < k.dim(); ++j)
      if (k(i, j) < -1.0 || k(i, j) > 1.0)
        throw std::invalid_argument("similarity entry outside [-1, 1] at row " +
                                    std::to_string(i));
  }
}

inline MetricValue vendi_score(const SymMatrix& kernel, std::string name = "vendi_score") {
  check_similarity_matrix(kernel);
  const std::size_t n = kernel.dim();
  const SymMatrix scaled = kernel.scaled(1.0 / static_cast<double>(n));
  const Spectrum spec = sym_eigendecompose(scaled);
  std::vector<double> lambda =
      clamp_psd_spectrum(spec.eigenvalues, psd_tolerance(scaled), "vendi_score");

  const double raw_sum = spec.sum();
  double sum = 0.0;
  for (double l : lambda) sum += l;
  if (std::abs(sum - raw_sum) > 1e-10)
    for (double& l : lambda) l /= sum;

  double h = 0.0;
  for (double l : lambda)
    if (l > 0.0) h -= l * std::log(l);

  MetricValue mv;
  mv.name = std::move(name);
  mv.value = std::clamp(std::exp(h), 1.0, static_cast<double>(n));
  mv.n_samples = n;
  return mv;
}

// ============================================================================
// Truncated Entropy
// ============================================================================

struct TruncatedEntropyOptions {
  double eigenvalue_floor = 1e-10;
};

inline MetricValue truncated_entropy(const PointSet& x, TruncatedEntropyOptions opts = {}) {
  if (x.size() < 2)
    throw std::invalid_argument("truncated_entropy: need at least 2 embeddings, got " +
                                std::to_string(x.size()));
  const std::size_t n = x.size();
  const Spectrum spec = covariance_spectrum(x);
  // Missing eigenvalues (d < n) are zeros of the n x n Gram route.
  double log_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = i < spec.eigenvalues.size() ? spec.eigenvalues[i] : 0.0;
    log_sum += std::log(std::max(l, opts.eigenvalue_floor));
  }
  MetricValue mv;
  mv.name = "truncated_entropy";
  mv.value = 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * std::numbers::e) +
             0.5 * log_sum;
  mv.n_samples = n;
  mv.params["eigenvalue_floor"] = opts.eigenvalue_floor;
  return mv;
}

inline MetricValue truncated_entropy(const EmbeddingMatrix& e, TruncatedEntropyOptions opts = {}) {
  if (e.rows < 2)
    throw std::invalid_argument("truncated_entropy: need at least 2 embeddings, got " +
                                std::to_string(e.rows));
  return truncated_entropy(e.to_points(), opts);
}

// ============================================================================
// Improved Precision / Recall
// ============================================================================

namespace detail {

// Fraction of `probe` points inside at least one k-NN ball of `support`.
inline double manifold_coverage(const PointSet& probe, const PointSet& support,
                                const std::vector<double>& radii) {
  std::size_t inside = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    for (std::size_t j = 0; j < support.size(); ++j) {
      if (euclidean_distance(probe.row(i), support.row(j)) <= radii[j]) {
        ++inside;
        break;
      }
    }
  }
  return static_cast<double>(inside) / static_cast<double>(probe.size());
}

}  // namespace detail

inline PRResult improved_precision_recall(const PointSet& gen, const PointSet& ref,
                                          std::size_t k = 3) {
  if (gen.size() <= k || ref.size() <= k)
    throw std::invalid_argument("improved_precision_recall: each set needs more than k=" +
                                std::to_string(k) + " points (gen " +
                                std::to_string(gen.size()) + ", ref " +
                                std::to_string(ref.size()) + ")");
  if (gen.dim() != ref.dim())
    throw std::invalid_argument("improved_precision_recall: dimension mismatch");
  const auto ref_radii = knn_radii(ref, k);
  const auto gen_radii = knn_radii(gen, k);
  PRResult r;
  r.k = k;
  r.precision = detail::manifold_coverage(gen, ref, ref_radii);
  r.recall = detail::manifold_coverage(ref, gen, gen_radii);
  return r;
}

inline PRResult improved_precision_recall(const EmbeddingMatrix& gen, const EmbeddingMatrix& ref,
                                          std::size_t k = 3) {
  return improved_precision_recall(gen.to_points(), ref.to_points(), k);
}

// ============================================================================
// MAUVE-lite
// ============================================================================

struct MauveOptions {
  std::size_t clusters = 0;  // 0: max(2, (n_gen + n_ref) / 10)
  double scale = 5.0;        // c in exp(-c * KL)
  std::size_t grid_points = 25;
  double smoothing = 1e-8;
  std::uint64_t seed = 25;
};

inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
  return std::max(s, 0.0);
}

// Area under the divergence frontier of two histograms over the same bins.
inline double divergence_frontier_area(const std::vector<double>& p, const std::vector<double>& q,
                                       double scale = 5.0, std::size_t grid_points = 25) {
  if (p.size() != q.size() || p.empty())
    throw std::invalid_argument("divergence_frontier_area: histogram size mismatch");
  std::vector<std::pair<double, double>> pts{{0.0, 1.0}, {1.0, 0.0}};
  std::vector<double> r(p.size());
  for (std::size_t g = 1; g <= grid_points; ++g) {
    const double w = static_cast<double>(g) / static_cast<double>(grid_points + 1);
    for (std::size_t i = 0; i < p.size(); ++i) r[i] = w * p[i] + (1.0 - w) * q[i];
    pts.emplace_back(std::exp(-scale * kl_divergence(q, r)), std::exp(-scale * kl_divergence(p, r)));
  }
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first < b.first || (a.first == b.first && a.second > b.second);
  });
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * 0.5 * (pts[i].second + pts[i - 1].second);
  return area;
}

inline MetricValue mauve_lite(const PointSet& gen, const PointSet& ref, MauveOptions opts = {}) {
  if (gen.dim() != ref.dim()) throw std::invalid_argument("mauve_lite: dimension mismatch");
  if (gen.size() == 0 || ref.size() == 0) throw std::invalid_argument("mauve_lite: empty set");
  const std::size_t total = gen.size() + ref.size();
  const std::size_t clusters =
      opts.clusters ? opts.clusters : std::max<std::size_t>(2, total / 10);
  if (total < 2 * clusters)
    throw std::invalid_argument("mauve_lite: need at least 2*clusters=" +
                                std::to_string(2 * clusters) + " points, got " +
                                std::to_string(total));

  MetricValue mv;
  mv.name = "mauve_lite";
  mv.n_samples = total;
  mv.params["clusters"] = static_cast<double>(clusters);
  mv.params["scale"] = opts.scale;
  mv.params["grid_points"] = static_cast<double>(opts.grid_points);

  // Union in a canonical (lexicographic) row order so the clustering, and
  // with it the score, does not depend on which set is passed first.
  struct Row {
    std::span<const double> x;
    bool from_gen;
  };
  std::vector<Row> rows;
  rows.reserve(total);
  for (std::size_t i = 0; i < gen.size(); ++i) rows.push_back({gen.row(i), true});
  for (std::size_t i = 0; i < ref.size(); ++i) rows.push_back({ref.row(i), false});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::lexicographical_compare(a.x.begin(), a.x.end(), b.x.begin(), b.x.end());
  });

  bool all_identical = true;
  for (std::size_t i = 1; i < rows.size() && all_identical; ++i)
    all_identical = std::equal(rows[i].x.begin(), rows[i].x.end(), rows[0].x.begin());
  if (all_identical) {
    mv.value = 1.0;
    mv.degenerate = true;
    return mv;
  }

  std::vector<double> coords;
  coords.reserve(total * gen.dim());
  for (const auto& r : rows) coords.insert(coords.end(), r.x.begin(), r.x.end());
  const PointSet pooled(total, gen.dim(), std::move(coords));
  const KMeansResult km = kmeans(pooled, clusters, opts.seed);

  std::vector<double> p(clusters, 0.0);
  std::vector<double> q(clusters, 0.0);
  for (std::size_t i = 0; i < total; ++i) (rows[i].from_gen ? p : q)[km.assignments[i]] += 1.0;
  auto normalize = [&](std::vector<double>& h) {
    double s = 0.0;
    for (double& v : h) s += (v += opts.smoothing);
    for (double& v : h) v /= s;
  };
  normalize(p);
  normalize(q);
  mv.value = divergence_frontier_area(p, q, opts.scale, opts.grid_points);
  return mv;
}

inline MetricValue mauve_lite(const EmbeddingMatrix& gen, const EmbeddingMatrix& ref,
                              MauveOptions opts = {}) {
  return mauve_lite(gen.to_points(), ref.to_points(), opts);
}

// ============================================================================
// Student t / paired t-test
// ============================================================================

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0.0 || b <= 0.0) throw std::invalid_argument("incomplete beta: a, b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// P(T > t) for Student's t with `df` degrees of freedom.
inline double student_t_upper_tail(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_upper_tail: df must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0.0 ? tail : 1.0 - tail;
}

inline TTestResult paired_ttest_one_tailed(const std::vector<double>& a,
                                           const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("paired_ttest: length mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  const std::size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired_ttest: need at least 2 pairs");

  std::vector<double> d(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = a[i] - b[i];
    mean += d[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult r;
  r.df = static_cast<double>(n - 1);
  r.mean_difference = mean;
  if (sd == 0.0) {
    if (mean == 0.0) {
      r.t = 0.0;
      r.p = 0.5;
    } else {
      r.degenerate = true;
      r.t = mean > 0 ? std::numeric_limits<double>::infinity()
                     : -std::numeric_limits<double>::infinity();
      r.p = mean > 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = student_t_upper_tail(r.t, r.df);
  return r;
}

}  // namespace divergauge
