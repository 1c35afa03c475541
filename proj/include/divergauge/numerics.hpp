#pragma once

/**
 * Dense numerics used by every metric.
 *
 *  - SymMatrix / sym_eigendecompose: cyclic Jacobi on small dense symmetric
 *    matrices (per-prompt kernels are 50x50).
 *  - covariance_spectrum: leading covariance eigenvalues, through the N x N
 *    Gram matrix when the embedding dimension exceeds the row count.
 *  - knn_radii / kmeans: exact O(n^2) geometry and seeded k-means++.
 *
 * All functions are pure; they throw std::invalid_argument on bad input.
 */

#include "divergauge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace divergauge {

// ============================================================================
// SymMatrix
// ============================================================================

class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim, double fill = 0.0)
      : dim_(dim), entries_(dim * dim, fill) {}

  static SymMatrix identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.entries_[i * dim + i] = 1.0;
    return m;
  }

  // Builds from a row-major square buffer; rejects asymmetric input.
  static SymMatrix from_rows(std::size_t dim, std::span<const double> rows) {
    if (rows.size() != dim * dim) {
      throw std::invalid_argument("SymMatrix: expected " + std::to_string(dim * dim) +
                                  " entries, got " + std::to_string(rows.size()));
    }
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        if (rows[i * dim + j] != rows[j * dim + i]) {
          std::ostringstream os;
          os << "SymMatrix: entries (" << i << "," << j << ") and (" << j << "," << i
             << ") differ";
          throw std::invalid_argument(os.str());
        }
      }
    }
    m.entries_.assign(rows.begin(), rows.end());
    return m;
  }

  std::size_t dim() const { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * dim_ + j]; }

  // Writes both (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double v) {
    entries_[i * dim_ + j] = v;
    entries_[j * dim_ + i] = v;
  }

  std::span<const double> data() const { return entries_; }

  bool all_finite() const {
    return std::all_of(entries_.begin(), entries_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : entries_) m = std::max(m, std::abs(v));
    return m;
  }

  SymMatrix scaled(double factor) const {
    SymMatrix out = *this;
    for (double& v : out.entries_) v *= factor;
    return out;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<double> entries_;
};

// ============================================================================
// Spectrum
// ============================================================================

struct Spectrum {
  std::vector<double> eigenvalues;  // non-increasing
  // Row-major dim x eigenvalues.size(); column j pairs with eigenvalues[j].
  // Empty unless vectors were requested.
  std::vector<double> eigenvectors;
  std::size_t dim = 0;

  bool has_vectors() const { return !eigenvectors.empty(); }

  std::vector<double> vector(std::size_t j) const {
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < dim; ++i) v[i] = eigenvectors[i * eigenvalues.size() + j];
    return v;
  }

  double sum() const { return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0); }
};

// Noise tolerance for "non-negative" spectra of PSD matrices.
inline double psd_tolerance(const SymMatrix& m) { return 1e-9 * std::max(m.max_abs(), 1e-300); }

struct JacobiOptions {
  double relative_tol = 1e-12;  // off-diagonal norm vs Frobenius norm
  int max_sweeps = 100;
  bool want_vectors = false;
};

inline Spectrum sym_eigendecompose(const SymMatrix& m, JacobiOptions opts = {}) {
  if (!m.all_finite()) {
    for (std::size_t i = 0; i < m.dim(); ++i) {
      for (std::size_t j = 0; j < m.dim(); ++j) {
        if (!std::isfinite(m(i, j))) {
          std::ostringstream os;
          os << "sym_eigendecompose: non-finite entry at (" << i << "," << j << ")";
          throw std::invalid_argument(os.str());
        }
      }
    }
  }
  const std::size_t n = m.dim();
  std::vector<double> a(m.data().begin(), m.data().end());
  std::vector<double> v;
  if (opts.want_vectors) {
    v.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  }

  double frob2 = 0.0;
  for (double x : a) frob2 += x * x;
  const double threshold = opts.relative_tol * std::sqrt(frob2);

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    if (off_norm() <= threshold) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p];
          const double akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k];
          const double aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        a[p * n + q] = 0.0;
        a[q * n + p] = 0.0;
        if (!v.empty()) {
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v[k * n + p];
            const double vkq = v[k * n + q];
            v[k * n + p] = c * vkp - s * vkq;
            v[k * n + q] = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a[x * n + x] > a[y * n + y]; });

  Spectrum out;
  out.dim = n;
  out.eigenvalues.reserve(n);
  for (std::size_t idx : order) out.eigenvalues.push_back(a[idx * n + idx]);
  if (!v.empty()) {
    out.eigenvectors.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) out.eigenvectors[i * n + j] = v[i * n + order[j]];
  }
  return out;
}

// Clamps noise-level negatives to zero. A negative eigenvalue below -tol
// means the matrix was not PSD and is reported as an error.
inline std::vector<double> clamp_psd_spectrum(std::span<const double> eigenvalues, double tol,
                                              const char* who) {
  std::vector<double> out(eigenvalues.begin(), eigenvalues.end());
  for (double& l : out) {
    if (l < -tol) {
      std::ostringstream os;
      os << who << ": matrix is not positive semi-definite (eigenvalue " << l
         << " below tolerance -" << tol << ")";
      throw std::invalid_argument(os.str());
    }
    if (l < 0.0) l = 0.0;
  }
  return out;
}

// ============================================================================
// PointSet
// ============================================================================

class PointSet {
 public:
  PointSet() = default;
  PointSet(std::size_t n, std::size_t d) : n_(n), d_(d), coords_(n * d, 0.0) {}
  PointSet(std::size_t n, std::size_t d, std::vector<double> coords)
      : n_(n), d_(d), coords_(std::move(coords)) {
    if (coords_.size() != n_ * d_) {
      throw std::invalid_argument("PointSet: coordinate buffer has " +
                                  std::to_string(coords_.size()) + " values, expected " +
                                  std::to_string(n_ * d_));
    }
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      if (!std::isfinite(coords_[i])) {
        throw std::invalid_argument("PointSet: non-finite coordinate in row " +
                                    std::to_string(i / std::max<std::size_t>(d_, 1)));
      }
    }
  }

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  std::span<const double> row(std::size_t i) const { return {coords_.data() + i * d_, d_}; }
  std::span<double> row(std::size_t i) { return {coords_.data() + i * d_, d_}; }
  std::span<const double> data() const { return coords_; }

 private:
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> coords_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

// ============================================================================
// Covariance spectrum
// ============================================================================

// Leading eigenvalues of the sample covariance (divisor n-1) of the rows.
// Returns min(n, d) eigenvalues; when d > n the n x n Gram matrix of the
// centered rows is decomposed instead, which carries the same nonzero
// spectrum.
inline Spectrum covariance_spectrum(const PointSet& x) {
  const std::size_t n = x.size();
  const std::size_t d = x.dim();
  if (n < 2) {
    throw std::invalid_argument("covariance_spectrum: need at least 2 rows, got " +
                                std::to_string(n));
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (double& m : mean) m /= static_cast<double>(n);

  std::vector<double> centered(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = r[j] - mean[j];
  }
  const double denom = static_cast<double>(n - 1);

  if (d > n) {
    SymMatrix gram(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = i; k < n; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += centered[i * d + j] * centered[k * d + j];
        gram.set(i, k, s / denom);
      }
    }
    return sym_eigendecompose(gram);
  }

  SymMatrix cov(d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += centered[i * d + a] * centered[i * d + b];
      cov.set(a, b, s / denom);
    }
  }
  return sym_eigendecompose(cov);
}

// ============================================================================
// k-NN radii
// ============================================================================

// Distance from each point to its k-th nearest other point.
inline std::vector<double> knn_radii(const PointSet& p, std::size_t k) {
  const std::size_t n = p.size();
  if (k == 0 || k >= n) {
    throw std::invalid_argument("knn_radii: need 1 <= k < n (k=" + std::to_string(k) +
                                ", n=" + std::to_string(n) + ")");
  }
  std::vector<double> radii(n);
  std::vector<double> dists;
  dists.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    dists.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dists.push_back(euclidean_distance(p.row(i), p.row(j)));
    }
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     dists.end());
    radii[i] = dists[k - 1];
  }
  return radii;
}

// ============================================================================
// k-means
// ============================================================================

struct KMeansOptions {
  int max_iterations = 50;
  int restarts = 3;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  PointSet centroids;
  double inertia = 0.0;
};

namespace detail {

inline std::size_t nearest_centroid(std::span<const double> x, const PointSet& c, double* d2) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double dj = squared_distance(x, c.row(j));
    if (dj < best_d) {
      best_d = dj;
      best = j;
    }
  }
  if (d2) *d2 = best_d;
  return best;
}

inline PointSet kmeanspp_init(const PointSet& p, std::size_t clusters, Rng& rng) {
  const std::size_t n = p.size();
  PointSet c(clusters, p.dim());
  std::vector<double> mind(n, std::numeric_limits<double>::infinity());
  std::size_t chosen = rng.below(n);
  for (std::size_t m = 0; m < clusters; ++m) {
    if (m > 0) {
      double total = 0.0;
      for (double v : mind) total += v;
      if (total <= 0.0) {
        chosen = rng.below(n);
      } else {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          acc += mind[i];
          if (u < acc && mind[i] > 0.0) {
            chosen = i;
            break;
          }
        }
      }
    }
    std::copy(p.row(chosen).begin(), p.row(chosen).end(), c.row(m).begin());
    for (std::size_t i = 0; i < n; ++i)
      mind[i] = std::min(mind[i], squared_distance(p.row(i), c.row(m)));
  }
  return c;
}

inline KMeansResult lloyd(const PointSet& p, PointSet centroids, int max_iterations) {
  const std::size_t n = p.size();
  const std::size_t k = centroids.size();
  const std::size_t d = p.dim();
  std::vector<std::size_t> assign(n, k);
  std::vector<double> d2(n, 0.0);

  for (int it = 0; it < max_iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest_centroid(p.row(i), centroids, &d2[i]);
      if (a != assign[i]) {
        assign[i] = a;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      auto r = p.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[assign[i] * d + j] += r[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < d; ++j)
        centroids.row(c)[j] = sums[c * d + j] / static_cast<double>(counts[c]);
    }
    // Empty cluster: move it onto the point farthest from its own centroid.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double di = squared_distance(p.row(i), centroids.row(assign[i]));
        if (di > far_d && counts[assign[i]] > 1) {
          far_d = di;
          far = i;
        }
      }
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      std::copy(p.row(far).begin(), p.row(far).end(), centroids.row(c).begin());
      changed = true;
    }
  }

  KMeansResult res;
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    assign[i] = nearest_centroid(p.row(i), centroids, &d2[i]);
    res.inertia += d2[i];
  }
  res.assignments = std::move(assign);
  res.centroids = std::move(centroids);
  return res;
}

}  // namespace detail

// Seeded k-means++ with Lloyd refinement; keeps the lowest-inertia restart.
inline KMeansResult kmeans(const PointSet& p, std::size_t clusters, std::uint64_t seed,
                           KMeansOptions opts = {}) {
  if (clusters == 0 || clusters > p.size()) {
    throw std::invalid_argument("kmeans: need 1 <= clusters <= n (clusters=" +
                                std::to_string(clusters) + ", n=" + std::to_string(p.size()) +
                                ")");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(opts.restarts, 1); ++r) {
    Rng rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(r))));
    KMeansResult res =
        detail::lloyd(p, detail::kmeanspp_init(p, clusters, rng), opts.max_iterations);
    if (res.inertia < best.inertia) best = std::move(res);
  }
  return best;
}

}  // namespace divergauge
