#pragma once

// Test-only reference computations. Each one takes a deliberately different
// route from the library code it checks (polynomial roots instead of
// rotations, full sorts instead of selection, quadrature instead of
// continued fractions) so agreement means something.

#include "divergauge/numerics.hpp"
#include "divergauge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

using divergauge::PointSet;
using divergauge::Rng;
using divergauge::SymMatrix;

inline SymMatrix random_symmetric(std::size_t n, Rng& rng, double scale = 1.0) {
  SymMatrix m(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) m.set(i, j, scale * (2.0 * rng.uniform() - 1.0));
  return m;
}

inline PointSet random_points(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0,
                              double offset = 0.0) {
  std::vector<double> c(n * d);
  for (double& v : c) v = offset + scale * rng.normal();
  return PointSet(n, d, std::move(c));
}

// Characteristic polynomial coefficients (ascending powers) by
// Faddeev-LeVerrier in extended precision.
inline std::vector<long double> characteristic_polynomial(const SymMatrix& a) {
  const std::size_t n = a.dim();
  std::vector<long double> c(n + 1, 0.0L);
  c[n] = 1.0L;
  std::vector<long double> m(n * n, 0.0L), am(n * n, 0.0L);
  for (std::size_t k = 1; k <= n; ++k) {
    // M_k = A M_{k-1} + c_{n-k+1} I
    std::vector<long double> next(n * n, 0.0L);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        long double s = 0.0L;
        for (std::size_t l = 0; l < n; ++l) s += static_cast<long double>(a(i, l)) * m[l * n + j];
        next[i * n + j] = s + (i == j ? c[n - k + 1] : 0.0L);
      }
    m = next;
    long double tr = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t l = 0; l < n; ++l) tr += static_cast<long double>(a(i, l)) * m[l * n + i];
    c[n - k] = -tr / static_cast<long double>(k);
  }
  return c;
}

inline long double eval_poly(const std::vector<long double>& c, long double x) {
  long double y = 0.0L;
  for (std::size_t i = c.size(); i-- > 0;) y = y * x + c[i];
  return y;
}

// All real roots of the characteristic polynomial inside the Gershgorin
// interval, found by a fine sign-change scan and bisection. Sorted
// descending. Returns fewer than n roots only for near-degenerate spectra.
inline std::vector<double> eigenvalues_by_polynomial_roots(const SymMatrix& a,
                                                           std::size_t scan = 200000) {
  const std::size_t n = a.dim();
  const auto c = characteristic_polynomial(a);
  long double lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double r = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) r += std::fabs(static_cast<long double>(a(i, j)));
    lo = std::min(lo, a(i, i) - r);
    hi = std::max(hi, a(i, i) + r);
  }
  lo -= 1e-6L;
  hi += 1e-6L;
  std::vector<double> roots;
  long double prev_x = lo;
  long double prev_y = eval_poly(c, lo);
  for (std::size_t s = 1; s <= scan; ++s) {
    const long double x = lo + (hi - lo) * static_cast<long double>(s) / scan;
    const long double y = eval_poly(c, x);
    if (y == 0.0L) {
      roots.push_back(static_cast<double>(x));
    } else if ((prev_y < 0) != (y < 0) && prev_y != 0.0L) {
      long double l = prev_x, r = x, fl = prev_y;
      for (int it = 0; it < 200; ++it) {
        const long double mid = 0.5L * (l + r);
        const long double fm = eval_poly(c, mid);
        if ((fm < 0) == (fl < 0)) {
          l = mid;
          fl = fm;
        } else {
          r = mid;
        }
      }
      roots.push_back(static_cast<double>(0.5L * (l + r)));
    }
    prev_x = x;
    prev_y = y;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

// k-th nearest other-point distance by sorting every distance.
inline std::vector<double> knn_radii_by_sorting(const PointSet& p, std::size_t k) {
  std::vector<double> radii;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < p.dim(); ++c) {
        const double diff = p.row(i)[c] - p.row(j)[c];
        s += diff * diff;
      }
      d.push_back(std::sqrt(s));
    }
    std::sort(d.begin(), d.end());
    radii.push_back(d[k - 1]);
  }
  return radii;
}

inline double coverage_double_loop(const PointSet& probe, const PointSet& support, std::size_t k) {
  const auto radii = knn_radii_by_sorting(support, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    bool inside = false;
    for (std::size_t j = 0; j < support.size(); ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < probe.dim(); ++c) {
        const double diff = probe.row(i)[c] - support.row(j)[c];
        s += diff * diff;
      }
      if (std::sqrt(s) <= radii[j]) inside = true;
    }
    if (inside) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probe.size());
}

// Upper tail of Student's t by composite Simpson quadrature of the density
// on [0, |t|] in extended precision.
inline double student_t_upper_tail_by_quadrature(double t, double df,
                                                 std::size_t intervals = 200000) {
  const long double nu = df;
  const long double log_norm = std::lgamma((nu + 1.0L) / 2.0L) - std::lgamma(nu / 2.0L) -
                               0.5L * std::log(nu * 3.14159265358979323846264338327950288L);
  auto density = [&](long double x) {
    return std::exp(log_norm - (nu + 1.0L) / 2.0L * std::log1p(x * x / nu));
  };
  const long double b = std::fabs(static_cast<long double>(t));
  const std::size_t m = intervals + (intervals % 2);
  const long double h = b / m;
  long double s = density(0.0L) + density(b);
  for (std::size_t i = 1; i < m; ++i) s += (i % 2 ? 4.0L : 2.0L) * density(h * i);
  const long double central = s * h / 3.0L;
  return static_cast<double>(t >= 0 ? 0.5L - central : 0.5L + central);
}

// Random orthogonal matrix (row-major d x d) from Gram-Schmidt on Gaussians.
inline std::vector<double> random_orthogonal(std::size_t d, Rng& rng) {
  std::vector<double> q(d * d);
  for (double& v : q) v = rng.normal();
  for (std::size_t i = 0; i < d; ++i) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += q[i * d + c] * q[j * d + c];
        for (std::size_t c = 0; c < d; ++c) q[i * d + c] -= dot * q[j * d + c];
      }
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += q[i * d + c] * q[i * d + c];
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < d; ++c) q[i * d + c] /= norm;
  }
  return q;
}

// Rows of x (n x d) multiplied by q^T, plus an optional shift.
inline std::vector<double> rotate_rows(const std::vector<double>& x, std::size_t n, std::size_t d,
                                       const std::vector<double>& q,
                                       const std::vector<double>& shift = {}) {
  std::vector<double> out(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q[r * d + c] * x[i * d + c];
      out[i * d + r] = s + (shift.empty() ? 0.0 : shift[r]);
    }
  return out;
}

}  // namespace oracle
