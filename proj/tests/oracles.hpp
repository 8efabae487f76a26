#pragma once

// Independent reference computations used only by the tests. None of these
// call into the library's solver code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "l0recon/operators.hpp"
#include "l0recon/smlm.hpp"

namespace oracle {

using l0recon::Index;
using l0recon::Matrix;
using l0recon::Vector;

inline double largest_singular_value(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

inline Matrix gaussian_matrix(Index m, Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix a(m, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < m; ++i) a(i, j) = g(rng);
  return a;
}

inline Vector gaussian_vector(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

/// Dense SMLM matrix built pixel by pixel: blur each fine impulse with the
/// truncated Gaussian evaluated directly, then sum L x L blocks.
inline Matrix smlm_dense(const l0recon::SmlmParams& p) {
  const int fine = p.fine_size();
  const double sigma_px = (p.fwhm_nm / (2.0 * std::sqrt(2.0 * std::log(2.0)))) / p.fine_pixel_nm();
  const int radius = static_cast<int>(std::ceil(4.0 * sigma_px));
  double total = 0.0;
  for (int a = -radius; a <= radius; ++a)
    for (int b = -radius; b <= radius; ++b)
      total += std::exp(-0.5 * (a * a + b * b) / (sigma_px * sigma_px));

  Matrix out = Matrix::Zero(static_cast<Index>(p.coarse_size) * p.coarse_size,
                            static_cast<Index>(fine) * fine);
  for (int r0 = 0; r0 < fine; ++r0) {
    for (int c0 = 0; c0 < fine; ++c0) {
      const Index col = static_cast<Index>(r0) * fine + c0;
      for (int a = -radius; a <= radius; ++a) {
        for (int b = -radius; b <= radius; ++b) {
          const int r = r0 + a;
          const int c = c0 + b;
          if (r < 0 || c < 0 || r >= fine || c >= fine) continue;
          const double w = std::exp(-0.5 * (a * a + b * b) / (sigma_px * sigma_px)) / total;
          const Index row = static_cast<Index>(r / p.zoom) * p.coarse_size + c / p.zoom;
          out(row, col) += w;
        }
      }
    }
  }
  return out;
}

/// Euclidean projection onto {0 <= u <= 1, sum u <= k} by enumerating which
/// coordinates sit at 0, at 1 or in between, with and without the budget
/// active, and keeping the best feasible KKT point.
inline Vector capped_simplex(const Vector& w, double k) {
  const Index n = w.size();
  Index patterns = 1;
  for (Index i = 0; i < n; ++i) patterns *= 3;
  Vector best = Vector::Zero(n);
  double best_val = std::numeric_limits<double>::infinity();
  const double eps = 1e-12;
  for (Index code = 0; code < patterns; ++code) {
    std::vector<int> state(static_cast<std::size_t>(n));
    Index c = code;
    for (Index i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
    }
    for (int active = 0; active < 2; ++active) {
      double tau = 0.0;
      if (active) {
        double mass = 0.0;
        Index free = 0;
        for (Index i = 0; i < n; ++i) {
          if (state[static_cast<std::size_t>(i)] == 1) mass += 1.0;
          if (state[static_cast<std::size_t>(i)] == 2) {
            mass += w[i];
            ++free;
          }
        }
        if (free == 0) continue;
        tau = (mass - k) / static_cast<double>(free);
        if (tau < -eps) continue;
      }
      Vector u(n);
      bool ok = true;
      for (Index i = 0; i < n && ok; ++i) {
        switch (state[static_cast<std::size_t>(i)]) {
          case 0:
            u[i] = 0.0;
            ok = w[i] - tau <= eps;
            break;
          case 1:
            u[i] = 1.0;
            ok = w[i] - tau >= 1.0 - eps;
            break;
          default:
            u[i] = w[i] - tau;
            ok = u[i] >= -eps && u[i] <= 1.0 + eps;
        }
      }
      if (!ok || u.sum() > k + 1e-9) continue;
      const double val = (u - w).squaredNorm();
      if (val < best_val) {
        best_val = val;
        best = u;
      }
    }
  }
  return best;
}

/// Minimizer of a convex function on [lo, hi]: a coarse grid to bracket the
/// minimum, then golden-section refinement. Evaluated in long double, since
/// comparing values only resolves the argmin to the square root of the
/// working precision.
inline double golden_min(const std::function<long double(long double)>& f, double lo, double hi) {
  using R = long double;
  constexpr int kGrid = 2000;
  R best = lo;
  R best_val = f(lo);
  for (int i = 1; i <= kGrid; ++i) {
    const R t = lo + (R(hi) - R(lo)) * i / kGrid;
    const R v = f(t);
    if (v < best_val) {
      best_val = v;
      best = t;
    }
  }
  const R h = (R(hi) - R(lo)) / kGrid;
  R a = std::max(R(lo), best - h);
  R b = std::min(R(hi), best + h);
  const R phi = (std::sqrt(R(5)) - 1) / 2;
  R x1 = b - phi * (b - a);
  R x2 = a + phi * (b - a);
  R f1 = f(x1);
  R f2 = f(x2);
  for (int it = 0; it < 300 && b - a > 1e-18L; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    }
  }
  const R mid = (a + b) / 2;
  // Endpoints can win for functions whose minimum sits on the boundary.
  R arg = mid;
  R val = f(mid);
  for (R cand : {R(lo), R(hi)}) {
    if (f(cand) < val) {
      val = f(cand);
      arg = cand;
    }
  }
  return static_cast<double>(arg);
}

struct SupportOptimum {
  double value = std::numeric_limits<double>::infinity();
  Vector x;
};

/// min over supports S with |S| <= max_size of
///   min_{x >= 0, supp x in S} 1/2 ||Ax - d||^2 + lambda |S|.
/// The inner problem is solved exactly via unconstrained least squares on
/// every subset: a nonnegative least-squares minimizer is the unconstrained
/// least-squares solution on its own positive support.
inline SupportOptimum best_support(const Matrix& a, const Vector& d, Index max_size,
                                   double lambda) {
  const Index n = a.cols();
  SupportOptimum best;
  best.x = Vector::Zero(n);
  best.value = 0.5 * d.squaredNorm();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << n); ++mask) {
    std::vector<Index> s;
    for (Index i = 0; i < n; ++i)
      if (mask & (std::uint64_t{1} << i)) s.push_back(i);
    if (static_cast<Index>(s.size()) > max_size) continue;
    Matrix as(a.rows(), static_cast<Index>(s.size()));
    for (std::size_t j = 0; j < s.size(); ++j) as.col(static_cast<Index>(j)) = a.col(s[j]);
    const Vector xs = as.colPivHouseholderQr().solve(d);
    if (xs.minCoeff() < 0.0) continue;
    const double val = 0.5 * (as * xs - d).squaredNorm() + lambda * static_cast<double>(s.size());
    if (val < best.value) {
      best.value = val;
      best.x.setZero();
      for (std::size_t j = 0; j < s.size(); ++j) best.x[s[j]] = xs[static_cast<Index>(j)];
    }
  }
  return best;
}

/// Maximum number of one-to-one pairs within `tol`, by exhaustive search.
inline Index optimal_matches(const l0recon::MoleculeList& est, const l0recon::MoleculeList& gt,
                             double tol) {
  std::vector<bool> used(gt.size(), false);
  std::function<Index(std::size_t)> go = [&](std::size_t e) -> Index {
    if (e == est.size()) return 0;
    Index best = go(e + 1);
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used[g]) continue;
      if (std::hypot(est[e].x_nm - gt[g].x_nm, est[e].y_nm - gt[g].y_nm) > tol) continue;
      used[g] = true;
      best = std::max(best, 1 + go(e + 1));
      used[g] = false;
    }
    return best;
  };
  return go(0);
}

}  // namespace oracle
