#pragma once

// Block Lanczos with full reorthogonalisation for the largest eigenpairs of a
// symmetric positive operator. Paired with a shift-invert operator
// (sigma - A)^-1 it returns the eigenvalues of A closest to sigma from below.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "mmwg/error.hpp"

namespace mmwg {

struct KrylovOptions {
  int block_size = 4;
  int max_dimension = 4000;
  double tolerance = 1e-10;  ///< relative Ritz residual
  std::uint64_t seed = 0x5eedULL;
};

struct KrylovResult {
  Eigen::VectorXd values;   ///< descending
  Eigen::MatrixXd vectors;  ///< orthonormal columns
  int dimension = 0;        ///< Krylov basis size at convergence
};

/// Block operator: out = Op * in, both n x b.
using BlockOperator = std::function<void(const Eigen::MatrixXd& in, Eigen::MatrixXd& out)>;

namespace detail {

inline void fill_random(Eigen::MatrixXd& m, std::mt19937_64& rng) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = double(rng() >> 11) * 0x1.0p-53 - 0.5;
}

/// Orthogonalise w against basis(:, 0:m); returns the accumulated coefficients.
/// The trailing `local` columns are removed first, then one global pass, and a
/// second global pass only if the first one cancelled most of the norm.
inline Eigen::MatrixXd project_out(const Eigen::MatrixXd& basis, Eigen::Index m, Eigen::MatrixXd& w,
                                   Eigen::Index local = 0) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, w.cols());
  local = std::min(local, m);
  if (local > 0) {
    const auto tail = basis.middleCols(m - local, local);
    const Eigen::MatrixXd cl = tail.transpose() * w;
    w.noalias() -= tail * cl;
    c.bottomRows(local) += cl;
  }
  const auto v = basis.leftCols(m);
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd before = w.colwise().norm();
    const Eigen::MatrixXd cp = v.transpose() * w;
    w.noalias() -= v * cp;
    c += cp;
    const Eigen::VectorXd after = w.colwise().norm();
    if (((after.array() / before.array().max(1e-300)) > 0.5).all()) break;
  }
  return c;
}

/// Modified Gram-Schmidt within the block. Columns that vanish are replaced by
/// random directions orthogonal to everything so far (their R row stays zero).
inline Eigen::MatrixXd orthonormalize_block(const Eigen::MatrixXd& basis, Eigen::Index m, Eigen::MatrixXd& w,
                                            std::mt19937_64& rng) {
  const Eigen::Index b = w.cols();
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(b, b);
  const double scale = std::max(w.norm(), std::numeric_limits<double>::min());
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double c = w.col(i).dot(w.col(j));
        r(i, j) += c;
        w.col(j) -= c * w.col(i);
      }
    }
    double nrm = w.col(j).norm();
    if (nrm <= 1e-13 * scale) {
      Eigen::MatrixXd fresh(w.rows(), 1);
      for (int attempt = 0; attempt < 4; ++attempt) {
        fill_random(fresh, rng);
        project_out(basis, m, fresh);
        for (int pass = 0; pass < 2; ++pass)
          for (Eigen::Index i = 0; i < j; ++i) fresh.col(0) -= w.col(i).dot(fresh.col(0)) * w.col(i);
        if (fresh.norm() > 1e-8) break;
      }
      w.col(j) = fresh.col(0).normalized();
      r(j, j) = 0.0;
    } else {
      r(j, j) = nrm;
      w.col(j) /= nrm;
    }
  }
  return r;
}

}  // namespace detail

/// Largest eigenpairs of a symmetric positive operator of size n.
///
/// Stops once the leading min(max_count, #{theta >= theta_min}) Ritz pairs have
/// converged on two consecutive checks with an unchanged count.
inline KrylovResult block_lanczos_largest(const BlockOperator& op, Eigen::Index n, int max_count, double theta_min,
                                          const KrylovOptions& opt = {}) {
  KrylovResult res;
  if (n == 0 || max_count <= 0) return res;
  const Eigen::Index b = std::min<Eigen::Index>(std::max(opt.block_size, 1), n);
  const Eigen::Index cap = std::min<Eigen::Index>(std::max<Eigen::Index>(opt.max_dimension, 2 * b), n);

  std::mt19937_64 rng(opt.seed);
  Eigen::Index capacity = std::min<Eigen::Index>(cap, std::max<Eigen::Index>(8 * b, 4 * Eigen::Index(max_count)));
  capacity = std::max(capacity, b);
  Eigen::MatrixXd basis(n, capacity);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(capacity, capacity);

  Eigen::MatrixXd w(n, b);
  detail::fill_random(w, rng);
  detail::orthonormalize_block(basis, 0, w, rng);
  basis.leftCols(b) = w;
  Eigen::Index m = b;  // columns currently in the basis

  Eigen::Index last_check = 0;
  int stable_hits = 0;
  int last_target = -1;
  Eigen::MatrixXd out(n, b);

  while (true) {
    const Eigen::Index s = m - b;
    op(basis.middleCols(s, b), out);
    w = out;
    const Eigen::MatrixXd c = detail::project_out(basis, m, w, std::min<Eigen::Index>(m, 2 * b));
    h.block(0, s, m, b) = c;
    const Eigen::MatrixXd r = detail::orthonormalize_block(basis, m, w, rng);

    const bool full = m + b > cap;
    if (full || m - last_check >= std::max<Eigen::Index>(4 * b, m / 8)) {
      last_check = m;
      Eigen::MatrixXd t = h.topLeftCorner(m, m);
      t = 0.5 * (t + t.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      const Eigen::VectorXd& theta = es.eigenvalues();  // ascending
      const Eigen::MatrixXd& y = es.eigenvectors();
      int above = 0;
      for (Eigen::Index i = m - 1; i >= 0 && theta[i] >= theta_min; --i) ++above;
      const int target = std::min(max_count, above);
      bool converged = true;
      const int inspect = std::max(target, 1);
      for (int k = 0; k < inspect && k < m; ++k) {
        const Eigen::Index i = m - 1 - k;
        const double resid = (r * y.block(s, i, b, 1)).norm();
        if (resid > opt.tolerance * std::abs(theta[i])) {
          converged = false;
          break;
        }
      }
      stable_hits = (converged && target == last_target) ? stable_hits + 1 : (converged ? 1 : 0);
      last_target = target;
      if (stable_hits >= 2 || (converged && (full || m == n))) {
        res.values.resize(target);
        res.vectors.resize(n, target);
        for (int k = 0; k < target; ++k) {
          const Eigen::Index i = m - 1 - k;
          res.values[k] = theta[i];
          res.vectors.col(k).noalias() = basis.leftCols(m) * y.col(i);
        }
        res.dimension = int(m);
        return res;
      }
      if (full || m == n) {
        throw NumericalError("block Lanczos did not converge within " + std::to_string(cap) +
                             " basis vectors (" + std::to_string(target) + " wanted)");
      }
    }

    if (m + b > capacity) {
      const Eigen::Index grown = std::min<Eigen::Index>(cap, std::max(2 * capacity, m + b));
      basis.conservativeResize(Eigen::NoChange, grown);
      Eigen::MatrixXd hg = Eigen::MatrixXd::Zero(grown, grown);
      hg.topLeftCorner(capacity, capacity) = h;
      h.swap(hg);
      capacity = grown;
    }
    basis.middleCols(m, b) = w;
    h.block(m, s, b, b) = r;
    m += b;
  }
}

}  // namespace mmwg
