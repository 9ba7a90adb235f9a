#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include <Eigen/Core>

namespace xrm {

template <typename Scalar>
using DynVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using DynMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted in
// non-increasing order. Sweeps stop once every off-diagonal entry is below
// rel_tol * ||A||_F. Intended for the small (|L| x |L|) Gram matrices used
// here; cost is O(n^3) per sweep.
template <typename Derived>
DynVector<typename Derived::Scalar> symmetric_eigenvalues_jacobi(
    const Eigen::MatrixBase<Derived>& input,
    typename Derived::Scalar rel_tol = typename Derived::Scalar(1e-13), int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  DynMatrix<Scalar> a = input;
  const Eigen::Index n = a.rows();
  const Scalar threshold = rel_tol * a.norm();

  auto max_off_diagonal = [&] {
    Scalar m(0);
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) m = std::max(m, abs(a(p, q)));
    return m;
  };

  for (int sweep = 0; sweep < max_sweeps && max_off_diagonal() > threshold; ++sweep) {
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        // Rotation angle zeroing a(p, q); t = tan(phi), the smaller root.
        const Scalar theta = (a(q, q) - a(p, p)) / (Scalar(2) * apq);
        const Scalar t = (theta >= Scalar(0) ? Scalar(1) : Scalar(-1)) /
                         (abs(theta) + sqrt(theta * theta + Scalar(1)));
        const Scalar c = Scalar(1) / sqrt(t * t + Scalar(1));
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = Scalar(0);
        a(q, p) = Scalar(0);
      }
    }
  }

  DynVector<Scalar> eig = a.diagonal();
  std::sort(eig.data(), eig.data() + eig.size(), std::greater<Scalar>());
  return eig;
}

}  // namespace xrm
