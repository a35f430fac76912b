#ifndef ATL_KERNEL_HPP
#define ATL_KERNEL_HPP

// Squared-exponential covariance and its multi-task (coregionalized) form.
//
//   k((x_i, u), (x_j, v)) = A_uv * exp(-|x_i - x_j|^2 / (2 l^2)),   A = L L^T
//
// A is only ever stored through its lower-triangular factor L, so it is PSD
// for any L. Everything here is a pure function of its arguments.

#include "atl/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <stdexcept>

namespace atl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Single-task squared exponential.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cov_base(const Eigen::MatrixBase<DerivedA>& xi, const Eigen::MatrixBase<DerivedB>& xj,
                                   typename DerivedA::Scalar signal_var, typename DerivedA::Scalar length_scale) {
  using std::exp;
  using std::isfinite;
  if (!xi.allFinite() || !xj.allFinite() || !isfinite(signal_var) || !isfinite(length_scale))
    throw std::invalid_argument("cov_base: non-finite input");
  if (signal_var < 0 || !(length_scale > 0))
    throw std::invalid_argument("cov_base: need signal_var >= 0 and length_scale > 0");
  const auto d2 = (xi - xj).squaredNorm();
  return signal_var * exp(-d2 / (2 * length_scale * length_scale));
}

/// Free-form quantity covariance A = L L^T, held through L.
template <typename Scalar>
class QuantityCovariance {
 public:
  QuantityCovariance() : lower_(MatrixX<Scalar>::Identity(1, 1)) {}

  explicit QuantityCovariance(MatrixX<Scalar> lower) : lower_(std::move(lower)) {
    if (lower_.rows() != lower_.cols() || lower_.rows() < 1)
      throw std::invalid_argument("quantity covariance: L must be square and non-empty");
    for (Eigen::Index r = 0; r < lower_.rows(); ++r) {
      if (!(lower_(r, r) > 0)) throw std::invalid_argument("quantity covariance: diagonal of L must be > 0");
      for (Eigen::Index c = 0; c < lower_.cols(); ++c) {
        if (!std::isfinite(static_cast<double>(lower_(r, c))))
          throw std::invalid_argument("quantity covariance: non-finite entry in L");
        if (c > r && lower_(r, c) != 0) throw std::invalid_argument("quantity covariance: L must be lower-triangular");
      }
    }
  }

  static QuantityCovariance identity(Eigen::Index q) { return QuantityCovariance(MatrixX<Scalar>::Identity(q, q)); }

  Eigen::Index size() const { return lower_.rows(); }
  const MatrixX<Scalar>& lower() const { return lower_; }

  /// A = L L^T, materialized.
  MatrixX<Scalar> covariance() const { return lower_ * lower_.transpose(); }

  /// Single entry A_uv without materializing A.
  Scalar entry(QuantityId u, QuantityId v) const {
    check(u);
    check(v);
    const auto iu = static_cast<Eigen::Index>(u.index);
    const auto iv = static_cast<Eigen::Index>(v.index);
    const Eigen::Index k = std::min(iu, iv) + 1;
    return lower_.row(iu).head(k).dot(lower_.row(iv).head(k));
  }

  void check(QuantityId q) const {
    if (static_cast<Eigen::Index>(q.index) >= size())
      throw std::invalid_argument("quantity index " + std::to_string(q.index) + " out of range");
  }

 private:
  MatrixX<Scalar> lower_;
};

template <typename Scalar>
struct KernelParams {
  QuantityCovariance<Scalar> quantity_cov;
  Scalar length_scale = Scalar(1);

  KernelParams() = default;
  KernelParams(QuantityCovariance<Scalar> cov, Scalar ls) : quantity_cov(std::move(cov)), length_scale(ls) {
    if (!std::isfinite(static_cast<double>(ls)) || !(ls > 0))
      throw std::invalid_argument("kernel: length_scale must be finite and positive");
  }

  Eigen::Index quantity_count() const { return quantity_cov.size(); }
};

template <typename Scalar>
Scalar cov_multi(const Point2<Scalar>& xi, QuantityId u, const Point2<Scalar>& xj, QuantityId v,
                 const KernelParams<Scalar>& p) {
  const Scalar a_uv = p.quantity_cov.entry(u, v);
  return a_uv * cov_base(xi, xj, Scalar(1), p.length_scale);
}

/// A sample site: a location tagged with the quantity measured there.
template <typename Scalar>
struct TaggedPoint {
  Point2<Scalar> at;
  QuantityId quantity;
};

/// Covariance between two tagged point sets. Element (i, j) equals
/// cov_multi(rows[i], cols[j]); empty inputs give an empty matrix.
template <typename Scalar>
MatrixX<Scalar> gram_matrix(std::span<const TaggedPoint<Scalar>> rows, std::span<const TaggedPoint<Scalar>> cols,
                            const KernelParams<Scalar>& p) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto m = static_cast<Eigen::Index>(cols.size());
  MatrixX<Scalar> out(n, m);
  if (n == 0 || m == 0) return out;
  for (const auto& r : rows) p.quantity_cov.check(r.quantity);
  for (const auto& c : cols) p.quantity_cov.check(c.quantity);

  const Eigen::Index q = p.quantity_count();
  MatrixX<Scalar> a(q, q);
  for (Eigen::Index u = 0; u < q; ++u)
    for (Eigen::Index v = 0; v < q; ++v)
      a(u, v) = p.quantity_cov.entry(QuantityId(static_cast<std::size_t>(u)), QuantityId(static_cast<std::size_t>(v)));
  const Scalar inv_two_l2 = Scalar(1) / (2 * p.length_scale * p.length_scale);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& cj = cols[static_cast<std::size_t>(j)];
    const auto v = static_cast<Eigen::Index>(cj.quantity.index);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& ri = rows[static_cast<std::size_t>(i)];
      using std::exp;
      out(i, j) = a(static_cast<Eigen::Index>(ri.quantity.index), v) * exp(-(ri.at - cj.at).squaredNorm() * inv_two_l2);
    }
  }
  return out;
}

}  // namespace atl

#endif  // ATL_KERNEL_HPP
