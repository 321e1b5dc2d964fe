#ifndef CCO_MOMENTKIT_HPP
#define CCO_MOMENTKIT_HPP

#include <memory>
#include <optional>

#include <Eigen/Core>

#include "cco/polycore.hpp"

namespace cco {
namespace momentkit {

using polycore::MonomialBasis;
using polycore::Poly;

/// Truncated multi-sequence: a real vector indexed by the graded monomial
/// basis of degree `degree` in `r` variables. Candidate moment vector of a
/// measure. Immutable-by-convention value type.
class Tms {
 public:
  Tms(int r, int degree);
  Tms(int r, int degree, Eigen::VectorXd entries);

  int dimension() const { return r_; }
  int degree() const { return degree_; }
  const MonomialBasis& basis() const { return *basis_; }

  const Eigen::VectorXd& entries() const { return entries_; }
  Eigen::VectorXd& entries() { return entries_; }

  double operator[](const polycore::Exponent& alpha) const {
    return entries_[basis_->index_of(alpha)];
  }

  /// Prefix restriction to degree d <= degree(); under the graded ordering
  /// this is literally the leading segment of the entry vector.
  Tms restrict(int d) const;

 private:
  int r_;
  int degree_;
  std::shared_ptr<const MonomialBasis> basis_;
  Eigen::VectorXd entries_;
};

/// Riesz pairing <p, y> = sum_alpha p_alpha y_alpha. Throws DegreeOverflow
/// if p has a monomial outside y's index set.
double riesz(const Tms& y, const Poly& p);

/// Moments of the Dirac measure at t, up to the given degree.
Tms tms_of_point(const Eigen::VectorXd& t, int degree);

/// Localizing matrix L_g^(k)[y]: indexed by the basis of degree
/// k - ceil(deg(g)/2); entry (a, b) is <g * xi^a * xi^b, y>. Built from the
/// exponent-sum index rule, hence exactly symmetric.
Eigen::MatrixXd localizing_matrix(const Poly& g, const Tms& y, int k);

/// Moment matrix M_k[y], the localizing matrix of the constant one.
Eigen::MatrixXd moment_matrix(const Tms& y, int k);

/// Moment matrix and localizing matrix bundled, as used by membership tests
/// for the dual cone of a truncated quadratic module.
struct MomentMatrices {
  Eigen::MatrixXd moment;
  Eigen::MatrixXd localizing;
};

MomentMatrices moment_matrices(const Poly& g, const Tms& y, int k);

/// Numeric rank: singular values below rank_tol * sigma_max * side count as
/// zero.
int numeric_rank(const Eigen::MatrixXd& m, double rank_tol);

/// Smallest t in [k0, k] with rank M_t[z] == rank M_{t-1}[z], or nullopt.
std::optional<int> flat_truncation(const Tms& z, int k, int k0,
                                   double rank_tol = 1e-6);

/// Change-of-variables matrix T with [xi]_d = T [eta]_d for the affine
/// substitution xi = shift + L * eta. Row alpha holds the eta-coefficients of
/// the polynomial (shift + L eta)^alpha.
Eigen::MatrixXd monomial_change_matrix(int r, int d, const Eigen::MatrixXd& L,
                                       const Eigen::VectorXd& shift);

/// Pushforward of a tms under xi = shift + L * eta: the returned sequence
/// holds the xi-moments of the measure whose eta-moments are y.
Tms tms_affine_pushforward(const Tms& y, const Eigen::MatrixXd& L,
                           const Eigen::VectorXd& shift);

}  // namespace momentkit
}  // namespace cco

#endif  // CCO_MOMENTKIT_HPP
