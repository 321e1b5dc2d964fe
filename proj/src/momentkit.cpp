#include "cco/momentkit.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace cco {
namespace momentkit {

using polycore::Exponent;
using polycore::exponent_sum;
using polycore::monomial_basis;
using polycore::total_degree;

Tms::Tms(int r, int degree)
    : r_(r), degree_(degree), basis_(monomial_basis(r, degree)) {
  entries_ = Eigen::VectorXd::Zero(basis_->size());
}

Tms::Tms(int r, int degree, Eigen::VectorXd entries)
    : r_(r), degree_(degree), basis_(monomial_basis(r, degree)) {
  if (entries.size() != basis_->size())
    throw DimensionMismatch("Tms: entry vector length mismatch");
  entries_ = std::move(entries);
}

Tms Tms::restrict(int d) const {
  if (d > degree_) throw DegreeOverflow("Tms::restrict: degree too large");
  auto sub = monomial_basis(r_, d);
  return Tms(r_, d, entries_.head(sub->size()));
}

double riesz(const Tms& y, const Poly& p) {
  if (p.dimension() != y.dimension())
    throw DimensionMismatch("riesz: dimension mismatch");
  double acc = 0.0;
  for (const auto& [alpha, c] : p.terms())
    acc += c * y.entries()[y.basis().index_of(alpha)];
  return acc;
}

Tms tms_of_point(const Eigen::VectorXd& t, int degree) {
  const int r = static_cast<int>(t.size());
  Tms y(r, degree);
  const auto& basis = y.basis();
  for (int i = 0; i < basis.size(); ++i) {
    const Exponent& alpha = basis.exponent_at(i);
    double m = 1.0;
    for (int j = 0; j < r; ++j)
      if (alpha[j] != 0) m *= polycore::int_pow(t[j], alpha[j]);
    y.entries()[i] = m;
  }
  return y;
}

Eigen::MatrixXd localizing_matrix(const Poly& g, const Tms& y, int k) {
  if (g.dimension() != y.dimension())
    throw DimensionMismatch("localizing_matrix: dimension mismatch");
  const int dg = g.degree();
  if (dg > 2 * k) throw DegreeOverflow("localizing_matrix: deg(g) > 2k");
  if (y.degree() < 2 * k)
    throw DegreeOverflow("localizing_matrix: tms degree below 2k");
  const int side_deg = k - (dg + 1) / 2;
  auto rows = monomial_basis(y.dimension(), side_deg);
  const int n = rows->size();
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const Exponent ab =
          exponent_sum(rows->exponent_at(i), rows->exponent_at(j));
      double v = 0.0;
      for (const auto& [delta, c] : g.terms())
        v += c * y.entries()[y.basis().index_of(exponent_sum(ab, delta))];
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

Eigen::MatrixXd moment_matrix(const Tms& y, int k) {
  return localizing_matrix(Poly::constant(y.dimension(), 1.0), y, k);
}

MomentMatrices moment_matrices(const Poly& g, const Tms& y, int k) {
  return MomentMatrices{moment_matrix(y, k), localizing_matrix(g, y, k)};
}

int numeric_rank(const Eigen::MatrixXd& m, double rank_tol) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0) return 0;
  const double thresh = rank_tol * sv[0] * static_cast<double>(m.rows());
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  return rank;
}

std::optional<int> flat_truncation(const Tms& z, int k, int k0,
                                   double rank_tol) {
  if (z.degree() != 2 * k)
    throw DimensionMismatch("flat_truncation: tms degree must equal 2k");
  if (k0 < 1 || k < k0)
    throw DimensionMismatch("flat_truncation: need k >= k0 >= 1");
  int prev_rank = numeric_rank(moment_matrix(z, k0 - 1), rank_tol);
  for (int t = k0; t <= k; ++t) {
    const int rank = numeric_rank(moment_matrix(z, t), rank_tol);
    if (rank == prev_rank) return t;
    prev_rank = rank;
  }
  return std::nullopt;
}

Eigen::MatrixXd monomial_change_matrix(int r, int d, const Eigen::MatrixXd& L,
                                       const Eigen::VectorXd& shift) {
  if (L.rows() != r || L.cols() != r || shift.size() != r)
    throw DimensionMismatch("monomial_change_matrix: shape mismatch");
  auto basis = monomial_basis(r, d);
  const int n = basis->size();

  // Affine images of the variables as polynomials in eta.
  std::vector<Poly> var_image;
  var_image.reserve(r);
  for (int i = 0; i < r; ++i) {
    Poly p = Poly::constant(r, shift[i]);
    for (int j = 0; j < r; ++j)
      if (L(i, j) != 0.0) p += Poly::variable(r, j, L(i, j));
    var_image.push_back(std::move(p));
  }

  // Powers built incrementally along the graded order: every exponent of
  // positive degree is a predecessor in the basis times one variable image.
  std::vector<Poly> image(n, Poly(r));
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, n);
  for (int idx = 0; idx < n; ++idx) {
    const Exponent& alpha = basis->exponent_at(idx);
    if (total_degree(alpha) == 0) {
      image[idx] = Poly::constant(r, 1.0);
    } else {
      int var = 0;
      while (alpha[var] == 0) ++var;
      Exponent prev = alpha;
      prev[var] -= 1;
      image[idx] = image[basis->index_of(prev)] * var_image[var];
    }
    for (const auto& [gamma, c] : image[idx].terms())
      T(idx, basis->index_of(gamma)) = c;
  }
  return T;
}

Tms tms_affine_pushforward(const Tms& y, const Eigen::MatrixXd& L,
                           const Eigen::VectorXd& shift) {
  const Eigen::MatrixXd T =
      monomial_change_matrix(y.dimension(), y.degree(), L, shift);
  return Tms(y.dimension(), y.degree(), T * y.entries());
}

}  // namespace momentkit
}  // namespace cco
