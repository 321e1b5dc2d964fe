#ifndef CCO_POLYCORE_HPP
#define CCO_POLYCORE_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cco {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class DegreeOverflow : public Error {
 public:
  using Error::Error;
};

namespace polycore {

/// Exponent tuple of a monomial in r variables; entry i is the power of
/// variable i. Total degree is the entry sum.
using Exponent = std::vector<int>;

int total_degree(const Exponent& alpha);

/// Sum of two exponent tuples of equal dimension.
Exponent exponent_sum(const Exponent& a, const Exponent& b);

/// Graded ordering: lower total degree first; within a degree,
/// lexicographically descending (so in two variables the degree-2 run is
/// x1^2, x1 x2, x2^2).
bool graded_less(const Exponent& a, const Exponent& b);

struct GradedLess {
  bool operator()(const Exponent& a, const Exponent& b) const {
    return graded_less(a, b);
  }
};

/// All exponents of total degree <= d in r variables, in the graded order
/// above. Immutable after construction; instances are shared via
/// monomial_basis().
class MonomialBasis {
 public:
  MonomialBasis(int r, int d);

  int dimension() const { return r_; }
  int max_degree() const { return d_; }
  int size() const { return static_cast<int>(order_.size()); }

  const Exponent& exponent_at(int index) const { return order_.at(index); }

  /// Position of an exponent in the graded order; throws DegreeOverflow if
  /// the exponent does not belong to the basis.
  int index_of(const Exponent& alpha) const;

  /// Like index_of but returns -1 instead of throwing.
  int find(const Exponent& alpha) const;

  const std::vector<Exponent>& exponents() const { return order_; }

 private:
  int r_;
  int d_;
  std::vector<Exponent> order_;
  std::map<Exponent, int, GradedLess> index_;
};

/// Shared, memoized basis lookup. Thread-safe.
std::shared_ptr<const MonomialBasis> monomial_basis(int r, int d);

/// Binomial coefficient as a 64-bit integer; the basis size C(r+d, d).
std::int64_t binomial(int n, int k);
std::int64_t basis_size(int r, int d);

/// Sparse multivariate polynomial with real coefficients. Zero coefficients
/// are never stored; the zero polynomial has degree 0 by convention.
class Poly {
 public:
  explicit Poly(int r) : r_(r) {
    if (r < 1) throw DimensionMismatch("Poly: dimension must be >= 1");
  }

  static Poly constant(int r, double value);
  static Poly variable(int r, int i, double coeff = 1.0);
  static Poly monomial(Exponent alpha, double coeff);

  int dimension() const { return r_; }
  int degree() const;
  bool is_zero() const { return terms_.empty(); }
  std::size_t term_count() const { return terms_.size(); }

  double coeff(const Exponent& alpha) const;
  /// Adds c to the coefficient of alpha, pruning if the result is zero.
  void add_term(const Exponent& alpha, double c);

  const std::map<Exponent, int, GradedLess>& index() const = delete;
  const std::map<Exponent, double, GradedLess>& terms() const {
    return terms_;
  }

  Poly& operator+=(const Poly& other);
  Poly& operator-=(const Poly& other);
  Poly& operator*=(double s);

 private:
  int r_;
  std::map<Exponent, double, GradedLess> terms_;
};

Poly operator+(Poly a, const Poly& b);
Poly operator-(Poly a, const Poly& b);
Poly operator*(const Poly& a, const Poly& b);
Poly operator*(double s, Poly p);
Poly operator*(Poly p, double s);

Poly poly_add(const Poly& p, const Poly& q);
Poly poly_mul(const Poly& p, const Poly& q);
Poly poly_scale(const Poly& p, double s);

/// Evaluates p at a point by plain term-by-term accumulation.
double poly_eval(const Poly& p, const Eigen::VectorXd& point);

/// Integer power by repeated squaring.
double int_pow(double x, int n);

/// Partial derivative with respect to variable i.
Poly differentiate(const Poly& p, int i);

/// Coefficient vector of p over monomial_basis(r, d); throws DegreeOverflow
/// if p has a term above degree d.
Eigen::VectorXd coefficient_vector(const Poly& p, const MonomialBasis& basis);

/// Inverse of coefficient_vector.
Poly poly_from_coefficients(const Eigen::VectorXd& coeffs,
                            const MonomialBasis& basis);

std::string to_string(const Poly& p,
                      const std::string& var_symbol = std::string("x"));

}  // namespace polycore
}  // namespace cco

#endif  // CCO_POLYCORE_HPP
