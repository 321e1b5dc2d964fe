#include "cco/polycore.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <unordered_map>

namespace cco {
namespace polycore {

int total_degree(const Exponent& alpha) {
  int t = 0;
  for (int a : alpha) t += a;
  return t;
}

Exponent exponent_sum(const Exponent& a, const Exponent& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("exponent_sum: dimension mismatch");
  Exponent s(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) s[i] = a[i] + b[i];
  return s;
}

bool graded_less(const Exponent& a, const Exponent& b) {
  if (a.size() != b.size())
    throw DimensionMismatch("graded_less: dimension mismatch");
  const int da = total_degree(a);
  const int db = total_degree(b);
  if (da != db) return da < db;
  // Same degree: first variable with a larger power comes first.
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return a[i] > b[i];
  }
  return false;
}

namespace {

void enumerate_degree(int r, int deg, int pos, Exponent& work,
                      std::vector<Exponent>& out) {
  if (pos == r - 1) {
    work[pos] = deg;
    out.push_back(work);
    return;
  }
  for (int a = deg; a >= 0; --a) {
    work[pos] = a;
    enumerate_degree(r, deg - a, pos + 1, work, out);
  }
}

}  // namespace

MonomialBasis::MonomialBasis(int r, int d) : r_(r), d_(d) {
  if (r < 1) throw DimensionMismatch("MonomialBasis: r must be >= 1");
  if (d < 0) throw DimensionMismatch("MonomialBasis: d must be >= 0");
  Exponent work(r, 0);
  for (int deg = 0; deg <= d; ++deg) enumerate_degree(r, deg, 0, work, order_);
  for (int i = 0; i < static_cast<int>(order_.size()); ++i)
    index_.emplace(order_[i], i);
}

int MonomialBasis::index_of(const Exponent& alpha) const {
  const int i = find(alpha);
  if (i < 0) {
    std::ostringstream os;
    os << "MonomialBasis::index_of: exponent (";
    for (std::size_t j = 0; j < alpha.size(); ++j)
      os << alpha[j] << (j + 1 < alpha.size() ? "," : "");
    os << ") not in basis of dimension " << r_ << ", degree " << d_;
    throw DegreeOverflow(os.str());
  }
  return i;
}

int MonomialBasis::find(const Exponent& alpha) const {
  if (static_cast<int>(alpha.size()) != r_) return -1;
  for (int a : alpha)
    if (a < 0) return -1;
  auto it = index_.find(alpha);
  return it == index_.end() ? -1 : it->second;
}

std::shared_ptr<const MonomialBasis> monomial_basis(int r, int d) {
  static std::mutex mtx;
  static std::unordered_map<std::uint64_t,
                            std::shared_ptr<const MonomialBasis>>
      cache;
  const std::uint64_t key =
      (static_cast<std::uint64_t>(r) << 32) | static_cast<std::uint32_t>(d);
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto basis = std::make_shared<const MonomialBasis>(r, d);
  cache.emplace(key, basis);
  return basis;
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t result = 1;
  for (int i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return result;
}

std::int64_t basis_size(int r, int d) { return binomial(r + d, d); }

Poly Poly::constant(int r, double value) {
  Poly p(r);
  p.add_term(Exponent(r, 0), value);
  return p;
}

Poly Poly::variable(int r, int i, double coeff) {
  Poly p(r);
  Exponent alpha(r, 0);
  alpha.at(i) = 1;
  p.add_term(alpha, coeff);
  return p;
}

Poly Poly::monomial(Exponent alpha, double coeff) {
  Poly p(static_cast<int>(alpha.size()));
  p.add_term(std::move(alpha), coeff);
  return p;
}

int Poly::degree() const {
  int d = 0;
  for (const auto& [alpha, c] : terms_) d = std::max(d, total_degree(alpha));
  return d;
}

double Poly::coeff(const Exponent& alpha) const {
  auto it = terms_.find(alpha);
  return it == terms_.end() ? 0.0 : it->second;
}

void Poly::add_term(const Exponent& alpha, double c) {
  if (static_cast<int>(alpha.size()) != r_)
    throw DimensionMismatch("Poly::add_term: exponent dimension mismatch");
  for (int a : alpha)
    if (a < 0) throw DimensionMismatch("Poly::add_term: negative exponent");
  if (c == 0.0) return;
  auto [it, inserted] = terms_.emplace(alpha, c);
  if (!inserted) {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Poly& Poly::operator+=(const Poly& other) {
  if (other.r_ != r_) throw DimensionMismatch("Poly: dimension mismatch");
  for (const auto& [alpha, c] : other.terms_) add_term(alpha, c);
  return *this;
}

Poly& Poly::operator-=(const Poly& other) {
  if (other.r_ != r_) throw DimensionMismatch("Poly: dimension mismatch");
  for (const auto& [alpha, c] : other.terms_) add_term(alpha, -c);
  return *this;
}

Poly& Poly::operator*=(double s) {
  if (s == 0.0) {
    terms_.clear();
    return *this;
  }
  for (auto& [alpha, c] : terms_) c *= s;
  return *this;
}

Poly operator+(Poly a, const Poly& b) { return a += b; }
Poly operator-(Poly a, const Poly& b) { return a -= b; }

Poly operator*(const Poly& a, const Poly& b) {
  if (a.dimension() != b.dimension())
    throw DimensionMismatch("Poly: dimension mismatch");
  Poly out(a.dimension());
  for (const auto& [alpha, ca] : a.terms())
    for (const auto& [beta, cb] : b.terms())
      out.add_term(exponent_sum(alpha, beta), ca * cb);
  return out;
}

Poly operator*(double s, Poly p) { return p *= s; }
Poly operator*(Poly p, double s) { return p *= s; }

Poly poly_add(const Poly& p, const Poly& q) { return p + q; }
Poly poly_mul(const Poly& p, const Poly& q) { return p * q; }
Poly poly_scale(const Poly& p, double s) { return p * s; }

double int_pow(double x, int n) {
  double result = 1.0;
  while (n > 0) {
    if (n & 1) result *= x;
    x *= x;
    n >>= 1;
  }
  return result;
}

double poly_eval(const Poly& p, const Eigen::VectorXd& point) {
  if (point.size() != p.dimension())
    throw DimensionMismatch("poly_eval: point dimension mismatch");
  double acc = 0.0;
  for (const auto& [alpha, c] : p.terms()) {
    double m = c;
    for (int i = 0; i < p.dimension(); ++i)
      if (alpha[i] != 0) m *= int_pow(point[i], alpha[i]);
    acc += m;
  }
  return acc;
}

Poly differentiate(const Poly& p, int i) {
  if (i < 0 || i >= p.dimension())
    throw DimensionMismatch("differentiate: variable index out of range");
  Poly out(p.dimension());
  for (const auto& [alpha, c] : p.terms()) {
    if (alpha[i] == 0) continue;
    Exponent beta = alpha;
    beta[i] -= 1;
    out.add_term(beta, c * alpha[i]);
  }
  return out;
}

Eigen::VectorXd coefficient_vector(const Poly& p, const MonomialBasis& basis) {
  if (p.dimension() != basis.dimension())
    throw DimensionMismatch("coefficient_vector: dimension mismatch");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(basis.size());
  for (const auto& [alpha, c] : p.terms()) v[basis.index_of(alpha)] = c;
  return v;
}

Poly poly_from_coefficients(const Eigen::VectorXd& coeffs,
                            const MonomialBasis& basis) {
  if (coeffs.size() != basis.size())
    throw DimensionMismatch("poly_from_coefficients: length mismatch");
  Poly p(basis.dimension());
  for (int i = 0; i < basis.size(); ++i)
    if (coeffs[i] != 0.0) p.add_term(basis.exponent_at(i), coeffs[i]);
  return p;
}

std::string to_string(const Poly& p, const std::string& var_symbol) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [alpha, c] : p.terms()) {
    if (!first) os << (c >= 0 ? " + " : " - ");
    else if (c < 0) os << "-";
    first = false;
    os << std::abs(c);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      if (alpha[i] == 0) continue;
      os << "*" << var_symbol << (i + 1);
      if (alpha[i] > 1) os << "^" << alpha[i];
    }
  }
  return os.str();
}

}  // namespace polycore
}  // namespace cco
