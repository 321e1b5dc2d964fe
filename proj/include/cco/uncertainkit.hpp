#ifndef CCO_UNCERTAINKIT_HPP
#define CCO_UNCERTAINKIT_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cco/robustsolve.hpp"

namespace cco {
namespace uncertainkit {

using robustsolve::PerturbedConstraint;

/// Deterministic scalar samplers on top of std::mt19937_64 (whose output
/// stream is pinned by the standard; the distribution transforms here are
/// hand-rolled so results are reproducible across platforms).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

  double uniform01();  // strictly inside (0, 1)
  double uniform(double a, double b);
  double normal();
  double exponential(double scale);
  double gamma(double shape, double scale);
  double beta(double a, double b);
  double chi_squared(double df);
  double log_normal(double log_mean, double log_sigma);
  double student_t(double df);

 private:
  std::mt19937_64 eng_;
};

/// Substream seed for row i of a sampling run; rows are independent, so a
/// parallel fill is bit-identical to the sequential one.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

enum class Family {
  gaussian,     // p1 = mean, p2 = stddev
  uniform,      // p1 = a, p2 = b
  exponential,  // p1 = scale (mean)
  beta,         // p1, p2 = shape parameters
  gamma,        // p1 = shape, p2 = scale
  chi_squared,  // p1 = degrees of freedom
  log_normal,   // p1, p2 = log-scale mean and sigma
  student_t,    // p1 = degrees of freedom
};

const char* to_string(Family f);
std::optional<Family> family_from_string(const std::string& name);

struct Marginal {
  Family family;
  double p1 = 0.0;
  double p2 = 0.0;
};

/// Random-vector model: independent marginals, a joint Gaussian, a joint
/// multivariate t, or an empirical distribution over stored rows.
struct RandomModel {
  enum class Kind { product, joint_gaussian, joint_t, empirical };

  Kind kind = Kind::product;
  std::vector<Marginal> marginals;  // product
  Eigen::VectorXd location;         // joint kinds
  Eigen::MatrixXd scale;            // joint kinds (gaussian: covariance)
  double dof = 0.0;                 // joint_t
  Eigen::MatrixXd data;             // empirical rows

  static RandomModel product(std::vector<Marginal> marginals);
  static RandomModel joint_gaussian(Eigen::VectorXd mean,
                                    Eigen::MatrixXd covariance);
  static RandomModel joint_t(double dof, Eigen::VectorXd location,
                             Eigen::MatrixXd scale);
  static RandomModel empirical(Eigen::MatrixXd rows);

  int dim() const;
  void validate() const;  // throws Error with a precise message
};

/// n i.i.d. rows, deterministic given (model, n, seed).
Eigen::MatrixXd sample(const RandomModel& model, int n, std::uint64_t seed);

/// Analytic mean and covariance (empirical models: sample moments with the
/// 1/(N-1) normalization). Throws when moments do not exist (t with df <= 2).
std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments_of(
    const RandomModel& model);

/// Mahalanobis-type value (xi - mu)' Lambda^-1 (xi - mu), computed through a
/// Cholesky factorization of Lambda.
double gamma_value(const Eigen::VectorXd& mu, const Eigen::MatrixXd& lambda,
                   const Eigen::VectorXd& xi, double pd_tol = 1e-12);

/// gamma_value for every row of a sample matrix (one factorization).
Eigen::VectorXd gamma_values(const Eigen::VectorXd& mu,
                             const Eigen::MatrixXd& lambda,
                             const Eigen::MatrixXd& samples,
                             double pd_tol = 1e-12);

/// Smallest L <= N with sum_{i=0}^{L-1} C(N,i)(1-eps)^i eps^(N-i) >= 1-beta,
/// accumulated in log space; nullopt when no such L exists.
std::optional<int> quantile_index(int N, double eps, double beta);

class UnsolvableQuantile : public Error {
 public:
  using Error::Error;
};

/// Order-statistic upper bound on the (1-eps)-quantile of the Mahalanobis
/// value: sorts Gamma(xi_i) ascending and returns the L*-th entry together
/// with L*. Throws UnsolvableQuantile when quantile_index has no solution.
std::pair<double, int> initial_gamma(const Eigen::MatrixXd& samples,
                                     const Eigen::VectorXd& mu,
                                     const Eigen::MatrixXd& lambda, double eps,
                                     double beta);

/// Fraction of sample rows with h(x, row) < 0 (strict).
double estimate_pvio(const PerturbedConstraint& pc, const Eigen::VectorXd& x,
                     const Eigen::MatrixXd& samples);

/// Violation estimator with the per-row monomials precomputed once, for the
/// sizing loop where the same rows are reused at every bisection step.
class ViolationEstimator {
 public:
  ViolationEstimator(const PerturbedConstraint& pc,
                     const Eigen::MatrixXd& samples);
  double operator()(const Eigen::VectorXd& x) const;
  long long count_violations(const Eigen::VectorXd& x) const;
  long long rows() const { return monomials_.rows(); }

 private:
  Eigen::MatrixXd monomials_;  // rows x active terms
  Eigen::MatrixXd term_a_;     // active terms x n
  Eigen::VectorXd term_b_;
};

enum class SizingStatus { converged, max_loops, beta_doubled };

const char* to_string(SizingStatus status);

struct LoopRecord {
  int loop = 0;
  double gamma = 0.0;
  double fstar = 0.0;
  double pvio = 0.0;
};

struct SizingReport {
  double gamma_star = 0.0;
  std::vector<LoopRecord> trace;
  int loops = 0;
  double initial_gamma = 0.0;
  int lstar = 0;
  int beta_doublings = 0;
  SizingStatus status = SizingStatus::max_loops;
};

/// Thrown when the robust-solver callback fails mid-run; carries the loops
/// completed so far.
class SizingAbort : public Error {
 public:
  SizingAbort(const std::string& what, SizingReport partial)
      : Error(what), partial_(std::move(partial)) {}
  const SizingReport& partial() const { return partial_; }

 private:
  SizingReport partial_;
};

struct SizingOptions {
  double eps = 0.05;
  double beta = 0.05;
  double rho = 1e-6;
  int N = 100;
  long long Nhat = 1000000;
  std::uint64_t seed = 1;
  int max_loops = 60;
  int max_beta_doublings = 10;
};

/// Robust solver callback: certified optimizer and optimal value at a given
/// set size.
using RobustSolver =
    std::function<std::pair<Eigen::VectorXd, double>(double gamma)>;

/// Quantile-initialized bisection on the set size: draws N + Nhat rows once,
/// seeds the bracket with the order-statistic bound (doubling beta while the
/// binomial condition is unsolvable, up to the cap), then bisects on the
/// estimated violation probability until |p_vio - eps| <= rho.
SizingReport size_uncertainty_set(const PerturbedConstraint& pc,
                                  const Eigen::VectorXd& mu,
                                  const Eigen::MatrixXd& lambda,
                                  const RandomModel& model,
                                  const SizingOptions& opts,
                                  const RobustSolver& solve_at);

/// n rows uniform in the ellipsoid (xi-mu)' Lambda^-1 (xi-mu) <= gamma.
Eigen::MatrixXd sample_in_ellipsoid(const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& lambda,
                                    double gamma, int n, std::uint64_t seed);

}  // namespace uncertainkit
}  // namespace cco

#endif  // CCO_UNCERTAINKIT_HPP
