#include "cco/uncertainkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Dense>

namespace cco {
namespace uncertainkit {

namespace {
constexpr double kTwoPi = 6.283185307179586;
}

double RandomStream::uniform01() {
  return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::uniform(double a, double b) {
  return a + (b - a) * uniform01();
}

double RandomStream::normal() {
  // Box-Muller without caching: two uniforms per draw, fully sequential.
  const double u1 = uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double RandomStream::exponential(double scale) {
  if (!(scale > 0.0)) throw Error("exponential: scale must be positive");
  return -scale * std::log(uniform01());
}

double RandomStream::gamma(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw Error("gamma: parameters must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and thin with u^(1/shape).
    const double g = gamma(shape + 1.0, 1.0);
    return scale * g * std::pow(uniform01(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return scale * d * v;
  }
}

double RandomStream::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

double RandomStream::chi_squared(double df) {
  return gamma(0.5 * df, 2.0);
}

double RandomStream::log_normal(double log_mean, double log_sigma) {
  if (!(log_sigma > 0.0)) throw Error("log_normal: sigma must be positive");
  return std::exp(log_mean + log_sigma * normal());
}

double RandomStream::student_t(double df) {
  if (!(df > 0.0)) throw Error("student_t: df must be positive");
  const double z = normal();
  const double w = chi_squared(df);
  return z / std::sqrt(w / df);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 on the combined key decorrelates row engines.
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const char* to_string(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::uniform: return "uniform";
    case Family::exponential: return "exponential";
    case Family::beta: return "beta";
    case Family::gamma: return "gamma";
    case Family::chi_squared: return "chi-squared";
    case Family::log_normal: return "log-normal";
    case Family::student_t: return "student-t";
  }
  return "unknown";
}

std::optional<Family> family_from_string(const std::string& name) {
  if (name == "gaussian" || name == "normal") return Family::gaussian;
  if (name == "uniform") return Family::uniform;
  if (name == "exponential") return Family::exponential;
  if (name == "beta") return Family::beta;
  if (name == "gamma") return Family::gamma;
  if (name == "chi-squared" || name == "chi_squared")
    return Family::chi_squared;
  if (name == "log-normal" || name == "log_normal") return Family::log_normal;
  if (name == "student-t" || name == "student_t" || name == "t")
    return Family::student_t;
  return std::nullopt;
}

RandomModel RandomModel::product(std::vector<Marginal> marginals) {
  RandomModel m;
  m.kind = Kind::product;
  m.marginals = std::move(marginals);
  m.validate();
  return m;
}

RandomModel RandomModel::joint_gaussian(Eigen::VectorXd mean,
                                        Eigen::MatrixXd covariance) {
  RandomModel m;
  m.kind = Kind::joint_gaussian;
  m.location = std::move(mean);
  m.scale = std::move(covariance);
  m.validate();
  return m;
}

RandomModel RandomModel::joint_t(double dof, Eigen::VectorXd location,
                                 Eigen::MatrixXd scale) {
  RandomModel m;
  m.kind = Kind::joint_t;
  m.dof = dof;
  m.location = std::move(location);
  m.scale = std::move(scale);
  m.validate();
  return m;
}

RandomModel RandomModel::empirical(Eigen::MatrixXd rows) {
  RandomModel m;
  m.kind = Kind::empirical;
  m.data = std::move(rows);
  m.validate();
  return m;
}

int RandomModel::dim() const {
  switch (kind) {
    case Kind::product: return static_cast<int>(marginals.size());
    case Kind::joint_gaussian:
    case Kind::joint_t: return static_cast<int>(location.size());
    case Kind::empirical: return static_cast<int>(data.cols());
  }
  return 0;
}

namespace {

void validate_marginal(const Marginal& m, int index) {
  std::ostringstream os;
  os << "marginal " << index << " (" << to_string(m.family) << "): ";
  switch (m.family) {
    case Family::gaussian:
      if (!(m.p2 > 0.0)) throw Error(os.str() + "stddev must be positive");
      break;
    case Family::uniform:
      if (!(m.p2 > m.p1)) throw Error(os.str() + "need b > a");
      break;
    case Family::exponential:
      if (!(m.p1 > 0.0)) throw Error(os.str() + "scale must be positive");
      break;
    case Family::beta:
    case Family::gamma:
      if (!(m.p1 > 0.0) || !(m.p2 > 0.0))
        throw Error(os.str() + "parameters must be positive");
      break;
    case Family::chi_squared:
      if (!(m.p1 > 0.0)) throw Error(os.str() + "df must be positive");
      break;
    case Family::log_normal:
      if (!(m.p2 > 0.0)) throw Error(os.str() + "sigma must be positive");
      break;
    case Family::student_t:
      if (!(m.p1 > 0.0)) throw Error(os.str() + "df must be positive");
      break;
  }
}

}  // namespace

void RandomModel::validate() const {
  switch (kind) {
    case Kind::product: {
      if (marginals.empty()) throw Error("product model: no marginals");
      for (std::size_t i = 0; i < marginals.size(); ++i)
        validate_marginal(marginals[i], static_cast<int>(i));
      break;
    }
    case Kind::joint_gaussian:
    case Kind::joint_t: {
      if (location.size() == 0) throw Error("joint model: empty location");
      if (scale.rows() != location.size() || scale.cols() != location.size())
        throw Error("joint model: scale shape mismatch");
      Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (scale + scale.transpose()));
      if (llt.info() != Eigen::Success)
        throw Error("joint model: scale matrix is not positive definite");
      if (kind == Kind::joint_t && !(dof > 0.0))
        throw Error("joint t model: dof must be positive");
      break;
    }
    case Kind::empirical:
      if (data.rows() < 1 || data.cols() < 1)
        throw Error("empirical model: need at least one row");
      break;
  }
}

namespace {

double sample_marginal(const Marginal& m, RandomStream& rs) {
  switch (m.family) {
    case Family::gaussian: return m.p1 + m.p2 * rs.normal();
    case Family::uniform: return rs.uniform(m.p1, m.p2);
    case Family::exponential: return rs.exponential(m.p1);
    case Family::beta: return rs.beta(m.p1, m.p2);
    case Family::gamma: return rs.gamma(m.p1, m.p2);
    case Family::chi_squared: return rs.chi_squared(m.p1);
    case Family::log_normal: return rs.log_normal(m.p1, m.p2);
    case Family::student_t: return rs.student_t(m.p1);
  }
  throw Error("sample_marginal: unknown family");
}

std::pair<double, double> marginal_moments(const Marginal& m) {
  switch (m.family) {
    case Family::gaussian: return {m.p1, m.p2 * m.p2};
    case Family::uniform: {
      const double w = m.p2 - m.p1;
      return {0.5 * (m.p1 + m.p2), w * w / 12.0};
    }
    case Family::exponential: return {m.p1, m.p1 * m.p1};
    case Family::beta: {
      const double s = m.p1 + m.p2;
      return {m.p1 / s, m.p1 * m.p2 / (s * s * (s + 1.0))};
    }
    case Family::gamma: return {m.p1 * m.p2, m.p1 * m.p2 * m.p2};
    case Family::chi_squared: return {m.p1, 2.0 * m.p1};
    case Family::log_normal: {
      const double s2 = m.p2 * m.p2;
      const double mean = std::exp(m.p1 + 0.5 * s2);
      return {mean, (std::exp(s2) - 1.0) * std::exp(2.0 * m.p1 + s2)};
    }
    case Family::student_t:
      if (!(m.p1 > 2.0))
        throw Error("student-t moments: need df > 2 for a finite variance");
      return {0.0, m.p1 / (m.p1 - 2.0)};
  }
  throw Error("marginal_moments: unknown family");
}

}  // namespace

Eigen::MatrixXd sample(const RandomModel& model, int n, std::uint64_t seed) {
  if (n < 1) throw Error("sample: need n >= 1");
  model.validate();
  const int r = model.dim();
  Eigen::MatrixXd out(n, r);
  Eigen::MatrixXd chol;
  if (model.kind == RandomModel::Kind::joint_gaussian ||
      model.kind == RandomModel::Kind::joint_t) {
    chol = Eigen::LLT<Eigen::MatrixXd>(
               0.5 * (model.scale + model.scale.transpose()))
               .matrixL();
  }
  for (int i = 0; i < n; ++i) {
    RandomStream rs(substream_seed(seed, static_cast<std::uint64_t>(i)));
    switch (model.kind) {
      case RandomModel::Kind::product:
        for (int j = 0; j < r; ++j)
          out(i, j) = sample_marginal(model.marginals[j], rs);
        break;
      case RandomModel::Kind::joint_gaussian: {
        Eigen::VectorXd z(r);
        for (int j = 0; j < r; ++j) z[j] = rs.normal();
        out.row(i) = (model.location + chol * z).transpose();
        break;
      }
      case RandomModel::Kind::joint_t: {
        Eigen::VectorXd z(r);
        for (int j = 0; j < r; ++j) z[j] = rs.normal();
        const double w = rs.chi_squared(model.dof);
        out.row(i) =
            (model.location + chol * z * std::sqrt(model.dof / w)).transpose();
        break;
      }
      case RandomModel::Kind::empirical: {
        const long long rows = model.data.rows();
        long long idx = static_cast<long long>(rs.uniform01() * rows);
        if (idx >= rows) idx = rows - 1;
        out.row(i) = model.data.row(idx);
        break;
      }
    }
  }
  return out;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> moments_of(
    const RandomModel& model) {
  model.validate();
  const int r = model.dim();
  switch (model.kind) {
    case RandomModel::Kind::product: {
      Eigen::VectorXd mu(r);
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(r, r);
      for (int j = 0; j < r; ++j) {
        const auto [m, v] = marginal_moments(model.marginals[j]);
        mu[j] = m;
        cov(j, j) = v;
      }
      return {mu, cov};
    }
    case RandomModel::Kind::joint_gaussian:
      return {model.location, model.scale};
    case RandomModel::Kind::joint_t: {
      if (!(model.dof > 2.0))
        throw Error("joint t moments: need df > 2 for a finite covariance");
      return {model.location, model.dof / (model.dof - 2.0) * model.scale};
    }
    case RandomModel::Kind::empirical: {
      const long long n = model.data.rows();
      const Eigen::VectorXd mu = model.data.colwise().mean();
      Eigen::MatrixXd centered = model.data.rowwise() - mu.transpose();
      const double norm = (n > 1) ? 1.0 / static_cast<double>(n - 1) : 1.0;
      Eigen::MatrixXd cov = norm * centered.transpose() * centered;
      return {mu, cov};
    }
  }
  throw Error("moments_of: unknown model kind");
}

namespace {

Eigen::MatrixXd cholesky_of(const Eigen::MatrixXd& lambda, double pd_tol) {
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (lambda + lambda.transpose()));
  if (llt.info() != Eigen::Success)
    throw Error("gamma_value: scale matrix is not positive definite");
  Eigen::MatrixXd L = llt.matrixL();
  if (L.diagonal().minCoeff() <=
      pd_tol * std::max(1.0, L.diagonal().maxCoeff()))
    throw Error("gamma_value: scale matrix is singular within pd_tol");
  return L;
}

}  // namespace

double gamma_value(const Eigen::VectorXd& mu, const Eigen::MatrixXd& lambda,
                   const Eigen::VectorXd& xi, double pd_tol) {
  const Eigen::MatrixXd L = cholesky_of(lambda, pd_tol);
  const Eigen::VectorXd w = L.triangularView<Eigen::Lower>().solve(xi - mu);
  return w.squaredNorm();
}

Eigen::VectorXd gamma_values(const Eigen::VectorXd& mu,
                             const Eigen::MatrixXd& lambda,
                             const Eigen::MatrixXd& samples, double pd_tol) {
  const Eigen::MatrixXd L = cholesky_of(lambda, pd_tol);
  Eigen::MatrixXd centered =
      (samples.rowwise() - mu.transpose()).transpose();
  L.triangularView<Eigen::Lower>().solveInPlace(centered);
  return centered.colwise().squaredNorm().transpose();
}

std::optional<int> quantile_index(int N, double eps, double beta) {
  if (N < 1 || !(eps > 0.0) || !(eps < 1.0) || beta < 0.0 || beta >= 1.0)
    throw Error("quantile_index: bad parameters");
  // The full sum is 1 - (1-eps)^N < 1, so confidence 1 is never reachable.
  if (beta == 0.0) return std::nullopt;
  // Terms t_i = C(N,i)(1-eps)^i eps^(N-i), accumulated as a running
  // log-sum-exp so N ~ 1e4 survives.
  const double log_q = std::log1p(-eps) - std::log(eps);
  double log_term = static_cast<double>(N) * std::log(eps);
  double max_log = log_term;
  double scaled_sum = 1.0;  // sum of exp(log_t - max_log)
  const double target = std::log1p(-beta);
  for (int L = 1; L <= N; ++L) {
    // After including i = L-1 the sum covers i = 0 .. L-1.
    if (L > 1) {
      const int i = L - 1;
      log_term += std::log(static_cast<double>(N - i + 1) /
                           static_cast<double>(i)) +
                  log_q;
      if (log_term > max_log) {
        scaled_sum = scaled_sum * std::exp(max_log - log_term) + 1.0;
        max_log = log_term;
      } else {
        scaled_sum += std::exp(log_term - max_log);
      }
    }
    if (max_log + std::log(scaled_sum) >= target - 1e-12) return L;
  }
  return std::nullopt;
}

std::pair<double, int> initial_gamma(const Eigen::MatrixXd& samples,
                                     const Eigen::VectorXd& mu,
                                     const Eigen::MatrixXd& lambda, double eps,
                                     double beta) {
  const auto lstar =
      quantile_index(static_cast<int>(samples.rows()), eps, beta);
  if (!lstar)
    throw UnsolvableQuantile(
        "initial_gamma: no valid confidence upper bound for these (N, eps, "
        "beta)");
  Eigen::VectorXd g = gamma_values(mu, lambda, samples);
  std::vector<double> v(g.data(), g.data() + g.size());
  std::stable_sort(v.begin(), v.end());
  return {v[static_cast<std::size_t>(*lstar - 1)], *lstar};
}

double estimate_pvio(const PerturbedConstraint& pc, const Eigen::VectorXd& x,
                     const Eigen::MatrixXd& samples) {
  ViolationEstimator est(pc, samples);
  return est(x);
}

ViolationEstimator::ViolationEstimator(const PerturbedConstraint& pc,
                                       const Eigen::MatrixXd& samples) {
  if (samples.cols() != pc.r)
    throw DimensionMismatch("ViolationEstimator: sample dimension");
  auto basis = polycore::monomial_basis(pc.r, pc.d);
  std::vector<int> active;
  for (int t = 0; t < basis->size(); ++t)
    if (pc.b[t] != 0.0 || pc.A.row(t).cwiseAbs().sum() != 0.0)
      active.push_back(t);
  const long long n = samples.rows();
  monomials_.resize(n, active.size());
  term_a_.resize(active.size(), pc.n);
  term_b_.resize(active.size());
  for (std::size_t c = 0; c < active.size(); ++c) {
    const polycore::Exponent& alpha = basis->exponent_at(active[c]);
    term_a_.row(c) = pc.A.row(active[c]);
    term_b_[c] = pc.b[active[c]];
    for (long long i = 0; i < n; ++i) {
      double m = 1.0;
      for (int j = 0; j < pc.r; ++j)
        if (alpha[j] != 0) m *= polycore::int_pow(samples(i, j), alpha[j]);
      monomials_(i, c) = m;
    }
  }
}

long long ViolationEstimator::count_violations(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd coef = term_a_ * x + term_b_;
  const Eigen::VectorXd h = monomials_ * coef;
  return (h.array() < 0.0).count();
}

double ViolationEstimator::operator()(const Eigen::VectorXd& x) const {
  return static_cast<double>(count_violations(x)) /
         static_cast<double>(monomials_.rows());
}

const char* to_string(SizingStatus status) {
  switch (status) {
    case SizingStatus::converged: return "converged";
    case SizingStatus::max_loops: return "max-loops";
    case SizingStatus::beta_doubled: return "beta-doubled";
  }
  return "unknown";
}

SizingReport size_uncertainty_set(const PerturbedConstraint& pc,
                                  const Eigen::VectorXd& mu,
                                  const Eigen::MatrixXd& lambda,
                                  const RandomModel& model,
                                  const SizingOptions& opts,
                                  const RobustSolver& solve_at) {
  if (!(opts.rho > 0.0) || !(opts.eps > 0.0) || !(opts.eps < 1.0))
    throw Error("size_uncertainty_set: bad eps/rho");
  SizingReport rep;

  // Step 1: one draw for the whole run; the first N rows order the
  // Mahalanobis statistics, the rest estimate violation probabilities.
  const Eigen::MatrixXd all =
      sample(model, opts.N + static_cast<int>(opts.Nhat), opts.seed);
  const Eigen::MatrixXd head = all.topRows(opts.N);
  const ViolationEstimator pvio(pc, all.bottomRows(all.rows() - opts.N));

  // Step 2: order-statistic bound, doubling beta while unsolvable.
  double beta = opts.beta;
  std::optional<int> lstar = quantile_index(opts.N, opts.eps, beta);
  while (!lstar) {
    if (rep.beta_doublings >= opts.max_beta_doublings)
      throw UnsolvableQuantile(
          "size_uncertainty_set: quantile bound unsolvable after the beta "
          "doubling cap");
    beta *= 2.0;
    ++rep.beta_doublings;
    lstar = quantile_index(opts.N, opts.eps, beta);
  }
  rep.lstar = *lstar;
  {
    Eigen::VectorXd g = gamma_values(mu, lambda, head);
    std::vector<double> v(g.data(), g.data() + g.size());
    std::stable_sort(v.begin(), v.end());
    rep.initial_gamma = v[static_cast<std::size_t>(*lstar - 1)];
  }

  double gamma_lo = 0.0;
  double gamma_hi = rep.initial_gamma;
  double gamma = rep.initial_gamma;

  for (int loop = 1; loop <= opts.max_loops; ++loop) {
    Eigen::VectorXd x;
    double f = 0.0;
    try {
      std::tie(x, f) = solve_at(gamma);
    } catch (const std::exception& e) {
      rep.loops = loop - 1;
      throw SizingAbort(std::string("robust solve failed at set size ") +
                            std::to_string(gamma) + ": " + e.what(),
                        rep);
    }
    const double p = pvio(x);
    rep.trace.push_back({loop, gamma, f, p});
    rep.loops = loop;
    rep.gamma_star = gamma;

    // Step 3 before Step 4 every loop, per the stopping rule.
    if (std::abs(p - opts.eps) <= opts.rho) {
      rep.status = rep.beta_doublings > 0 ? SizingStatus::beta_doubled
                                          : SizingStatus::converged;
      return rep;
    }
    if (p < opts.eps) gamma_hi = gamma;
    else gamma_lo = gamma;
    // An unsuitable initial bound (violation above eps at Gamma_1) pins the
    // bracket shut; stop instead of re-solving the same size.
    if (!(gamma_lo < gamma_hi)) break;
    gamma = 0.5 * (gamma_lo + gamma_hi);
  }
  // Best feasible-side size seen.
  rep.gamma_star = gamma_hi;
  rep.status = SizingStatus::max_loops;
  return rep;
}

Eigen::MatrixXd sample_in_ellipsoid(const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& lambda,
                                    double gamma, int n, std::uint64_t seed) {
  const int r = static_cast<int>(mu.size());
  const Eigen::MatrixXd L = cholesky_of(lambda, 1e-12);
  Eigen::MatrixXd out(n, r);
  for (int i = 0; i < n; ++i) {
    RandomStream rs(substream_seed(seed, static_cast<std::uint64_t>(i)));
    Eigen::VectorXd z(r);
    for (int j = 0; j < r; ++j) z[j] = rs.normal();
    const double nz = z.norm();
    const double radius = std::pow(rs.uniform01(), 1.0 / r);
    const Eigen::VectorXd dir = (nz > 0.0) ? (z / nz).eval() : z;
    out.row(i) =
        (mu + std::sqrt(gamma) * (L * (radius * dir))).transpose();
  }
  return out;
}

}  // namespace uncertainkit
}  // namespace cco
