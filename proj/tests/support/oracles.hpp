#ifndef CCO_TESTS_SUPPORT_ORACLES_HPP
#define CCO_TESTS_SUPPORT_ORACLES_HPP

#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cco/conicore.hpp"

namespace cco_tests {

using cco::conicore::Block;
using cco::conicore::BlockKind;
using cco::conicore::ConicProgram;

/// A conic program generated from known strictly interior primal and dual
/// points, so it is solvable with zero duality gap and attained optima.
struct InteriorInstance {
  ConicProgram prog;
  Eigen::VectorXd v0;  // strictly feasible primal point
  Eigen::VectorXd y0;  // strictly feasible dual multipliers
  Eigen::VectorXd z0;  // strictly feasible dual slack
};

inline void fill_psd_interior(std::mt19937_64& rng, ConicProgram& p, int blk,
                              int side, Eigen::VectorXd& v) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd B(side, side);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) B(i, j) = 0.2 * nd(rng);
  const Eigen::MatrixXd X =
      Eigen::MatrixXd::Identity(side, side) + 0.5 * (B + B.transpose());
  for (int i = 0; i < side; ++i)
    for (int j = i; j < side; ++j)
      v[p.svec_var(blk, i, j)] = (i == j) ? X(i, j) : X(i, j) * std::sqrt(2.0);
}

inline InteriorInstance random_interior_instance(std::mt19937_64& rng,
                                                 int n_free, int n_lin,
                                                 std::vector<int> psd_sides,
                                                 int m) {
  std::normal_distribution<double> nd;
  InteriorInstance inst;
  ConicProgram& p = inst.prog;
  int fb = -1, lb = -1;
  if (n_free > 0) fb = p.add_free_block(n_free, "f");
  if (n_lin > 0) lb = p.add_nonneg_block(n_lin, "l");
  std::vector<int> blocks;
  for (int side : psd_sides) blocks.push_back(p.add_psd_block(side, "s"));

  const int n = p.num_vars();
  inst.v0 = Eigen::VectorXd::Zero(n);
  inst.z0 = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n_free; ++i) inst.v0[p.var(fb, i)] = nd(rng);
  for (int i = 0; i < n_lin; ++i) {
    inst.v0[p.var(lb, i)] = 0.6 + 0.5 * std::abs(nd(rng));
    inst.z0[p.var(lb, i)] = 0.6 + 0.5 * std::abs(nd(rng));
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    fill_psd_interior(rng, p, blocks[b], psd_sides[b], inst.v0);
    fill_psd_interior(rng, p, blocks[b], psd_sides[b], inst.z0);
  }

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int i = 0; i < m; ++i)
    for (int t = 0; t < 2 + n / 2; ++t) A(i, pick(rng)) += nd(rng);
  inst.y0 = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) inst.y0[i] = nd(rng);

  const Eigen::VectorXd b = A * inst.v0;
  const Eigen::VectorXd c = A.transpose() * inst.y0 + inst.z0;
  for (int i = 0; i < m; ++i) {
    const int row = p.add_equality(b[i], "eq");
    for (int j = 0; j < n; ++j)
      if (A(i, j) != 0.0) p.add_coef(row, j, A(i, j));
  }
  for (int j = 0; j < n; ++j)
    if (c[j] != 0.0) p.add_objective(j, c[j]);
  return inst;
}

/// First-order reference: alternating projections onto the affine KKT set
/// { E w = g } and the cone set { v in K, z in K* } over w = (v, y, z).
/// Any point of the intersection is primal-dual optimal, so the objective at
/// the limit is an independent estimate of the optimal value.
class ProjectionSolver {
 public:
  explicit ProjectionSolver(const ConicProgram& prog) : prog_(prog) {
    const int n = prog.num_vars();
    const int m = prog.num_rows();
    dim_ = 2 * n + m;
    c_ = prog.objective_vector();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
    for (const auto& e : prog.entries()) A(e.row, e.col) += e.value;
    Eigen::VectorXd b(m);
    for (int i = 0; i < m; ++i) b[i] = prog.rhs(i);

    // Rows of the KKT system over (v, y, z):
    //   A v            = b
    //   A' y + z       = c
    //   c' v - b' y    = 0
    E_ = Eigen::MatrixXd::Zero(m + n + 1, dim_);
    g_ = Eigen::VectorXd::Zero(m + n + 1);
    E_.block(0, 0, m, n) = A;
    g_.head(m) = b;
    E_.block(m, n, n, m) = A.transpose();
    E_.block(m, n + m, n, n) = Eigen::MatrixXd::Identity(n, n);
    g_.segment(m, n) = c_;
    E_.block(m + n, 0, 1, n) = c_.transpose();
    E_.block(m + n, n, 1, m) = -b.transpose();
    solver_.compute(E_ * E_.transpose() +
                    1e-12 * Eigen::MatrixXd::Identity(m + n + 1, m + n + 1));
  }

  Eigen::VectorXd project_affine(Eigen::VectorXd w) const {
    const Eigen::VectorXd resid = E_ * w - g_;
    w -= E_.transpose() * solver_.solve(resid);
    return w;
  }

  Eigen::VectorXd project_cone_set(Eigen::VectorXd w) const {
    const int n = prog_.num_vars();
    project_cones(w.head(n));
    project_cones(w.tail(n));
    return w;
  }

  // Douglas-Rachford iteration on the two projections; the shadow sequence
  // P_cone(w) converges to a KKT point, whose objective value is returned.
  double solve(int max_iters = 20000, double tol = 1e-9) const {
    const int n = prog_.num_vars();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(dim_);
    Eigen::VectorXd shadow = w;
    for (int it = 0; it < max_iters; ++it) {
      shadow = project_cone_set(w);
      const Eigen::VectorXd reflected = 2.0 * shadow - w;
      w += project_affine(reflected) - shadow;
      if (it % 100 == 0) {
        const double infeas = (E_ * shadow - g_).norm();
        if (infeas < tol) break;
      }
    }
    shadow = project_cone_set(w);
    return c_.dot(shadow.head(n));
  }

 private:
  void project_cones(Eigen::Ref<Eigen::VectorXd> v) const {
    for (const Block& blk : prog_.blocks()) {
      switch (blk.kind) {
        case BlockKind::free_vars:
          break;
        case BlockKind::nonneg:
          for (int i = 0; i < blk.size; ++i)
            v[blk.offset + i] = std::max(0.0, v[blk.offset + i]);
          break;
        case BlockKind::psd: {
          const int s = blk.size;
          Eigen::MatrixXd X(s, s);
          int idx = blk.offset;
          for (int i = 0; i < s; ++i)
            for (int j = i; j < s; ++j, ++idx) {
              const double x = (i == j) ? v[idx] : v[idx] / std::sqrt(2.0);
              X(i, j) = x;
              X(j, i) = x;
            }
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
          const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
          const Eigen::MatrixXd P =
              es.eigenvectors() * lam.asDiagonal() *
              es.eigenvectors().transpose();
          idx = blk.offset;
          for (int i = 0; i < s; ++i)
            for (int j = i; j < s; ++j, ++idx)
              v[idx] = (i == j) ? P(i, j) : P(i, j) * std::sqrt(2.0);
          break;
        }
      }
    }
  }

  const ConicProgram& prog_;
  int dim_;
  Eigen::VectorXd c_;
  Eigen::MatrixXd E_;
  Eigen::VectorXd g_;
  Eigen::LDLT<Eigen::MatrixXd> solver_;
};

}  // namespace cco_tests

#endif  // CCO_TESTS_SUPPORT_ORACLES_HPP
