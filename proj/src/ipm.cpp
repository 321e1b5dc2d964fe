// Reference conic solver: dense Mehrotra-style predictor-corrector
// interior-point method with Nesterov-Todd scaling, run on the homogeneous
// self-dual embedding so infeasibility certificates fall out of the
// iterates. Cones handled: free, nonnegative orthant, dense PSD blocks in
// scaled-triangle (svec) coordinates.
//
// Scaling conventions per PSD block, with S = Ls Ls', Z = Lz Lz' and the
// SVD Lz' Ls = U diag(sigma) V':
//   R     = Ls V diag(sigma)^-1/2      so S = R diag(sigma) R'
//   R^-1  = diag(sigma)^-1/2 U' Lz'    so Z = R^-T diag(sigma) R^-1
//   W(X)  = R' X R,  W^T(X) = R X R',  W^-T(X) = R^-1 X R^-T
// which gives W(Z) = W^-T(S) = diag(sigma), the scaled point lambda.

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cco/conicore.hpp"

namespace cco {
namespace conicore {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Layout {
  int m = 0;
  int n_free = 0;
  int n_lin = 0;
  std::vector<int> psd_sides;
  std::vector<int> psd_offsets;  // within the cone segment
  int n_cone = 0;
  double barrier = 0.0;  // total cone degree
  std::vector<int> internal_of_user;
};

Layout make_layout(const ConicProgram& prog) {
  Layout lay;
  lay.m = prog.num_rows();
  lay.internal_of_user.assign(prog.num_vars(), -1);
  for (const Block& b : prog.blocks()) {
    if (b.kind == BlockKind::free_vars) lay.n_free += b.size;
    else if (b.kind == BlockKind::nonneg) lay.n_lin += b.size;
  }
  int free_at = 0;
  int lin_at = 0;
  int psd_at = lay.n_lin;
  for (const Block& b : prog.blocks()) {
    switch (b.kind) {
      case BlockKind::free_vars:
        for (int i = 0; i < b.size; ++i)
          lay.internal_of_user[b.offset + i] = free_at++;
        break;
      case BlockKind::nonneg:
        for (int i = 0; i < b.size; ++i)
          lay.internal_of_user[b.offset + i] = lay.n_free + lin_at++;
        break;
      case BlockKind::psd: {
        lay.psd_sides.push_back(b.size);
        lay.psd_offsets.push_back(psd_at);
        const int count = b.scalar_count();
        for (int i = 0; i < count; ++i)
          lay.internal_of_user[b.offset + i] = lay.n_free + psd_at + i;
        psd_at += count;
        break;
      }
    }
  }
  lay.n_cone = psd_at;
  lay.barrier = lay.n_lin;
  for (int s : lay.psd_sides) lay.barrier += s;
  return lay;
}

void svec_to_mat(const Eigen::Ref<const VectorXd>& q, MatrixXd& M) {
  const int s = static_cast<int>(M.rows());
  int idx = 0;
  for (int i = 0; i < s; ++i) {
    M(i, i) = q[idx++];
    for (int j = i + 1; j < s; ++j, ++idx) {
      const double v = q[idx] / kSqrt2;
      M(i, j) = v;
      M(j, i) = v;
    }
  }
}

void mat_to_svec(const MatrixXd& M, Eigen::Ref<VectorXd> q) {
  const int s = static_cast<int>(M.rows());
  int idx = 0;
  for (int i = 0; i < s; ++i) {
    q[idx++] = M(i, i);
    for (int j = i + 1; j < s; ++j, ++idx)
      q[idx] = kSqrt2 * 0.5 * (M(i, j) + M(j, i));
  }
}

// Unit-lower LDL^T factorization without pivoting, in place: the strictly
// lower part of K receives L, the diagonal receives D. Pivots of the first
// n_pos rows are clamped to at least +delta, the remaining ones to at most
// -delta (dynamic quasidefinite regularization); iterative refinement
// against the exact matrix recovers the perturbation.
bool ldlt_factor(MatrixXd& K, int n_pos, double delta) {
  const int n = static_cast<int>(K.rows());
  for (int j = 0; j < n; ++j) {
    double djj = K(j, j);
    for (int k = 0; k < j; ++k) djj -= K(j, k) * K(j, k) * K(k, k);
    if (!std::isfinite(djj)) return false;
    if (j < n_pos) djj = std::max(djj, delta);
    else djj = std::min(djj, -delta);
    K(j, j) = djj;
    const int rest = n - j - 1;
    if (rest > 0) {
      VectorXd acc = K.col(j).tail(rest);
      if (j > 0)
        acc.noalias() -=
            K.bottomLeftCorner(rest, j) *
            (K.diagonal().head(j).cwiseProduct(K.row(j).head(j).transpose()));
      K.col(j).tail(rest) = acc / djj;
    }
  }
  return true;
}

void ldlt_solve_inplace(const MatrixXd& K, VectorXd& x) {
  K.triangularView<Eigen::UnitLower>().solveInPlace(x);
  x.array() /= K.diagonal().array();
  K.triangularView<Eigen::UnitLower>().transpose().solveInPlace(x);
}

struct Scaling {
  VectorXd d;  // nonneg part of W
  VectorXd lin_lambda;
  std::vector<MatrixXd> R;
  std::vector<MatrixXd> Rinv;
  std::vector<MatrixXd> Wnt;  // R R'
  std::vector<VectorXd> sigma;
};

class Cone {
 public:
  explicit Cone(const Layout& lay) : lay_(lay) {}

  VectorXd identity() const {
    VectorXd e = VectorXd::Zero(lay_.n_cone);
    e.head(lay_.n_lin).setOnes();
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      const int s = lay_.psd_sides[b];
      int idx = lay_.psd_offsets[b];
      for (int i = 0; i < s; ++i) {
        e[idx] = 1.0;
        idx += s - i;
      }
    }
    return e;
  }

  // Largest alpha <= cap keeping x + alpha*dx in the cone.
  double max_step(const VectorXd& x, const VectorXd& dx, double cap) const {
    double alpha = cap;
    for (int i = 0; i < lay_.n_lin; ++i)
      if (dx[i] < 0.0) alpha = std::min(alpha, -x[i] / dx[i]);
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      const int s = lay_.psd_sides[b];
      const int len = s * (s + 1) / 2;
      MatrixXd X(s, s), D(s, s);
      svec_to_mat(x.segment(lay_.psd_offsets[b], len), X);
      svec_to_mat(dx.segment(lay_.psd_offsets[b], len), D);
      Eigen::LLT<MatrixXd> llt(X);
      if (llt.info() != Eigen::Success) return 0.0;
      MatrixXd L = llt.matrixL();
      MatrixXd T = L.triangularView<Eigen::Lower>().solve(D);
      T = L.triangularView<Eigen::Lower>()
              .solve(T.transpose())
              .eval();  // L^-1 D L^-T
      T = (0.5 * (T + T.transpose())).eval();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(T, Eigen::EigenvaluesOnly);
      const double lmin = es.eigenvalues().minCoeff();
      if (lmin < 0.0) alpha = std::min(alpha, -1.0 / lmin);
    }
    return alpha;
  }

  bool compute_scaling(const VectorXd& s, const VectorXd& z,
                       Scaling& w) const {
    w.d = (s.head(lay_.n_lin).array() / z.head(lay_.n_lin).array()).sqrt();
    w.lin_lambda =
        (s.head(lay_.n_lin).array() * z.head(lay_.n_lin).array()).sqrt();
    if (!w.d.allFinite() || !w.lin_lambda.allFinite()) return false;
    const std::size_t nb = lay_.psd_sides.size();
    w.R.resize(nb);
    w.Rinv.resize(nb);
    w.Wnt.resize(nb);
    w.sigma.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      const int side = lay_.psd_sides[b];
      const int len = side * (side + 1) / 2;
      MatrixXd S(side, side), Z(side, side);
      svec_to_mat(s.segment(lay_.psd_offsets[b], len), S);
      svec_to_mat(z.segment(lay_.psd_offsets[b], len), Z);
      Eigen::LLT<MatrixXd> llt_s(S), llt_z(Z);
      if (llt_s.info() != Eigen::Success || llt_z.info() != Eigen::Success)
        return false;
      MatrixXd Ls = llt_s.matrixL();
      MatrixXd Lz = llt_z.matrixL();
      Eigen::JacobiSVD<MatrixXd> svd(
          Lz.transpose() * Ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
      const VectorXd& sv = svd.singularValues();
      if (!(sv.minCoeff() > 0.0)) return false;
      const VectorXd isq = sv.array().sqrt().inverse();
      w.R[b] = Ls * svd.matrixV() * isq.asDiagonal();
      w.Rinv[b] = isq.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
      w.Wnt[b] = w.R[b] * w.R[b].transpose();
      w.sigma[b] = sv;
    }
    return true;
  }

  VectorXd apply_W(const Scaling& w, const VectorXd& x) const {
    VectorXd y(lay_.n_cone);
    y.head(lay_.n_lin) = w.d.cwiseProduct(x.head(lay_.n_lin));
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b)
      psd_sandwich(w.R[b], x, y, b);  // R' X R
    return y;
  }

  VectorXd apply_WT(const Scaling& w, const VectorXd& x) const {
    VectorXd y(lay_.n_cone);
    y.head(lay_.n_lin) = w.d.cwiseProduct(x.head(lay_.n_lin));
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b)
      psd_sandwich(w.R[b].transpose(), x, y, b);  // R X R'
    return y;
  }

  VectorXd apply_WinvT(const Scaling& w, const VectorXd& x) const {
    VectorXd y(lay_.n_cone);
    y.head(lay_.n_lin) = x.head(lay_.n_lin).cwiseQuotient(w.d);
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b)
      psd_sandwich(w.Rinv[b].transpose(), x, y, b);  // R^-1 X R^-T
    return y;
  }

  VectorXd apply_H(const Scaling& w, const VectorXd& x) const {
    VectorXd y(lay_.n_cone);
    y.head(lay_.n_lin) =
        w.d.array().square().matrix().cwiseProduct(x.head(lay_.n_lin));
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b)
      psd_sandwich(w.Wnt[b], x, y, b);  // Wnt X Wnt, Wnt symmetric
    return y;
  }

  // Solve lambda o u = v in the scaled space (lambda diagonal there).
  VectorXd lambda_solve(const Scaling& w, const VectorXd& v) const {
    VectorXd u(lay_.n_cone);
    u.head(lay_.n_lin) = v.head(lay_.n_lin).cwiseQuotient(w.lin_lambda);
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      const int s = lay_.psd_sides[b];
      const VectorXd& sig = w.sigma[b];
      int idx = lay_.psd_offsets[b];
      for (int i = 0; i < s; ++i)
        for (int j = i; j < s; ++j, ++idx)
          u[idx] = 2.0 * v[idx] / (sig[i] + sig[j]);
    }
    return u;
  }

  VectorXd lambda_square(const Scaling& w) const {
    VectorXd v = VectorXd::Zero(lay_.n_cone);
    v.head(lay_.n_lin) = w.lin_lambda.array().square();
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      const int s = lay_.psd_sides[b];
      int idx = lay_.psd_offsets[b];
      for (int i = 0; i < s; ++i) {
        v[idx] = w.sigma[b][i] * w.sigma[b][i];
        idx += s - i;
      }
    }
    return v;
  }

  VectorXd jordan(const VectorXd& u, const VectorXd& v) const {
    VectorXd out(lay_.n_cone);
    out.head(lay_.n_lin) = u.head(lay_.n_lin).cwiseProduct(v.head(lay_.n_lin));
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      const int s = lay_.psd_sides[b];
      const int len = s * (s + 1) / 2;
      MatrixXd U(s, s), V(s, s);
      svec_to_mat(u.segment(lay_.psd_offsets[b], len), U);
      svec_to_mat(v.segment(lay_.psd_offsets[b], len), V);
      const MatrixXd P = 0.5 * (U * V + V * U);
      mat_to_svec(P, out.segment(lay_.psd_offsets[b], len));
    }
    return out;
  }

  // Scaled constraint row W(a), so that <H a_i, a_j> = W(a_i) . W(a_j).
  void scale_row(const Scaling& w,
                 const std::vector<std::pair<int, double>>& row_entries,
                 VectorXd& out, std::vector<MatrixXd>& work,
                 std::vector<char>& touched) const {
    out.setZero();
    for (const auto& [col, val] : row_entries) {
      if (col < lay_.n_lin) {
        out[col] = w.d[col] * val;
      } else {
        const int b = block_of(col);
        if (!touched[b]) {
          work[b].setZero();
          touched[b] = 1;
        }
        const auto [i, j] = entry_of(col, b);
        const double x = (i == j) ? val : val / kSqrt2;
        work[b](i, j) = x;
        work[b](j, i) = x;
      }
    }
    for (std::size_t b = 0; b < lay_.psd_sides.size(); ++b) {
      if (!touched[b]) continue;
      touched[b] = 0;
      const int s = lay_.psd_sides[b];
      const MatrixXd B = w.R[b].transpose() * work[b] * w.R[b];
      mat_to_svec(B, out.segment(lay_.psd_offsets[b], s * (s + 1) / 2));
    }
  }

  int block_of(int cone_col) const {
    for (std::size_t b = lay_.psd_sides.size(); b-- > 0;)
      if (cone_col >= lay_.psd_offsets[b]) return static_cast<int>(b);
    throw Error("internal: bad cone column");
  }

  std::pair<int, int> entry_of(int cone_col, int b) const {
    const int s = lay_.psd_sides[b];
    int local = cone_col - lay_.psd_offsets[b];
    int i = 0;
    while (local >= s - i) {
      local -= s - i;
      ++i;
    }
    return {i, i + local};
  }

 private:
  // y_block = svec(P' X P) for X = mat(x_block).
  void psd_sandwich(const MatrixXd& P, const VectorXd& x, VectorXd& y,
                    std::size_t b) const {
    const int s = lay_.psd_sides[b];
    const int len = s * (s + 1) / 2;
    MatrixXd X(s, s);
    svec_to_mat(x.segment(lay_.psd_offsets[b], len), X);
    const MatrixXd Y = P.transpose() * X * P;
    mat_to_svec(Y, y.segment(lay_.psd_offsets[b], len));
  }

  const Layout& lay_;
};

struct Direction {
  VectorXd du, dy, ds, dz;
  double dtau = 0.0, dkappa = 0.0;
};

class ReferenceSolver : public SolverBackend {
 public:
  std::string name() const override { return "reference"; }
  PrimalDualSolution solve(const ConicProgram& prog,
                           const SolveOptions& opts) const override;
};

PrimalDualSolution ReferenceSolver::solve(const ConicProgram& prog,
                                          const SolveOptions& opts) const {
  const Layout lay = make_layout(prog);
  const int m = lay.m;
  const int nf = lay.n_free;
  const int nc = lay.n_cone;
  if (m == 0) throw Error("conic solve: program has no equality rows");
  if (nc == 0) throw Error("conic solve: program has no cone variables");

  VectorXd b(m);
  for (int i = 0; i < m; ++i) b[i] = prog.rhs(i);
  const VectorXd c_user = prog.objective_vector();
  VectorXd cu = VectorXd::Zero(nf);
  VectorXd cs = VectorXd::Zero(nc);
  for (int uvar = 0; uvar < prog.num_vars(); ++uvar) {
    const int v = lay.internal_of_user[uvar];
    if (v < nf) cu[v] += c_user[uvar];
    else cs[v - nf] += c_user[uvar];
  }

  std::vector<std::vector<std::pair<int, double>>> cone_rows(m);
  std::vector<Eigen::Triplet<double>> trip_f, trip_g;
  {
    std::map<std::pair<int, int>, double> accum;
    for (const auto& e : prog.entries())
      accum[{e.row, lay.internal_of_user[e.col]}] += e.value;
    for (const auto& [key, val] : accum) {
      if (val == 0.0) continue;
      const auto [row, col] = key;
      if (col < nf) trip_f.emplace_back(row, col, val);
      else {
        trip_g.emplace_back(row, col - nf, val);
        cone_rows[row].emplace_back(col - nf, val);
      }
    }
  }
  Eigen::SparseMatrix<double> F(m, nf), G(m, nc);
  F.setFromTriplets(trip_f.begin(), trip_f.end());
  G.setFromTriplets(trip_g.begin(), trip_g.end());

  const Cone cone(lay);

  VectorXd u = VectorXd::Zero(nf);
  VectorXd y = VectorXd::Zero(m);
  VectorXd s = cone.identity();
  VectorXd z = cone.identity();
  double tau = 1.0, kappa = 1.0;

  const double norm_b = 1.0 + b.norm();
  const double norm_c = 1.0 + std::sqrt(cu.squaredNorm() + cs.squaredNorm());
  const double nu = lay.barrier;

  PrimalDualSolution best;
  double best_metric = std::numeric_limits<double>::infinity();

  const auto fill_point = [&](PrimalDualSolution& out, double scale) {
    scale = (std::abs(scale) < 1e-300) ? 1e-300 : scale;
    VectorXd v_user(prog.num_vars());
    VectorXd z_user = VectorXd::Zero(prog.num_vars());
    for (int uvar = 0; uvar < prog.num_vars(); ++uvar) {
      const int v = lay.internal_of_user[uvar];
      v_user[uvar] = (v < nf ? u[v] : s[v - nf]) / scale;
      if (v >= nf) z_user[uvar] = z[v - nf] / scale;
    }
    out.primal = std::move(v_user);
    out.cone_dual = std::move(z_user);
    out.equality_dual = y / scale;
  };

  Scaling w;
  std::vector<MatrixXd> row_work;
  std::vector<char> row_touched(lay.psd_sides.size(), 0);
  for (int side : lay.psd_sides) row_work.emplace_back(side, side);

  MatrixXd K_exact(m + nf, m + nf), K_fact(m + nf, m + nf);
  RowMajorMatrixXd Ghat(m, nc);
  VectorXd row_buf(nc);
  int stall = 0;

  for (int iter = 0; iter <= opts.max_iterations; ++iter) {
    const VectorXd res_p = F * u + G * s - b * tau;
    const VectorXd res_f = cu * tau - F.transpose() * y;
    const VectorXd res_d = cs * tau - G.transpose() * y - z;
    const double ctv = cu.dot(u) + cs.dot(s);
    const double bty = b.dot(y);
    const double res_g = bty - ctv - kappa;
    const double mu = (s.dot(z) + tau * kappa) / (nu + 1.0);

    const double pobj = ctv / tau;
    const double dobj = bty / tau;
    const double pres = (res_p / tau).norm() / norm_b;
    const double dres =
        std::sqrt((res_f / tau).squaredNorm() + (res_d / tau).squaredNorm()) /
        norm_c;
    const double gap_abs = std::abs(pobj - dobj);
    const bool gap_ok = gap_abs <= opts.gap_tol * (1.0 + std::abs(pobj));

    if (opts.verbose) {
      std::fprintf(stderr,
                   "ipm %3d  pobj % .6e dobj % .6e pres %.2e dres %.2e mu "
                   "%.2e tau %.2e kap %.2e\n",
                   iter, pobj, dobj, pres, dres, mu, tau, kappa);
    }

    const double metric =
        std::max({pres, dres, gap_abs / (1.0 + std::abs(pobj))});
    if (metric < best_metric) {
      best_metric = metric;
      fill_point(best, tau);
      best.primal_objective = pobj;
      best.dual_objective = dobj;
      best.gap = gap_abs;
      best.primal_residual = pres;
      best.dual_residual = dres;
      best.iterations = iter;
    }

    if (pres <= opts.feas_tol && dres <= opts.feas_tol && gap_ok) {
      PrimalDualSolution out;
      out.status = SolveStatus::optimal;
      fill_point(out, tau);
      out.primal_objective = pobj;
      out.dual_objective = dobj;
      out.gap = gap_abs;
      out.primal_residual = pres;
      out.dual_residual = dres;
      out.iterations = iter;
      return out;
    }

    if (kappa > tau) {
      if (bty > 0.0) {
        const double pinf =
            std::sqrt((F.transpose() * y).squaredNorm() +
                      (G.transpose() * y + z).squaredNorm()) /
            bty / norm_c;
        if (pinf <= opts.feas_tol) {
          PrimalDualSolution out;
          out.status = SolveStatus::primal_infeasible;
          fill_point(out, bty);
          out.iterations = iter;
          out.primal_residual = pinf;
          return out;
        }
      }
      if (ctv < 0.0) {
        const double dinf = (F * u + G * s).norm() / (-ctv) / norm_b;
        if (dinf <= opts.feas_tol) {
          PrimalDualSolution out;
          out.status = SolveStatus::dual_infeasible;
          fill_point(out, -ctv);
          out.iterations = iter;
          out.dual_residual = dinf;
          return out;
        }
      }
    }

    if (iter == opts.max_iterations || mu < 1e-18 || stall >= 5) break;

    if (!cone.compute_scaling(s, z, w)) {
      if (opts.verbose) std::fprintf(stderr, "break: scaling failed\n");
      break;
    }

    // Schur complement [G H G', F; F', 0], factored with quasidefinite
    // regularization and solved with iterative refinement on the exact K.
    for (int i = 0; i < m; ++i) {
      cone.scale_row(w, cone_rows[i], row_buf, row_work, row_touched);
      Ghat.row(i) = row_buf;
    }
    {
      MatrixXd schur = MatrixXd::Zero(m, m);
      schur.selfadjointView<Eigen::Lower>().rankUpdate(Ghat);
      K_exact.setZero();
      K_exact.topLeftCorner(m, m) = schur.selfadjointView<Eigen::Lower>();
    }
    if (nf > 0) {
      const MatrixXd Fd = MatrixXd(F);
      K_exact.topRightCorner(m, nf) = Fd;
      K_exact.bottomLeftCorner(nf, m) = Fd.transpose();
    }

    // Symmetric Jacobi scaling keeps the pivots O(1) even when the Schur
    // block blows up like 1/mu near convergence.
    VectorXd jac(m + nf);
    for (int j = 0; j < m + nf; ++j) {
      const double d = std::max(std::abs(K_exact(j, j)),
                                K_exact.col(j).cwiseAbs().maxCoeff());
      jac[j] = 1.0 / std::sqrt(std::max(d, 1e-150));
    }
    bool factored = false;
    double delta = opts.static_reg;
    for (int attempt = 0; attempt < 4 && !factored; ++attempt) {
      K_fact = jac.asDiagonal() * K_exact * jac.asDiagonal();
      factored = ldlt_factor(K_fact, m, delta);
      delta *= 1e3;
    }
    if (!factored) {
      if (opts.verbose) std::fprintf(stderr, "break: factorization failed\n");
      break;
    }

    const auto kkt_solve = [&](const VectorXd& rhs) {
      auto base_solve = [&](const VectorXd& r) {
        VectorXd t = jac.cwiseProduct(r);
        ldlt_solve_inplace(K_fact, t);
        return VectorXd(jac.cwiseProduct(t));
      };
      VectorXd x = base_solve(rhs);
      double best_res = std::numeric_limits<double>::infinity();
      VectorXd best_x = x;
      for (int it = 0; it < opts.kkt_refinements; ++it) {
        VectorXd r = rhs - K_exact * x;
        const double rn = r.norm();
        if (rn < best_res) {
          best_res = rn;
          best_x = x;
        }
        x += base_solve(r);
      }
      VectorXd r = rhs - K_exact * x;
      if (r.norm() > best_res) x = best_x;
      return x;
    };

    const VectorXd Hcs = cone.apply_H(w, cs);
    const VectorXd GHcs = G * Hcs;
    VectorXd rhs2(m + nf);
    rhs2.head(m) = GHcs + b;
    rhs2.tail(nf) = cu;
    const VectorXd w2 = kkt_solve(rhs2);
    VectorXd pvec(m + nf);
    pvec.head(m) = b - GHcs;
    pvec.tail(nf) = -cu;
    // den equals |W(G'dy2 - c_s)|^2 + kappa/tau algebraically; this form is
    // cancellation-free where the direct inner-product expression is not.
    const VectorXd wres = cone.apply_W(w, G.transpose() * w2.head(m) - cs);
    const double den = wres.squaredNorm() + kappa / tau;
    if (!(den > 0.0) || !std::isfinite(den)) {
      if (opts.verbose) std::fprintf(stderr, "break: denominator %.3e\n", den);
      break;
    }

    const auto solve_dir = [&](const VectorXd& qp, const VectorXd& qf,
                               const VectorXd& qd, double qg,
                               const VectorXd& dsc, double dtk) {
      Direction dir;
      const VectorXd dtil = cone.lambda_solve(w, dsc);
      const VectorXd WTdtil = cone.apply_WT(w, dtil);
      const VectorXd Hqd = cone.apply_H(w, qd);
      VectorXd rhs1(m + nf);
      rhs1.head(m) = qp - G * (WTdtil + Hqd);
      rhs1.tail(nf) = -qf;
      const VectorXd w1 = kkt_solve(rhs1);
      const double num = qg + dtk / tau + cs.dot(WTdtil + Hqd) - pvec.dot(w1);
      dir.dtau = num / den;
      const VectorXd yx = w1 + dir.dtau * w2;
      dir.dy = yx.head(m);
      dir.du = yx.tail(nf);
      dir.dz = -(G.transpose() * dir.dy) + cs * dir.dtau - qd;
      dir.ds = WTdtil - cone.apply_H(w, dir.dz);
      dir.dkappa = (dtk - kappa * dir.dtau) / tau;
      return dir;
    };

    const VectorXd lam_sq = cone.lambda_square(w);
    const Direction aff =
        solve_dir(-res_p, -res_f, -res_d, -res_g, -lam_sq, -tau * kappa);
    double alpha_aff = cone.max_step(s, aff.ds, 1.0);
    alpha_aff = std::min(alpha_aff, cone.max_step(z, aff.dz, alpha_aff));
    if (aff.dtau < 0.0) alpha_aff = std::min(alpha_aff, -tau / aff.dtau);
    if (aff.dkappa < 0.0) alpha_aff = std::min(alpha_aff, -kappa / aff.dkappa);
    const double sigma = std::pow(1.0 - std::min(alpha_aff, 1.0), 3.0);

    const VectorXd ds_scaled = cone.apply_WinvT(w, aff.ds);
    const VectorXd dz_scaled = cone.apply_W(w, aff.dz);
    const VectorXd dsc = -lam_sq - cone.jordan(ds_scaled, dz_scaled) +
                         sigma * mu * cone.identity();
    const double dtk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
    const double rfac = -(1.0 - sigma);
    const Direction dir = solve_dir(rfac * res_p, rfac * res_f, rfac * res_d,
                                    rfac * res_g, dsc, dtk);

    double alpha = cone.max_step(s, dir.ds, 1.0 / opts.step_fraction);
    alpha = std::min(alpha, cone.max_step(z, dir.dz, alpha));
    if (dir.dtau < 0.0) alpha = std::min(alpha, -tau / dir.dtau);
    if (dir.dkappa < 0.0) alpha = std::min(alpha, -kappa / dir.dkappa);
    alpha = std::min(1.0, opts.step_fraction * alpha);
    if (alpha < 1e-8) ++stall;
    else stall = 0;

    u += alpha * dir.du;
    y += alpha * dir.dy;
    s += alpha * dir.ds;
    z += alpha * dir.dz;
    tau += alpha * dir.dtau;
    kappa += alpha * dir.dkappa;
  }

  best.status = SolveStatus::numerical_failure;
  return best;
}

}  // namespace

namespace detail {

void register_builtin_backends() {
  register_backend(std::make_shared<ReferenceSolver>());
}

}  // namespace detail
}  // namespace conicore
}  // namespace cco
