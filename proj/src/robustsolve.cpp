#include "cco/robustsolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <Eigen/Dense>

namespace cco {
namespace robustsolve {

using conicore::ConicProgram;
using conicore::PrimalDualSolution;
using conicore::SolveStatus;
using momentkit::monomial_change_matrix;
using polycore::basis_size;
using polycore::coefficient_vector;
using polycore::Exponent;
using polycore::monomial_basis;
using polycore::MonomialBasis;

PerturbedConstraint PerturbedConstraint::from_terms(
    int r, int n, const std::vector<Term>& terms) {
  PerturbedConstraint pc;
  pc.r = r;
  pc.n = n;
  int d = 0;
  for (const Term& t : terms) {
    if (static_cast<int>(t.alpha.size()) != r)
      throw DimensionMismatch("PerturbedConstraint: exponent dimension");
    if (t.a.size() != 0 && t.a.size() != n)
      throw DimensionMismatch("PerturbedConstraint: coefficient length");
    d = std::max(d, polycore::total_degree(t.alpha));
  }
  auto basis = monomial_basis(r, d);
  pc.d = d;
  pc.A = Eigen::MatrixXd::Zero(basis->size(), n);
  pc.b = Eigen::VectorXd::Zero(basis->size());
  for (const Term& t : terms) {
    const int row = basis->index_of(t.alpha);
    if (t.a.size() != 0) pc.A.row(row) += t.a.transpose();
    pc.b[row] += t.b0;
  }
  return pc;
}

Poly PerturbedConstraint::fix_x(const Eigen::VectorXd& x) const {
  if (x.size() != n) throw DimensionMismatch("fix_x: x length");
  const Eigen::VectorXd coeffs = A * x + b;
  return polycore::poly_from_coefficients(coeffs, *monomial_basis(r, d));
}

double PerturbedConstraint::eval(const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& xi) const {
  return polycore::poly_eval(fix_x(x), xi);
}

Eigen::MatrixXd UncertaintySet::scale_cholesky(double pd_tol) const {
  if (lambda.rows() != mu.size() || lambda.cols() != mu.size())
    throw DimensionMismatch("UncertaintySet: shape mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (lambda + lambda.transpose()));
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("UncertaintySet: scale matrix is not PD");
  Eigen::MatrixXd L = llt.matrixL();
  const double scale = L.diagonal().maxCoeff();
  if (L.diagonal().minCoeff() <= pd_tol * std::max(1.0, scale))
    throw NotPositiveDefinite("UncertaintySet: scale matrix nearly singular");
  return L;
}

Poly UncertaintySet::membership_poly() const {
  const int r = dim();
  const Eigen::MatrixXd L = scale_cholesky();
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(r, r);
  L.triangularView<Eigen::Lower>().solveInPlace(inv);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
  // g = gamma - (xi - mu)' inv (xi - mu)
  Poly g = Poly::constant(r, gamma - mu.dot(inv * mu));
  const Eigen::VectorXd lin = 2.0 * (inv * mu);
  for (int i = 0; i < r; ++i)
    if (lin[i] != 0.0) g += Poly::variable(r, i, lin[i]);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      if (inv(i, j) == 0.0) continue;
      Exponent alpha(r, 0);
      alpha[i] += 1;
      alpha[j] += 1;
      g.add_term(alpha, -inv(i, j));
    }
  return g;
}

bool UncertaintySet::contains(const Eigen::VectorXd& xi, double slack) const {
  const Eigen::MatrixXd L = scale_cholesky();
  const Eigen::VectorXd w =
      L.triangularView<Eigen::Lower>().solve(xi - mu);
  return w.squaredNorm() <= gamma + slack;
}

DecisionSet DecisionSet::free_space(int n) {
  DecisionSet X;
  X.n = n;
  X.ineq_lhs = Eigen::MatrixXd::Zero(0, n);
  X.ineq_rhs = Eigen::VectorXd::Zero(0);
  X.eq_lhs = Eigen::MatrixXd::Zero(0, n);
  X.eq_rhs = Eigen::VectorXd::Zero(0);
  return X;
}

const char* to_string(ReportStatus status) {
  switch (status) {
    case ReportStatus::certified:
      return "certified";
    case ReportStatus::max_order_reached:
      return "max-order-reached";
    case ReportStatus::relaxation_unbounded:
      return "relaxation-unbounded";
    case ReportStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

int relaxation_order_floor(int d) {
  if (d < 0) throw DimensionMismatch("relaxation_order_floor: d < 0");
  return std::max((d + 1) / 2, 1);
}

namespace {

struct WorkingData {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Poly g{1};           // membership polynomial in working coordinates
  Eigen::MatrixXd T2k; // [xi]_2k = T2k [eta]_2k
  bool whitened = false;
};

// Centered unit-ball coordinates xi = mu + sqrt(gamma) L eta condition the
// moment relaxation; values and certificates are invariant, the dual moment
// sequence is mapped back through T2k.
WorkingData prepare_working_data(const PerturbedConstraint& pc,
                                 const UncertaintySet& U, int k,
                                 const SolverOptions& opts) {
  if (U.dim() != pc.r)
    throw DimensionMismatch("uncertainty set dimension vs constraint");
  WorkingData wd;
  if (opts.whiten) {
    const Eigen::MatrixXd C = std::sqrt(U.gamma) * U.scale_cholesky();
    wd.T2k = monomial_change_matrix(pc.r, 2 * k, C, U.mu);
    const int sd = static_cast<int>(basis_size(pc.r, pc.d));
    const Eigen::MatrixXd Td = wd.T2k.topLeftCorner(sd, sd);
    wd.A = Td.transpose() * pc.A;
    wd.b = Td.transpose() * pc.b;
    Poly g = Poly::constant(pc.r, 1.0);
    for (int i = 0; i < pc.r; ++i) {
      Exponent sq(pc.r, 0);
      sq[i] = 2;
      g.add_term(sq, -1.0);
    }
    wd.g = g;
    wd.whitened = true;
  } else {
    U.scale_cholesky();  // validates positive-definiteness
    wd.A = pc.A;
    wd.b = pc.b;
    wd.g = U.membership_poly();
    wd.T2k = Eigen::MatrixXd::Identity(basis_size(pc.r, 2 * k),
                                       basis_size(pc.r, 2 * k));
    wd.whitened = false;
  }
  return wd;
}

void append_decision_set_rows(ConicProgram& prog, const DecisionSet& X,
                              const std::vector<int>& x_vars) {
  const int n = static_cast<int>(x_vars.size());
  if (X.num_ineqs() > 0) {
    const int slack = prog.add_nonneg_block(X.num_ineqs(), "xineq.s");
    for (int i = 0; i < X.num_ineqs(); ++i) {
      const int row = prog.add_equality(X.ineq_rhs[i], "xineq");
      for (int l = 0; l < n; ++l)
        if (X.ineq_lhs(i, l) != 0.0)
          prog.add_coef(row, x_vars[l], X.ineq_lhs(i, l));
      prog.add_coef(row, prog.var(slack, i), -1.0);
    }
  }
  for (int i = 0; i < X.num_eqs(); ++i) {
    const int row = prog.add_equality(X.eq_rhs[i], "xeq");
    for (int l = 0; l < n; ++l)
      if (X.eq_lhs(i, l) != 0.0) prog.add_coef(row, x_vars[l], X.eq_lhs(i, l));
  }
  for (std::size_t j = 0; j < X.lmis.size(); ++j) {
    const LmiBlock& lmi = X.lmis[j];
    if (lmi.coef.empty() || static_cast<int>(lmi.coef.size()) != n + 1)
      throw DimensionMismatch("LmiBlock: need constant plus one matrix per x");
    const int side = static_cast<int>(lmi.coef[0].rows());
    const int sb = prog.add_psd_block(side, "xlmi.S");
    for (int p = 0; p < side; ++p) {
      for (int q = p; q < side; ++q) {
        const double factor = (p == q) ? 1.0 : 2.0;
        const int row =
            prog.add_equality(factor * lmi.coef[0](p, q), "xlmi");
        prog.add_psd_coef(row, sb, p, q, 1.0);
        for (int l = 0; l < n; ++l)
          if (lmi.coef[l + 1](p, q) != 0.0)
            prog.add_coef(row, x_vars[l], -factor * lmi.coef[l + 1](p, q));
      }
    }
  }
}

void validate_inputs(const PerturbedConstraint& pc, const DecisionSet& X) {
  if (pc.n != X.n) throw DimensionMismatch("decision dimension mismatch");
  if (pc.A.rows() != basis_size(pc.r, pc.d) || pc.A.cols() != pc.n ||
      pc.b.size() != pc.A.rows())
    throw DimensionMismatch("PerturbedConstraint: shape mismatch");
}

// Accepts a numerically capped solve whose best iterate is still well inside
// the outer loop's tolerance.
bool acceptable_fallback(const PrimalDualSolution& sol,
                         const SolverOptions& opts) {
  const double need =
      0.1 * opts.gap_tol * (1.0 + std::abs(sol.primal_objective));
  return sol.status == SolveStatus::numerical_failure &&
         sol.primal_residual <= 1e-7 && sol.dual_residual <= 1e-7 &&
         sol.gap <= std::max(1e-7, need);
}

// Weakly attained instances (e.g. the target polynomial pinned to zero at an
// interior point of the set) leave no strictly feasible certificate; the
// iterates then converge in value while the primal residual floors around
// 1e-5. Such a solve still carries a trustworthy optimizer and value.
bool usable_value_only(const PrimalDualSolution& sol) {
  return sol.status == SolveStatus::numerical_failure &&
         sol.primal_residual <= 5e-4 && sol.dual_residual <= 1e-6 &&
         sol.gap <= 1e-4 * (1.0 + std::abs(sol.primal_objective));
}

Tms extract_moment_sequence(const PrimalDualSolution& sol,
                            const RelaxationHandles& h, int r, int k) {
  Eigen::VectorXd z_eta(h.matchrows.size());
  for (std::size_t i = 0; i < h.matchrows.size(); ++i)
    z_eta[i] = -sol.equality_dual[h.matchrows[i]];
  if (h.whitened) return Tms(r, 2 * k, h.T2k * z_eta);
  return Tms(r, 2 * k, z_eta);
}

}  // namespace

ConicProgram build_primal_relaxation(const Eigen::VectorXd& obj_c,
                                     const PerturbedConstraint& pc,
                                     const DecisionSet& X,
                                     const UncertaintySet& U, int k,
                                     RelaxationHandles* handles,
                                     const SolverOptions& opts) {
  validate_inputs(pc, X);
  if (X.has_poly())
    throw DimensionMismatch(
        "build_primal_relaxation: polynomial constraints need the SOS-convex "
        "path");
  if (obj_c.size() != pc.n)
    throw DimensionMismatch("objective length vs decision dimension");
  if (k < relaxation_order_floor(pc.d))
    throw DegreeOverflow("build_primal_relaxation: order below floor");

  const WorkingData wd = prepare_working_data(pc, U, k, opts);
  ConicProgram prog;
  const int x_block = prog.add_free_block(pc.n, "x");
  std::vector<int> x_vars(pc.n);
  for (int l = 0; l < pc.n; ++l) x_vars[l] = prog.var(x_block, l);

  certkit::QmodEncoding enc = certkit::encode_qmod_membership_on(
      prog, pc.r, wd.A, wd.b, x_vars, {wd.g}, k, "qmod");
  append_decision_set_rows(prog, X, x_vars);
  for (int l = 0; l < pc.n; ++l)
    if (obj_c[l] != 0.0) prog.add_objective(x_vars[l], obj_c[l]);

  if (handles) {
    handles->x_block = x_block;
    handles->matchrows = enc.matchrows;
    handles->T2k = wd.T2k;
    handles->whitened = wd.whitened;
    handles->k = k;
    handles->qmod = enc;
  }
  return prog;
}

ConicProgram build_dual_relaxation(const Eigen::VectorXd& obj_c,
                                   const PerturbedConstraint& pc,
                                   const DecisionSet& X,
                                   const UncertaintySet& U, int k,
                                   RelaxationHandles* handles,
                                   const SolverOptions& opts) {
  validate_inputs(pc, X);
  if (X.has_poly())
    throw DimensionMismatch(
        "build_dual_relaxation: polynomial constraints need the SOS-convex "
        "path");
  if (k < relaxation_order_floor(pc.d))
    throw DegreeOverflow("build_dual_relaxation: order below floor");

  const WorkingData wd = prepare_working_data(pc, U, k, opts);
  const int r = pc.r;
  auto z_basis = monomial_basis(r, 2 * k);

  ConicProgram prog;
  const int z_block = prog.add_free_block(z_basis->size(), "z");
  std::vector<int> z_vars(z_basis->size());
  for (int i = 0; i < z_basis->size(); ++i) z_vars[i] = prog.var(z_block, i);

  const int sm = static_cast<int>(basis_size(r, k));
  const int sl = static_cast<int>(basis_size(r, k - 1));
  const int SM = prog.add_psd_block(sm, "Mz");
  const int SL = prog.add_psd_block(sl, "Lz");
  certkit::append_localizing_definition(prog, SM, z_vars,
                                        Poly::constant(r, 1.0), k, "mdefz");
  certkit::append_localizing_definition(prog, SL, z_vars, wd.g, k, "ldefz");

  int lam_block = -1;
  if (X.num_ineqs() > 0) lam_block = prog.add_nonneg_block(X.num_ineqs(), "lam");
  int nu_block = -1;
  if (X.num_eqs() > 0) nu_block = prog.add_free_block(X.num_eqs(), "nu");
  std::vector<int> lmi_blocks;
  for (std::size_t j = 0; j < X.lmis.size(); ++j)
    lmi_blocks.push_back(prog.add_psd_block(
        static_cast<int>(X.lmis[j].coef[0].rows()), "Lam"));

  // Stationarity in x: c_l = (A' z|_d)_l + sum_i lambda_i a_il + E' nu + <F_l, Lam>.
  for (int l = 0; l < pc.n; ++l) {
    const int row = prog.add_equality(obj_c[l], "stat");
    for (int t = 0; t < wd.A.rows(); ++t)
      if (wd.A(t, l) != 0.0) prog.add_coef(row, z_vars[t], wd.A(t, l));
    for (int i = 0; i < X.num_ineqs(); ++i)
      if (X.ineq_lhs(i, l) != 0.0)
        prog.add_coef(row, prog.var(lam_block, i), X.ineq_lhs(i, l));
    for (int e = 0; e < X.num_eqs(); ++e)
      if (X.eq_lhs(e, l) != 0.0)
        prog.add_coef(row, prog.var(nu_block, e), X.eq_lhs(e, l));
    for (std::size_t j = 0; j < X.lmis.size(); ++j) {
      const Eigen::MatrixXd& Fl = X.lmis[j].coef[l + 1];
      for (int p = 0; p < Fl.rows(); ++p)
        for (int q = p; q < Fl.cols(); ++q)
          if (Fl(p, q) != 0.0)
            prog.add_psd_coef(row, lmi_blocks[j], p, q, Fl(p, q));
    }
  }

  // Objective of the max form is -b'z + rhs'lambda + rhs'nu - <F0, Lam>;
  // the program minimizes its negation.
  for (int t = 0; t < wd.b.size(); ++t)
    if (wd.b[t] != 0.0) prog.add_objective(z_vars[t], wd.b[t]);
  for (int i = 0; i < X.num_ineqs(); ++i)
    if (X.ineq_rhs[i] != 0.0)
      prog.add_objective(prog.var(lam_block, i), -X.ineq_rhs[i]);
  for (int e = 0; e < X.num_eqs(); ++e)
    if (X.eq_rhs[e] != 0.0)
      prog.add_objective(prog.var(nu_block, e), -X.eq_rhs[e]);
  for (std::size_t j = 0; j < X.lmis.size(); ++j) {
    const Eigen::MatrixXd& F0 = X.lmis[j].coef[0];
    for (int p = 0; p < F0.rows(); ++p)
      for (int q = p; q < F0.cols(); ++q)
        if (F0(p, q) != 0.0)
          prog.add_objective_psd(lmi_blocks[j], p, q, F0(p, q));
  }

  if (handles) {
    handles->w_block = z_block;
    handles->T2k = wd.T2k;
    handles->whitened = wd.whitened;
    handles->k = k;
  }
  return prog;
}

ConicProgram build_sosconvex_relaxation(const Poly& f,
                                        const PerturbedConstraint& pc,
                                        const DecisionSet& X,
                                        const UncertaintySet& U, int k,
                                        RelaxationHandles* handles,
                                        const SolverOptions& opts) {
  validate_inputs(pc, X);
  const int n = pc.n;
  if (f.dimension() != n)
    throw DimensionMismatch("objective polynomial dimension");
  if (k < relaxation_order_floor(pc.d))
    throw DegreeOverflow("build_sosconvex_relaxation: order below floor");

  int max_deg = f.degree();
  for (const Poly& u : X.poly_ineqs) {
    if (u.dimension() != n)
      throw DimensionMismatch("constraint polynomial dimension");
    max_deg = std::max(max_deg, u.degree());
  }
  const int d1 = std::max((max_deg + 1) / 2, 1);

  const WorkingData wd = prepare_working_data(pc, U, k, opts);
  auto w_basis = monomial_basis(n, 2 * d1);

  ConicProgram prog;
  const int w_block = prog.add_free_block(w_basis->size(), "w");
  std::vector<int> w_vars(w_basis->size());
  for (int i = 0; i < w_basis->size(); ++i) w_vars[i] = prog.var(w_block, i);

  const int P = prog.add_psd_block(basis_size(n, d1), "Mw");
  certkit::append_localizing_definition(prog, P, w_vars,
                                        Poly::constant(n, 1.0), d1, "mdef");
  const int w0_row = prog.add_equality(1.0, "wzero");
  prog.add_coef(w0_row, w_vars[0], 1.0);

  std::vector<int> u_rows;
  if (!X.poly_ineqs.empty()) {
    const int sig = prog.add_nonneg_block(
        static_cast<int>(X.poly_ineqs.size()), "uineq.s");
    for (std::size_t i = 0; i < X.poly_ineqs.size(); ++i) {
      const Poly& u = X.poly_ineqs[i];
      if (u.degree() > 2 * d1)
        throw DegreeOverflow("constraint polynomial exceeds 2*d1");
      const int row = prog.add_equality(0.0, "uineq");
      for (const auto& [alpha, c] : u.terms())
        prog.add_coef(row, w_vars[w_basis->index_of(alpha)], c);
      prog.add_coef(row, prog.var(sig, i), -1.0);
      u_rows.push_back(row);
    }
  }

  // Linear and LMI pieces of X act on the degree-one slice of w.
  std::vector<int> pi_vars(n);
  for (int l = 0; l < n; ++l) {
    Exponent e(n, 0);
    e[l] = 1;
    pi_vars[l] = w_vars[w_basis->index_of(e)];
  }
  append_decision_set_rows(prog, X, pi_vars);

  certkit::QmodEncoding enc = certkit::encode_qmod_membership_on(
      prog, pc.r, wd.A, wd.b, pi_vars, {wd.g}, k, "qmod");

  if (f.degree() > 2 * d1)
    throw DegreeOverflow("objective polynomial exceeds 2*d1");
  for (const auto& [alpha, c] : f.terms())
    prog.add_objective(w_vars[w_basis->index_of(alpha)], c);

  if (handles) {
    handles->w_block = w_block;
    handles->matchrows = enc.matchrows;
    handles->u_rows = u_rows;
    handles->w0_row = w0_row;
    handles->T2k = wd.T2k;
    handles->whitened = wd.whitened;
    handles->k = k;
    handles->qmod = enc;
  }
  return prog;
}

ConicProgram build_sosconvex_dual_relaxation(const Poly& f,
                                             const PerturbedConstraint& pc,
                                             const DecisionSet& X,
                                             const UncertaintySet& U, int k,
                                             RelaxationHandles* handles,
                                             const SolverOptions& opts) {
  validate_inputs(pc, X);
  if (X.num_eqs() > 0 || !X.lmis.empty())
    throw DimensionMismatch(
        "build_sosconvex_dual_relaxation: only inequality-described sets are "
        "supported on the explicit dual");
  const int n = pc.n;
  const int r = pc.r;
  if (k < relaxation_order_floor(pc.d))
    throw DegreeOverflow("build_sosconvex_dual_relaxation: order below floor");

  // Linear inequalities are degree-one members of the u tuple here.
  std::vector<Poly> us = X.poly_ineqs;
  for (int i = 0; i < X.num_ineqs(); ++i) {
    Poly u = Poly::constant(n, -X.ineq_rhs[i]);
    for (int l = 0; l < n; ++l)
      if (X.ineq_lhs(i, l) != 0.0) u += Poly::variable(n, l, X.ineq_lhs(i, l));
    us.push_back(u);
  }

  int max_deg = f.degree();
  for (const Poly& u : us) max_deg = std::max(max_deg, u.degree());
  const int d1 = std::max((max_deg + 1) / 2, 1);

  const WorkingData wd = prepare_working_data(pc, U, k, opts);
  auto z_basis = monomial_basis(r, 2 * k);
  auto a_basis = monomial_basis(n, 2 * d1);

  ConicProgram prog;
  const int tau_block = prog.add_free_block(1, "tau");
  const int z_block = prog.add_free_block(z_basis->size(), "z");
  std::vector<int> z_vars(z_basis->size());
  for (int i = 0; i < z_basis->size(); ++i) z_vars[i] = prog.var(z_block, i);
  int lam_block = -1;
  if (!us.empty())
    lam_block = prog.add_nonneg_block(static_cast<int>(us.size()), "lam");

  certkit::QmodEncoding sos = certkit::encode_sos_in_x(prog, n, d1, "sosrow");

  const int SM = prog.add_psd_block(basis_size(r, k), "Mz");
  const int SL = prog.add_psd_block(basis_size(r, k - 1), "Lz");
  certkit::append_localizing_definition(prog, SM, z_vars,
                                        Poly::constant(r, 1.0), k, "mdefz");
  certkit::append_localizing_definition(prog, SL, z_vars, wd.g, k, "ldefz");

  // Row alpha: <B_alpha, Q> + tau [alpha=0] + sum_i lambda_i u_i,alpha
  //            + (A' z|_d)_l [alpha=e_l] = f_alpha.
  for (int a = 0; a < a_basis->size(); ++a) {
    const Exponent& alpha = a_basis->exponent_at(a);
    const int row = sos.matchrows[a];
    prog.set_rhs(row, f.coeff(alpha));
    if (polycore::total_degree(alpha) == 0)
      prog.add_coef(row, prog.var(tau_block, 0), 1.0);
    for (std::size_t i = 0; i < us.size(); ++i) {
      const double c = us[i].coeff(alpha);
      if (c != 0.0) prog.add_coef(row, prog.var(lam_block, i), c);
    }
  }
  for (int l = 0; l < n; ++l) {
    Exponent e(n, 0);
    e[l] = 1;
    const int row = sos.matchrows[a_basis->index_of(e)];
    for (int t = 0; t < wd.A.rows(); ++t)
      if (wd.A(t, l) != 0.0) prog.add_coef(row, z_vars[t], wd.A(t, l));
  }

  // max tau - b'z becomes min -tau + b'z.
  prog.add_objective(prog.var(tau_block, 0), -1.0);
  for (int t = 0; t < wd.b.size(); ++t)
    if (wd.b[t] != 0.0) prog.add_objective(z_vars[t], wd.b[t]);

  if (handles) {
    handles->w_block = z_block;
    handles->T2k = wd.T2k;
    handles->whitened = wd.whitened;
    handles->k = k;
  }
  return prog;
}

namespace {

SolveReport run_hierarchy(
    const PerturbedConstraint& pc, const SolverOptions& opts,
    const std::function<ConicProgram(int, RelaxationHandles*)>& build,
    const std::function<Eigen::VectorXd(const ConicProgram&,
                                        const PrimalDualSolution&,
                                        const RelaxationHandles&)>& get_x) {
  const int k0 = relaxation_order_floor(pc.d);
  const int k_max = k0 + opts.k_max_extra;
  SolveReport rep;
  for (int k = k0; k <= k_max; ++k) {
    RelaxationHandles h;
    const ConicProgram prog = build(k, &h);
    PrimalDualSolution sol =
        conicore::solve(prog, opts.conic, opts.backend);

    OrderTrace t;
    t.k = k;
    t.conic_status = sol.status;
    t.iterations = sol.iterations;

    if (sol.status == SolveStatus::dual_infeasible) {
      rep.trace.push_back(t);
      rep.status = ReportStatus::relaxation_unbounded;
      rep.k_used = k;
      return rep;
    }
    if (sol.status == SolveStatus::primal_infeasible) {
      rep.trace.push_back(t);
      rep.status = ReportStatus::infeasible;
      rep.k_used = k;
      continue;  // the module grows with k, so retry at the next order
    }
    if (sol.status == SolveStatus::numerical_failure &&
        !acceptable_fallback(sol, opts)) {
      if (usable_value_only(sol)) {
        // Best-effort exit: the value converged but no certificate can be
        // attained; higher orders inherit the same degeneracy.
        t.f_sos = sol.primal_objective;
        t.f_mom = sol.dual_objective;
        t.gap = std::abs(sol.primal_objective - sol.dual_objective);
        rep.trace.push_back(t);
        rep.xstar = get_x(prog, sol, h);
        rep.fstar = sol.primal_objective;
        rep.k_used = k;
        rep.gap = t.gap;
        rep.flat_t.reset();
        rep.status = ReportStatus::max_order_reached;
        return rep;
      }
      rep.trace.push_back(t);
      throw HierarchyFailure(
          "conic solve failed at order " + std::to_string(k),
          std::move(rep), std::move(sol));
    }

    const Tms z = extract_moment_sequence(sol, h, pc.r, k);
    const Tms y = z.restrict(pc.d);
    t.f_sos = sol.primal_objective;
    t.f_mom = sol.dual_objective;
    t.gap = std::abs(sol.primal_objective - sol.dual_objective);
    t.flat_t = momentkit::flat_truncation(z, k, k0, opts.rank_tol);
    rep.trace.push_back(t);

    rep.xstar = get_x(prog, sol, h);
    rep.fstar = sol.primal_objective;
    rep.k_used = k;
    rep.gap = t.gap;
    rep.flat_t = t.flat_t;
    rep.dual_y = y;
    rep.dual_z = z;

    const bool gap_ok =
        t.gap <= opts.gap_tol * (1.0 + std::abs(sol.primal_objective));
    if (gap_ok && t.flat_t.has_value()) {
      rep.status = ReportStatus::certified;
      return rep;
    }
    rep.status = ReportStatus::max_order_reached;
  }
  return rep;
}

}  // namespace

SolveReport solve_linear_cco(const Eigen::VectorXd& obj_c,
                             const PerturbedConstraint& pc,
                             const DecisionSet& X, const UncertaintySet& U,
                             const SolverOptions& opts) {
  return run_hierarchy(
      pc, opts,
      [&](int k, RelaxationHandles* h) {
        return build_primal_relaxation(obj_c, pc, X, U, k, h, opts);
      },
      [&](const ConicProgram& prog, const PrimalDualSolution& sol,
          const RelaxationHandles& h) {
        return prog.block_segment(sol.primal, h.x_block);
      });
}

SolveReport solve_sosconvex_cco(const Poly& f, const PerturbedConstraint& pc,
                                const DecisionSet& X, const UncertaintySet& U,
                                const SolverOptions& opts) {
  if (opts.sos_convexity_preflight) {
    if (!is_sos_convex(f, opts))
      std::fputs("warning: objective failed the SOS-convexity check\n",
                 stderr);
    for (const Poly& u : X.poly_ineqs) {
      if (!is_sos_convex(polycore::poly_scale(u, -1.0), opts))
        std::fputs("warning: a constraint failed the SOS-concavity check\n",
                   stderr);
    }
  }
  const int n = pc.n;
  return run_hierarchy(
      pc, opts,
      [&](int k, RelaxationHandles* h) {
        return build_sosconvex_relaxation(f, pc, X, U, k, h, opts);
      },
      [&](const ConicProgram& prog, const PrimalDualSolution& sol,
          const RelaxationHandles& h) {
        // pi(w): the degree-one entries follow the constant in graded order.
        Eigen::VectorXd x(n);
        const Eigen::VectorXd w = prog.block_segment(sol.primal, h.w_block);
        for (int l = 0; l < n; ++l) x[l] = w[1 + l];
        return x;
      });
}

MinOnU min_on_U(const Poly& p, const UncertaintySet& U, int k,
                const SolverOptions& opts) {
  const int r = p.dimension();
  if (p.degree() > 2 * k) throw DegreeOverflow("min_on_U: degree above 2k");
  WorkingData wd;
  {
    // Reuse the coordinate change on the coefficient vector of p.
    PerturbedConstraint tmp;
    tmp.r = r;
    tmp.d = 2 * k;
    tmp.n = 1;
    tmp.A = Eigen::MatrixXd::Zero(basis_size(r, 2 * k), 1);
    tmp.A(0, 0) = -1.0;  // target p - gamma
    tmp.b = coefficient_vector(p, *monomial_basis(r, 2 * k));
    wd = prepare_working_data(tmp, U, k, opts);
  }

  ConicProgram prog;
  const int g_block = prog.add_free_block(1, "gamma");
  certkit::QmodEncoding enc = certkit::encode_qmod_membership_on(
      prog, r, wd.A, wd.b, {prog.var(g_block, 0)}, {wd.g}, k, "qmod");
  prog.add_objective(prog.var(g_block, 0), -1.0);  // max gamma

  PrimalDualSolution sol = conicore::solve(prog, opts.conic, opts.backend);
  if (sol.status != SolveStatus::optimal && !acceptable_fallback(sol, opts))
    throw conicore::SolverFailure("min_on_U: conic solve failed",
                                  std::move(sol));

  RelaxationHandles h;
  h.matchrows = enc.matchrows;
  h.T2k = wd.T2k;
  h.whitened = wd.whitened;
  MinOnU out{-sol.primal_objective,
             extract_moment_sequence(sol, h, r, k), false};
  const int kp = std::max((p.degree() + 1) / 2, 1);
  out.flat =
      momentkit::flat_truncation(out.moments, k, kp, opts.rank_tol).has_value();
  return out;
}

bool is_sos_convex(const Poly& f, const SolverOptions& opts) {
  const int n = f.dimension();
  if (f.degree() <= 1) return true;

  // Encode y' H(x) y as an SOS form in the monomials x^a y_i.
  std::vector<std::vector<Poly>> H(n, std::vector<Poly>());
  int hdeg = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      H[i].push_back(polycore::differentiate(polycore::differentiate(f, i), j));
      hdeg = std::max(hdeg, H[i][j].degree());
    }
  const int half = (hdeg + 1) / 2;
  auto xa_basis = monomial_basis(n, half);
  const int side = n * xa_basis->size();

  ConicProgram prog;
  const int Q = prog.add_psd_block(side, "Q");
  // Rows indexed by (x-monomial c, unordered {i, j}).
  std::map<std::pair<Exponent, std::pair<int, int>>, int> rows;
  auto row_of = [&](const Exponent& c, int i, int j) {
    auto key = std::make_pair(c, std::minmax(i, j));
    auto it = rows.find(key);
    if (it != rows.end()) return it->second;
    const int row = prog.add_equality(0.0, "hess");
    rows.emplace(key, row);
    return row;
  };

  // Matching rows: sum over basis pairs of Q against the target biform.
  const int nb = xa_basis->size();
  for (int p = 0; p < side; ++p) {
    for (int q = p; q < side; ++q) {
      const int i = p / nb, a = p % nb;
      const int j = q / nb, bidx = q % nb;
      const Exponent c = polycore::exponent_sum(xa_basis->exponent_at(a),
                                                xa_basis->exponent_at(bidx));
      prog.add_psd_coef(row_of(c, i, j), Q, p, q, 1.0);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double scale = (i == j) ? 1.0 : 2.0;
      for (const auto& [c, coef] : H[i][j].terms()) {
        // y_i y_j coefficient of the biform; rhs of the matching row.
        prog.set_rhs(row_of(c, i, j), scale * coef);
      }
    }

  conicore::SolveOptions co = opts.conic;
  co.gap_tol = 1e-6;
  co.feas_tol = 1e-7;
  const PrimalDualSolution sol = conicore::solve(prog, co, opts.backend);
  return sol.status == SolveStatus::optimal;
}

}  // namespace robustsolve
}  // namespace cco
