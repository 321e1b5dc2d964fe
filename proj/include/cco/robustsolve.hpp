#ifndef CCO_ROBUSTSOLVE_HPP
#define CCO_ROBUSTSOLVE_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cco/certkit.hpp"
#include "cco/conicore.hpp"
#include "cco/momentkit.hpp"
#include "cco/polycore.hpp"

namespace cco {
namespace robustsolve {

using momentkit::Tms;
using polycore::Poly;

/// Random constraint h(x, xi) = (A x + b)' [xi]_d, affine in the decision x.
/// Rows of A / entries of b are indexed by the graded basis of degree d.
struct PerturbedConstraint {
  int r = 0;
  int d = 0;
  int n = 0;
  Eigen::MatrixXd A;  // basis_size(r, d) x n
  Eigen::VectorXd b;

  /// One term of h: coefficient (a' x + b0) on the monomial xi^alpha.
  struct Term {
    polycore::Exponent alpha;
    Eigen::VectorXd a;  // length n; may be zero
    double b0 = 0.0;
  };

  static PerturbedConstraint from_terms(int r, int n,
                                        const std::vector<Term>& terms);

  /// h(x, .) as a polynomial in xi.
  Poly fix_x(const Eigen::VectorXd& x) const;
  double eval(const Eigen::VectorXd& x, const Eigen::VectorXd& xi) const;
};

/// Ellipsoid { xi : gamma - (xi - mu)' lambda^-1 (xi - mu) >= 0 }.
struct UncertaintySet {
  double gamma = 0.0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd lambda;

  int dim() const { return static_cast<int>(mu.size()); }
  /// Cholesky factor L with lambda = L L'; throws NotPositiveDefinite.
  Eigen::MatrixXd scale_cholesky(double pd_tol = 1e-12) const;
  /// The membership polynomial g(xi) >= 0 describing the set.
  Poly membership_poly() const;
  bool contains(const Eigen::VectorXd& xi, double slack = 0.0) const;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// Affine symmetric-matrix map F(x) = coef[0] + sum_l x_l coef[l+1],
/// constrained PSD.
struct LmiBlock {
  std::vector<Eigen::MatrixXd> coef;
};

/// Semidefinite-representable decision set. poly_ineqs holds SOS-concave
/// u_i(x) >= 0 and is used only by the SOS-convex path.
struct DecisionSet {
  int n = 0;
  Eigen::MatrixXd ineq_lhs;  // rows a_i', constraint a_i' x >= ineq_rhs_i
  Eigen::VectorXd ineq_rhs;
  Eigen::MatrixXd eq_lhs;
  Eigen::VectorXd eq_rhs;
  std::vector<LmiBlock> lmis;
  std::vector<Poly> poly_ineqs;

  static DecisionSet free_space(int n);
  bool has_poly() const { return !poly_ineqs.empty(); }
  int num_ineqs() const { return static_cast<int>(ineq_rhs.size()); }
  int num_eqs() const { return static_cast<int>(eq_rhs.size()); }
};

/// Thrown when the conic backend fails numerically mid-hierarchy; carries
/// the loop trace so far and the failing conic iterate.
class HierarchyFailure;

enum class ReportStatus {
  certified,
  max_order_reached,
  relaxation_unbounded,
  infeasible,
};

const char* to_string(ReportStatus status);

/// Per-order record of the relaxation loop.
struct OrderTrace {
  int k = 0;
  double f_sos = 0.0;
  double f_mom = 0.0;
  double gap = 0.0;
  std::optional<int> flat_t;
  conicore::SolveStatus conic_status = conicore::SolveStatus::numerical_failure;
  int iterations = 0;
};

struct SolveReport {
  ReportStatus status = ReportStatus::max_order_reached;
  Eigen::VectorXd xstar;
  double fstar = 0.0;
  int k_used = 0;
  double gap = 0.0;
  std::optional<int> flat_t;
  std::optional<Tms> dual_y;  // degree d
  std::optional<Tms> dual_z;  // degree 2k
  std::vector<OrderTrace> trace;
};

struct SolverOptions {
  double gap_tol = 1e-6;   // relative duality-gap target of the outer loop
  double cert_tol = 1e-6;  // feasibility certificate slack
  double rank_tol = 1e-6;  // flat-truncation numeric rank tolerance
  int k_max_extra = 3;     // loop runs k0 .. k0 + k_max_extra
  conicore::SolveOptions conic;
  std::string backend = "reference";
  bool whiten = true;  // solve in centered unit-ball coordinates
  bool sos_convexity_preflight = false;
};

class HierarchyFailure : public Error {
 public:
  HierarchyFailure(const std::string& what, SolveReport partial,
                   conicore::PrimalDualSolution conic)
      : Error(what), partial_(std::move(partial)), conic_(std::move(conic)) {}
  const SolveReport& partial() const { return partial_; }
  const conicore::PrimalDualSolution& conic() const { return conic_; }

 private:
  SolveReport partial_;
  conicore::PrimalDualSolution conic_;
};

/// First relaxation order of the hierarchy: max(ceil(d/2), 1).
int relaxation_order_floor(int d);

/// Handles into a built relaxation, for dual extraction and testing.
struct RelaxationHandles {
  int x_block = -1;              // decision block (linear path)
  int w_block = -1;              // tms-in-x block (SOS-convex path)
  std::vector<int> matchrows;    // quadratic-module rows in basis(r, 2k) order
  std::vector<int> u_rows;       // <u_i, w> rows (SOS-convex path)
  int w0_row = -1;
  Eigen::MatrixXd T2k;           // [xi]_2k = T2k [eta]_2k when whitened
  bool whitened = false;
  int k = 0;
  certkit::QmodEncoding qmod;
};

conicore::ConicProgram build_primal_relaxation(
    const Eigen::VectorXd& obj_c, const PerturbedConstraint& pc,
    const DecisionSet& X, const UncertaintySet& U, int k,
    RelaxationHandles* handles = nullptr, const SolverOptions& opts = {});

conicore::ConicProgram build_dual_relaxation(const Eigen::VectorXd& obj_c,
                                             const PerturbedConstraint& pc,
                                             const DecisionSet& X,
                                             const UncertaintySet& U, int k,
                                             RelaxationHandles* handles =
                                                 nullptr,
                                             const SolverOptions& opts = {});

conicore::ConicProgram build_sosconvex_relaxation(
    const Poly& f, const PerturbedConstraint& pc, const DecisionSet& X,
    const UncertaintySet& U, int k, RelaxationHandles* handles = nullptr,
    const SolverOptions& opts = {});

conicore::ConicProgram build_sosconvex_dual_relaxation(
    const Poly& f, const PerturbedConstraint& pc, const DecisionSet& X,
    const UncertaintySet& U, int k, RelaxationHandles* handles = nullptr,
    const SolverOptions& opts = {});

/// Rising-order loop for the linear-objective path: solves the order-k
/// module relaxation, extracts the dual moment sequence from the matchrow
/// multipliers, and stops once the duality gap closes and the moment matrix
/// ranks flatten.
SolveReport solve_linear_cco(const Eigen::VectorXd& obj_c,
                             const PerturbedConstraint& pc,
                             const DecisionSet& X, const UncertaintySet& U,
                             const SolverOptions& opts = {});

/// Same loop for an SOS-convex objective with SOS-concave constraints; the
/// decision is recovered as the degree-one slice of the optimal tms.
SolveReport solve_sosconvex_cco(const Poly& f, const PerturbedConstraint& pc,
                                const DecisionSet& X, const UncertaintySet& U,
                                const SolverOptions& opts = {});

/// Order-k lower bound on min_{xi in U} p(xi) with its dual moment vector
/// and a flatness flag.
struct MinOnU {
  double bound = 0.0;
  Tms moments;
  bool flat = false;
};

MinOnU min_on_U(const Poly& p, const UncertaintySet& U, int k,
                const SolverOptions& opts = {});

/// Feasibility check for the Hessian factorization defining SOS-convexity;
/// used as an optional pre-flight warning, never an error.
bool is_sos_convex(const Poly& f, const SolverOptions& opts = {});

}  // namespace robustsolve
}  // namespace cco

#endif  // CCO_ROBUSTSOLVE_HPP
