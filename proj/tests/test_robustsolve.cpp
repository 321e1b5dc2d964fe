#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "cco/cli.hpp"
#include "cco/robustsolve.hpp"
#include "cco/uncertainkit.hpp"

using namespace cco;
using namespace cco::robustsolve;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> v) {
  VectorXd x(v.size());
  int i = 0;
  for (double t : v) x[i++] = t;
  return x;
}

// h(x, xi) = x - xi on the interval [-1, 1]; the robust optimum is x = 1.
PerturbedConstraint interval_toy() {
  PerturbedConstraint pc;
  pc.r = 1;
  pc.d = 1;
  pc.n = 1;
  pc.A = MatrixXd::Zero(2, 1);
  pc.A(0, 0) = 1.0;
  pc.b = VectorXd::Zero(2);
  pc.b(1) = -1.0;
  return pc;
}

UncertaintySet unit_interval() {
  return UncertaintySet{1.0, VectorXd::Zero(1), MatrixXd::Identity(1, 1)};
}

polycore::Poly poly1(std::initializer_list<std::pair<int, double>> terms) {
  polycore::Poly p(1);
  for (const auto& [e, c] : terms) p.add_term({e}, c);
  return p;
}

}  // namespace

TEST_CASE("relaxation order floor") {
  CHECK(relaxation_order_floor(4) == 2);
  CHECK(relaxation_order_floor(1) == 1);
  CHECK(relaxation_order_floor(5) == 3);
  CHECK(relaxation_order_floor(0) == 1);
}

TEST_CASE("toy interval problem certifies at the first order") {
  const auto rep = solve_linear_cco(vec({1.0}), interval_toy(),
                                    DecisionSet::free_space(1),
                                    unit_interval());
  REQUIRE(rep.status == ReportStatus::certified);
  CHECK(rep.k_used == 1);
  CHECK(rep.flat_t == 1);
  CHECK(rep.xstar[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(rep.fstar == doctest::Approx(1.0).epsilon(1e-6));
  // The optimal dual restriction is the Dirac at the active point xi = 1.
  REQUIRE(rep.dual_y.has_value());
  CHECK(rep.dual_y->entries()[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(rep.dual_y->entries()[1] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("explicit dual program agrees with the primal extraction") {
  const VectorXd c = vec({1.0});
  const auto pc = interval_toy();
  const auto X = DecisionSet::free_space(1);
  const auto U = unit_interval();
  const auto rep = solve_linear_cco(c, pc, X, U);
  REQUIRE(rep.status == ReportStatus::certified);

  RelaxationHandles h;
  const auto dual = build_dual_relaxation(c, pc, X, U, rep.k_used, &h);
  const auto dsol = conicore::solve(dual);
  REQUIRE(dsol.status == conicore::SolveStatus::optimal);
  const double f_mom_explicit = -dsol.primal_objective;
  const double f_mom_extracted = rep.fstar - rep.gap;  // same sign here
  CHECK(std::abs(f_mom_explicit - f_mom_extracted) <= 10.0 * 1e-6);
  CHECK(f_mom_explicit == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("a constraint constant in xi reduces to a sign constraint") {
  PerturbedConstraint pc;
  pc.r = 1;
  pc.d = 0;
  pc.n = 1;
  pc.A = MatrixXd::Constant(1, 1, 2.0);  // h(x, xi) = 2x
  pc.b = VectorXd::Zero(1);
  const auto rep = solve_linear_cco(vec({1.0}), pc, DecisionSet::free_space(1),
                                    unit_interval());
  // Every point of the set is active at the optimum (h(0, .) = 0), so the
  // moment side has no unique representing measure and the rank test cannot
  // fire; the loop reports the converged value best-effort.
  CHECK(std::abs(rep.fstar) <= 1e-6);
  CHECK(std::abs(rep.xstar[0]) <= 1e-6);
  CHECK(rep.gap <= 1e-6);
}

TEST_CASE("unbounded relaxations are reported") {
  const auto rep = solve_linear_cco(vec({-1.0}), interval_toy(),
                                    DecisionSet::free_space(1),
                                    unit_interval());
  CHECK(rep.status == ReportStatus::relaxation_unbounded);
}

TEST_CASE("conic failures propagate with the partial trace") {
  SolverOptions opts;
  opts.conic.max_iterations = 0;
  CHECK_THROWS_AS(solve_linear_cco(vec({1.0}), interval_toy(),
                                   DecisionSet::free_space(1), unit_interval(),
                                   opts),
                  HierarchyFailure);
}

TEST_CASE("minimum bounds on the interval") {
  const auto U = unit_interval();
  const auto m1 = min_on_U(poly1({{2, 1.0}}), U, 1);  // xi^2
  CHECK(m1.bound == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(m1.flat);
  const auto m2 = min_on_U(poly1({{0, 1.0}, {2, -1.0}}), U, 1);  // 1 - xi^2
  CHECK(m2.bound == doctest::Approx(0.0).epsilon(1e-7));
  const auto m3 = min_on_U(poly1({{1, 1.0}}), U, 1);  // xi
  CHECK(m3.bound == doctest::Approx(-1.0).epsilon(1e-7));
  // The dual moment vector is normalized: v_0 = 1.
  CHECK(m3.moments.entries()[0] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("sos-convex toy certifies with a Dirac tms") {
  polycore::Poly f(1);
  f.add_term({2}, 1.0);  // x^2
  DecisionSet X = DecisionSet::free_space(1);
  X.poly_ineqs.push_back(poly1({{0, 4.0}, {2, -1.0}}));  // 4 - x^2
  const auto rep =
      solve_sosconvex_cco(f, interval_toy(), X, unit_interval());
  REQUIRE(rep.status == ReportStatus::certified);
  CHECK(rep.fstar == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(rep.xstar[0] == doctest::Approx(1.0).epsilon(1e-5));

  // w = (1, 1, 1): the moments of the Dirac at the optimizer.
  RelaxationHandles h;
  const auto prog = build_sosconvex_relaxation(f, interval_toy(), X,
                                               unit_interval(), 1, &h);
  const auto sol = conicore::solve(prog);
  REQUIRE(sol.status == conicore::SolveStatus::optimal);
  const VectorXd w = prog.block_segment(sol.primal, h.w_block);
  CHECK(w[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(w[2] == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("projection of Dirac moments returns the point") {
  const auto y = momentkit::tms_of_point(vec({0.3, -0.8}), 4);
  // pi(w) reads the degree-one prefix entries.
  CHECK(y.entries()[1] == doctest::Approx(0.3));
  CHECK(y.entries()[2] == doctest::Approx(-0.8));
}

TEST_CASE("weak duality and value monotonicity along the hierarchy") {
  // A non-trivial instance solved at successive orders directly.
  const auto p = cli::load_fixture("ex6.3");
  const auto U = p.uncertainty_set(1.5387);
  SolverOptions opts;
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= 4; ++k) {
    RelaxationHandles h;
    const auto prog = build_primal_relaxation(*p.linear_objective, p.chance,
                                              p.decision_set, U, k, &h, opts);
    const auto sol = conicore::solve(prog, opts.conic);
    REQUIRE(sol.status == conicore::SolveStatus::optimal);
    CHECK(sol.dual_objective <= sol.primal_objective + 1e-6);
    CHECK(sol.primal_objective <= prev + 1e-6);
    prev = sol.primal_objective;
  }
}

TEST_CASE("optimal values are monotone in the set size") {
  const auto p = cli::load_fixture("ex6.3");
  SolverOptions opts;
  double prev = -std::numeric_limits<double>::infinity();
  for (double gamma : {1.0, 1.3, 1.6, 2.0}) {
    const auto rep = cli::solve_problem_at(p, gamma, opts);
    REQUIRE(rep.status == ReportStatus::certified);
    CHECK(rep.fstar >= prev - 1e-6);
    prev = rep.fstar;
  }
}

TEST_CASE("certified reports satisfy the feasibility certificates") {
  const auto p = cli::load_fixture("ex6.3");
  const double gamma = 1.5387;
  SolverOptions opts;
  const auto rep = cli::solve_problem_at(p, gamma, opts);
  REQUIRE(rep.status == ReportStatus::certified);
  const auto U = p.uncertainty_set(gamma);
  const auto m = min_on_U(p.chance.fix_x(rep.xstar), U, rep.k_used, opts);
  CHECK(m.bound >= -opts.cert_tol);
  const Eigen::MatrixXd pts =
      uncertainkit::sample_in_ellipsoid(U.mu, U.lambda, U.gamma, 10000, 7);
  const polycore::Poly h = p.chance.fix_x(rep.xstar);
  for (int i = 0; i < pts.rows(); ++i)
    CHECK(polycore::poly_eval(h, pts.row(i).transpose()) >= -opts.cert_tol);
}

TEST_CASE("jensen-type feasibility on the sos-convex path") {
  const auto p = cli::load_fixture("ex6.8");
  SolverOptions opts;
  const auto rep = cli::solve_problem_at(p, 0.2918, opts);
  REQUIRE(rep.status == ReportStatus::certified);
  for (const auto& u : p.decision_set.poly_ineqs)
    CHECK(polycore::poly_eval(u, rep.xstar) >= -opts.cert_tol);
  CHECK(polycore::poly_eval(*p.poly_objective, rep.xstar) <=
        rep.fstar + opts.gap_tol * (1.0 + std::abs(rep.fstar)));
}

TEST_CASE("published optima within the reproduction band") {
  SolverOptions opts;
  {
    const auto p = cli::load_fixture("ex6.3");
    const auto rep = cli::solve_problem_at(p, 1.5387, opts);
    REQUIRE(rep.status == ReportStatus::certified);
    CHECK(std::abs(rep.fstar - (-1.6382)) <= 1e-2 * (1.0 + 1.6382));
  }
  {
    const auto p = cli::load_fixture("ex6.6");
    const auto rep = cli::solve_problem_at(p, 0.7548, opts);
    REQUIRE(rep.status == ReportStatus::certified);
    CHECK(rep.fstar == doctest::Approx(1.0895).epsilon(1e-3));
    CHECK(rep.xstar[0] == doctest::Approx(1.0298).epsilon(2e-3));
    CHECK(rep.xstar[1] == doctest::Approx(0.0298).epsilon(2e-2));
  }
  {
    const auto p = cli::load_fixture("ex6.8");
    const auto rep = cli::solve_problem_at(p, 0.2918, opts);
    REQUIRE(rep.status == ReportStatus::certified);
    CHECK(rep.fstar == doctest::Approx(-8.2948).epsilon(1e-3));
    const VectorXd want = vec({0.5030, -1.7362, 0.0185, -0.0240});
    CHECK((rep.xstar - want).cwiseAbs().maxCoeff() <= 5e-2);
  }
}

TEST_CASE("whitening changes coordinates, not answers") {
  const auto p = cli::load_fixture("ex6.3");
  SolverOptions plain;
  plain.whiten = false;
  SolverOptions white;
  white.whiten = true;
  const auto r1 = cli::solve_problem_at(p, 1.5387, plain);
  const auto r2 = cli::solve_problem_at(p, 1.5387, white);
  REQUIRE(r1.status == ReportStatus::certified);
  REQUIRE(r2.status == ReportStatus::certified);
  CHECK(r1.fstar == doctest::Approx(r2.fstar).epsilon(1e-6));
  CHECK((r1.xstar - r2.xstar).cwiseAbs().maxCoeff() <= 1e-4);
  // The reported moment sequences agree in the original coordinates.
  CHECK((r1.dual_z->entries() - r2.dual_z->entries()).cwiseAbs().maxCoeff() <=
        1e-4 * (1.0 + r1.dual_z->entries().cwiseAbs().maxCoeff()));
}

TEST_CASE("sos-convexity preflight distinguishes convexity") {
  polycore::Poly f(2);  // x1^4 + x2^2: convex
  f.add_term({4, 0}, 1.0);
  f.add_term({0, 2}, 1.0);
  CHECK(is_sos_convex(f));
  polycore::Poly g(2);  // x1^2 x2^2 is not convex
  g.add_term({2, 2}, 1.0);
  CHECK_FALSE(is_sos_convex(g));
}

TEST_CASE("fixture objectives pass the convexity preflight") {
  {
    const auto p = cli::load_fixture("ex6.7");
    REQUIRE(p.poly_objective.has_value());
    CHECK(is_sos_convex(*p.poly_objective));
    for (const auto& u : p.decision_set.poly_ineqs)
      CHECK(is_sos_convex(polycore::poly_scale(u, -1.0)));
  }
  {
    const auto p = cli::load_fixture("ex6.8");
    REQUIRE(p.poly_objective.has_value());
    CHECK(is_sos_convex(*p.poly_objective));
    for (const auto& u : p.decision_set.poly_ineqs)
      CHECK(is_sos_convex(polycore::poly_scale(u, -1.0)));
  }
}

TEST_CASE("uncertainty sets validate their scale matrix") {
  UncertaintySet U;
  U.gamma = 1.0;
  U.mu = VectorXd::Zero(2);
  U.lambda = MatrixXd::Zero(2, 2);  // singular
  CHECK_THROWS_AS(U.scale_cholesky(), NotPositiveDefinite);
  U.lambda = -MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(U.membership_poly(), NotPositiveDefinite);
}
