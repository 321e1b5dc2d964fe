#include <doctest.h>

#include <random>

#include <Eigen/Dense>

#include "cco/certkit.hpp"
#include "cco/momentkit.hpp"

using namespace cco;
using namespace cco::certkit;
using namespace cco::polycore;
using conicore::ConicProgram;
using conicore::SolveStatus;

namespace {

Poly interval_generator() {
  Poly g(1);  // 1 - x^2
  g.add_term({0}, 1.0);
  g.add_term({2}, -1.0);
  return g;
}

// Feasibility of "target in the order-k truncated module" for a constant
// target given by its coefficient vector over the degree-d basis.
SolveStatus membership_status(const Eigen::VectorXd& target, const Poly& g,
                              int k) {
  ConicProgram prog;
  const Eigen::MatrixXd A(target.size(), 0);
  encode_qmod_membership_on(prog, g.dimension(), A, target, {}, {g}, k,
                            "qmod");
  return conicore::solve(prog).status;
}

}  // namespace

TEST_CASE("constant multiples of the generator are members") {
  // 1 - x^2 = 0 + 1 * g.
  Eigen::Vector3d target(1.0, 0.0, -1.0);
  CHECK(membership_status(target, interval_generator(), 1) ==
        SolveStatus::optimal);
}

TEST_CASE("an odd linear target is not a member") {
  // x takes the value -1 on the interval, so no certificate exists.
  Eigen::Vector3d target(0.0, 1.0, 0.0);
  CHECK(membership_status(target, interval_generator(), 1) ==
        SolveStatus::primal_infeasible);
}

TEST_CASE("a shifted linear target is a member") {
  // 2 + x = (x/2 + 1)^2 + 3/4 + (1/4) g, found by coefficient matching.
  Eigen::Vector3d target(2.0, 1.0, 0.0);
  CHECK(membership_status(target, interval_generator(), 1) ==
        SolveStatus::optimal);
}

TEST_CASE("membership is monotone in the order") {
  Eigen::Vector3d target(2.0, 1.0, 0.0);
  for (int k : {1, 2, 3})
    CHECK(membership_status(target, interval_generator(), k) ==
          SolveStatus::optimal);
}

TEST_CASE("encoding shapes at r=3 d=4 k=2") {
  ConicProgram prog;
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(35, 3);
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(35);
  Poly g(3);
  g.add_term({0, 0, 0}, 1.0);
  g.add_term({2, 0, 0}, -1.0);
  g.add_term({0, 2, 0}, -1.0);
  g.add_term({0, 0, 2}, -1.0);
  const auto enc = encode_qmod_membership(prog, A, b, g, 2);
  REQUIRE(enc.psd_sides.size() == 2);
  CHECK(enc.psd_sides[0] == 10);
  CHECK(enc.psd_sides[1] == 4);
  CHECK(enc.matchrows.size() == 35);
}

TEST_CASE("order below the target degree is rejected") {
  ConicProgram prog;
  const Eigen::MatrixXd A = Eigen::MatrixXd::Zero(35, 3);
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(35);
  Poly g(3);
  g.add_term({0, 0, 0}, 1.0);
  g.add_term({2, 0, 0}, -1.0);
  CHECK_THROWS_AS(encode_qmod_membership(prog, A, b, g, 1), DegreeOverflow);
}

TEST_CASE("soundness: feasible certificates reassemble the target") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> nd;
  Poly g(2);  // unit ball
  g.add_term({0, 0}, 1.0);
  g.add_term({2, 0}, -1.0);
  g.add_term({0, 2}, -1.0);
  for (int trial = 0; trial < 5; ++trial) {
    // Construct a member as q0'Q0q0 + g * q1'Q1q1 with random PSD blocks,
    // then re-derive a certificate and compare the reassembly coefficients.
    auto mk_psd = [&](int side) {
      Eigen::MatrixXd B(side, side);
      for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j) B(i, j) = nd(rng);
      return Eigen::MatrixXd(B * B.transpose() / side);
    };
    auto quad_poly = [&](const Eigen::MatrixXd& Q, int deg) {
      auto basis = monomial_basis(2, deg);
      Poly p(2);
      for (int i = 0; i < basis->size(); ++i)
        for (int j = 0; j < basis->size(); ++j)
          p.add_term(exponent_sum(basis->exponent_at(i),
                                  basis->exponent_at(j)),
                     Q(i, j));
      return p;
    };
    const int k = 2;
    const Poly target =
        quad_poly(mk_psd(6), k) + g * quad_poly(mk_psd(3), k - 1);
    auto basis = monomial_basis(2, 2 * k);
    const Eigen::VectorXd tvec = coefficient_vector(target, *basis);

    ConicProgram prog;
    const Eigen::MatrixXd A(tvec.size(), 0);
    const auto enc =
        encode_qmod_membership_on(prog, 2, A, tvec, {}, {g}, k, "qmod");
    const auto sol = conicore::solve(prog);
    REQUIRE(sol.status == SolveStatus::optimal);

    const Poly rebuilt = reassemble_certificate(prog, enc, {g}, sol.primal);
    const Eigen::VectorXd rvec = coefficient_vector(rebuilt, *basis);
    const double scale = 1.0 + tvec.cwiseAbs().maxCoeff();
    CHECK((rvec - tvec).cwiseAbs().maxCoeff() <= 1e-6 * scale);

    // Nonnegative on sampled points of the ball.
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int checked = 0;
    while (checked < 1000) {
      Eigen::Vector2d x(u(rng), u(rng));
      if (x.squaredNorm() > 1.0) continue;
      ++checked;
      CHECK(poly_eval(rebuilt, x) >= -1e-6 * scale);
    }
  }
}

TEST_CASE("dual multipliers of the matchrows form a moment sequence") {
  // min x s.t. x - xi in Q(1 - xi^2)_2: the toy bound problem.
  ConicProgram prog;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 1);
  A(0, 0) = 1.0;
  Eigen::Vector3d b(0.0, -1.0, 0.0);
  const auto enc =
      encode_qmod_membership(prog, A, b, interval_generator(), 1);
  prog.add_objective(prog.var(enc.x_block, 0), 1.0);
  const auto sol = conicore::solve(prog);
  REQUIRE(sol.status == SolveStatus::optimal);

  Eigen::VectorXd z(3);
  for (int i = 0; i < 3; ++i) z[i] = -sol.equality_dual[enc.matchrows[i]];
  const momentkit::Tms zt(1, 2, z);
  const auto mm = momentkit::moment_matrices(interval_generator(), zt, 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(mm.moment);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> el(mm.localizing);
  CHECK(em.eigenvalues().minCoeff() >= -1e-8);
  CHECK(el.eigenvalues().minCoeff() >= -1e-8);
  // The optimal multiplier is the Dirac at the active point xi = 1.
  CHECK(z[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(z[1] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(z[2] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("plain SOS membership in the decision variables") {
  auto solve_target = [&](int n, int d1, const Poly& target) {
    ConicProgram prog;
    const auto enc = encode_sos_in_x(prog, n, d1, "sos");
    auto basis = monomial_basis(n, 2 * d1);
    for (int a = 0; a < basis->size(); ++a)
      prog.set_rhs(enc.matchrows[a], target.coeff(basis->exponent_at(a)));
    return conicore::solve(prog).status;
  };

  Poly x2(1);
  x2.add_term({2}, 1.0);
  CHECK(solve_target(1, 1, x2) == SolveStatus::optimal);
  CHECK(solve_target(1, 1, poly_scale(x2, -1.0)) ==
        SolveStatus::primal_infeasible);

  Poly diff(2);  // (x1 - x2)^2
  diff.add_term({2, 0}, 1.0);
  diff.add_term({1, 1}, -2.0);
  diff.add_term({0, 2}, 1.0);
  CHECK(solve_target(2, 1, diff) == SolveStatus::optimal);
}

TEST_CASE("c-alpha family for one variable") {
  const auto fam = build_c_alpha(1, 1);
  REQUIRE(fam.matrices.size() == 3);
  Eigen::Matrix2d c0, c1, c2;
  c0 << 1, 0, 0, 0;
  c1 << 0, 0.5, 0.5, 0;
  c2 << 0, 0, 0, 1;
  CHECK((fam.at({0}) - c0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fam.at({1}) - c1).cwiseAbs().maxCoeff() == 0.0);
  CHECK((fam.at({2}) - c2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("c-alpha matrices recompose the outer product") {
  // With the pair counts reinstated, sum_alpha m_alpha x^alpha C_alpha
  // equals [x]_d1 [x]_d1' entrywise as polynomials.
  const auto fam = build_c_alpha(2, 2);
  const int side = fam.row_basis->size();
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const Exponent want = exponent_sum(fam.row_basis->exponent_at(i),
                                         fam.row_basis->exponent_at(j));
      for (int a = 0; a < fam.alpha_basis->size(); ++a) {
        const double entry = fam.pair_count[a] * fam.matrices[a](i, j);
        const double expect =
            (fam.alpha_basis->exponent_at(a) == want) ? 1.0 : 0.0;
        CHECK(entry == expect);
      }
    }
  // At x = 0 only the constant matrix survives: e1 e1'.
  const Eigen::MatrixXd& c0 = fam.matrices[0];
  CHECK(c0(0, 0) == 1.0);
  CHECK(c0.cwiseAbs().sum() == 1.0);
}

TEST_CASE("trace identity against the Riesz pairing") {
  std::mt19937_64 rng(43);
  const auto fam = build_c_alpha(2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::VectorXd we = Eigen::VectorXd::Random(basis_size(2, 4));
    const momentkit::Tms w(2, 4, we);
    Poly q(2);
    q.add_term({1, 1}, 0.7);
    q.add_term({2, 2}, -0.3);
    q.add_term({0, 0}, 1.1);
    q.add_term({3, 0}, 0.4);
    // C-recomposition of q paired with the moment matrix.
    const Eigen::MatrixXd M = momentkit::moment_matrix(w, 2);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(M.rows(), M.cols());
    for (const auto& [alpha, c] : q.terms()) B += c * fam.at(alpha);
    const double lhs = (M.array() * B.array()).sum();
    CHECK(lhs == doctest::Approx(momentkit::riesz(w, q)).epsilon(1e-10));
  }
}
