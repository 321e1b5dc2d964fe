#include <doctest.h>

#include <random>
#include <sstream>

#include "cco/conicore.hpp"
#include "support/oracles.hpp"

using namespace cco::conicore;
using cco_tests::random_interior_instance;

TEST_CASE("linear program as a cone program") {
  ConicProgram p;
  const int xb = p.add_nonneg_block(1, "x");
  const int sb = p.add_nonneg_block(1, "s");
  const int row = p.add_equality(1.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  p.add_coef(row, p.var(sb, 0), -1.0);
  p.add_objective(p.var(xb, 0), 1.0);
  const auto sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.primal[p.var(xb, 0)] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.primal_objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("two-by-two semidefinite bound") {
  // min x s.t. [[x, 1], [1, x]] psd; the matrix is psd iff x >= 1.
  ConicProgram p;
  const int xb = p.add_free_block(1, "x");
  const int Sb = p.add_psd_block(2, "S");
  int row = p.add_equality(0.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  p.add_psd_coef(row, Sb, 0, 0, -1.0);
  row = p.add_equality(1.0);
  p.add_psd_coef(row, Sb, 0, 1, 0.5);
  row = p.add_equality(0.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  p.add_psd_coef(row, Sb, 1, 1, -1.0);
  p.add_objective(p.var(xb, 0), 1.0);
  const auto sol = solve(p);
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.primal[p.var(xb, 0)] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(std::abs(sol.primal_objective - sol.dual_objective) <=
        1e-8 * (1.0 + std::abs(sol.primal_objective)));
}

TEST_CASE("infeasible equality on the nonnegative orthant") {
  ConicProgram p;
  const int xb = p.add_nonneg_block(1, "x");
  const int row = p.add_equality(-1.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::primal_infeasible);
}

TEST_CASE("unbounded objective reports dual infeasibility") {
  ConicProgram p;
  const int xb = p.add_nonneg_block(2, "x");
  const int row = p.add_equality(1.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  p.add_coef(row, p.var(xb, 1), -1.0);
  p.add_objective(p.var(xb, 0), -1.0);
  const auto sol = solve(p);
  CHECK(sol.status == SolveStatus::dual_infeasible);
}

TEST_CASE("weak duality holds for constructed feasible pairs") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_interior_instance(rng, 1, 2, {3}, 6);
    const Eigen::VectorXd c = inst.prog.objective_vector();
    Eigen::VectorXd b(inst.prog.num_rows());
    for (int i = 0; i < b.size(); ++i) b[i] = inst.prog.rhs(i);
    // The generator's feasible pair: c'v0 - b'y0 = z0'v0 >= 0.
    CHECK(c.dot(inst.v0) >= b.dot(inst.y0) - 1e-8);
    const auto sol = solve(inst.prog);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.primal_objective >= sol.dual_objective - 1e-8);
    // The solved optimum cannot exceed the constructed feasible point.
    CHECK(sol.primal_objective <= c.dot(inst.v0) + 1e-7);
  }
}

TEST_CASE("argmin is invariant under positive objective scaling") {
  // A sharp (vertex) optimum, where the x-space error tracks the gap
  // tolerance linearly: min 2a + 3b s.t. a + b - s = 2, a - b = 0.5.
  auto build = [&](double scale) {
    ConicProgram p;
    const int ab = p.add_nonneg_block(2, "ab");
    const int sb = p.add_nonneg_block(1, "s");
    int row = p.add_equality(2.0);
    p.add_coef(row, p.var(ab, 0), 1.0);
    p.add_coef(row, p.var(ab, 1), 1.0);
    p.add_coef(row, p.var(sb, 0), -1.0);
    row = p.add_equality(0.5);
    p.add_coef(row, p.var(ab, 0), 1.0);
    p.add_coef(row, p.var(ab, 1), -1.0);
    p.add_objective(p.var(ab, 0), 2.0 * scale);
    p.add_objective(p.var(ab, 1), 3.0 * scale);
    return p;
  };
  SolveOptions opts;  // gap_tol 1e-8
  const auto sol1 = solve(build(1.0), opts);
  const auto sol2 = solve(build(5.0), opts);
  REQUIRE(sol1.status == SolveStatus::optimal);
  REQUIRE(sol2.status == SolveStatus::optimal);
  CHECK((sol1.primal - sol2.primal).cwiseAbs().maxCoeff() <=
        10.0 * opts.gap_tol);
  CHECK(sol2.primal_objective ==
        doctest::Approx(5.0 * sol1.primal_objective).epsilon(1e-7));
}

TEST_CASE("agreement with the alternating-projection reference") {
  std::mt19937_64 rng(303);
  int checked = 0;
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_interior_instance(rng, 0, 2, {3}, 5);
    const auto sol = solve(inst.prog);
    REQUIRE(sol.status == SolveStatus::optimal);
    cco_tests::ProjectionSolver proj(inst.prog);
    const double ref = proj.solve();
    CHECK(std::abs(ref - sol.primal_objective) <=
          1e-4 * (1.0 + std::abs(sol.primal_objective)));
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("dual_extract relabels equality multipliers") {
  std::mt19937_64 rng(404);
  auto inst = random_interior_instance(rng, 1, 2, {2}, 4);
  const auto sol = solve(inst.prog);
  REQUIRE(sol.status == SolveStatus::optimal);
  // All equality rows in the generator carry the label "eq": identity map.
  const auto duals = dual_extract(inst.prog, sol, {"eq"});
  REQUIRE(duals.count("eq") == 1);
  CHECK((duals.at("eq") - sol.equality_dual).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(dual_extract(inst.prog, sol, {"missing"}), cco::Error);
}

TEST_CASE("optimal status guarantees residual and gap tolerances") {
  std::mt19937_64 rng(505);
  SolveOptions opts;
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_interior_instance(rng, 2, 3, {4}, 8);
    const auto sol = solve(inst.prog, opts);
    REQUIRE(sol.status == SolveStatus::optimal);
    CHECK(sol.primal_residual <= opts.feas_tol);
    CHECK(sol.dual_residual <= opts.feas_tol);
    CHECK(sol.gap <= opts.gap_tol * (1.0 + std::abs(sol.primal_objective)));
  }
}

TEST_CASE("program dump lists blocks and triplets") {
  ConicProgram p;
  const int xb = p.add_nonneg_block(1, "x");
  const int row = p.add_equality(2.0, "r");
  p.add_coef(row, p.var(xb, 0), 3.0);
  p.add_objective(p.var(xb, 0), 1.0);
  std::ostringstream os;
  p.dump(os);
  const std::string text = os.str();
  CHECK(text.find("blocks 1") != std::string::npos);
  CHECK(text.find("nonneg") != std::string::npos);
  CHECK(text.find("rhs") != std::string::npos);
}

namespace {

// Delegating backend exercising the registry seam.
class MirrorBackend : public SolverBackend {
 public:
  std::string name() const override { return "mirror"; }
  PrimalDualSolution solve(const ConicProgram& prog,
                           const SolveOptions& opts) const override {
    return find_backend("reference")->solve(prog, opts);
  }
};

}  // namespace

TEST_CASE("alternate backends plug into the registry") {
  register_backend(std::make_shared<MirrorBackend>());
  ConicProgram p;
  const int xb = p.add_nonneg_block(1, "x");
  const int sb = p.add_nonneg_block(1, "s");
  const int row = p.add_equality(1.0);
  p.add_coef(row, p.var(xb, 0), 1.0);
  p.add_coef(row, p.var(sb, 0), -1.0);
  p.add_objective(p.var(xb, 0), 1.0);
  const auto sol = solve(p, SolveOptions{}, "mirror");
  REQUIRE(sol.status == SolveStatus::optimal);
  CHECK(sol.primal_objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("unknown backend names raise with the available list") {
  bool threw = false;
  try {
    find_backend("no-such-backend");
  } catch (const cco::Error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("reference") != std::string::npos);
  }
  CHECK(threw);
  bool found = false;
  for (const auto& n : backend_names()) found = found || n == "reference";
  CHECK(found);
}
