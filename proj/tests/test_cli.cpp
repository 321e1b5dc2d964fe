#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cco/cli.hpp"
#include "cco/problem_io.hpp"

using namespace cco;
using namespace cco::cli;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned(args);
  std::vector<const char*> argv = {"ccocli"};
  for (const auto& a : owned) argv.push_back(a.c_str());
  return cco::cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string toy_problem_path() {
  const std::string path = "/tmp/cco_toy_problem.json";
  std::ofstream out(path);
  out << R"({
    "name": "toy",
    "decision": {"n": 1},
    "objective": {"linear": [1]},
    "chance": [
      {"alpha": [0], "a": [1]},
      {"alpha": [1], "b": -1.0}
    ],
    "decision_set": {},
    "random": {"kind": "joint_gaussian", "location": [0], "scale": [[1]]},
    "risk": {"eps": 0.05}
  })";
  return path;
}

}  // namespace

TEST_CASE("fixture corpus parses with the documented shapes") {
  const ProblemFile p = load_fixture("ex6.3");
  CHECK(p.n == 3);
  CHECK(p.chance.r == 3);
  CHECK(p.chance.d == 4);
  CHECK(p.eps == 0.25);
  CHECK(p.decision_set.num_ineqs() == 2);
  REQUIRE(!p.references.empty());
  CHECK(p.references[0].gamma == doctest::Approx(1.5387));
  for (const auto& id : fixture_ids()) CHECK_NOTHROW(load_fixture(id));
}

TEST_CASE("missing chance section is a parse error") {
  const std::string text = R"({
    "name": "bad",
    "decision": {"n": 1},
    "objective": {"linear": [1]},
    "chance": [],
    "random": {"mu": [0], "lambda": [[1]]},
    "risk": {"eps": 0.5}
  })";
  bool caught = false;
  try {
    parse_problem_json(json::parse(text), "inline");
  } catch (const ParseError& e) {
    caught = true;
    CHECK(std::string(e.what()).find("chance constraint required") !=
          std::string::npos);
  }
  CHECK(caught);
}

TEST_CASE("duplicate exponents are named in the diagnostics") {
  const std::string text = R"({
    "name": "bad",
    "decision": {"n": 1},
    "objective": {"linear": [1]},
    "chance": [
      {"alpha": [2], "a": [1]},
      {"alpha": [2], "b": 1.0}
    ],
    "random": {"mu": [0], "lambda": [[1]]},
    "risk": {"eps": 0.5}
  })";
  bool caught = false;
  try {
    parse_problem_json(json::parse(text), "inline");
  } catch (const ParseError& e) {
    caught = true;
    CHECK(std::string(e.what()).find("(2)") != std::string::npos);
  }
  CHECK(caught);
}

TEST_CASE("unknown family is reported with its name") {
  const std::string text = R"({
    "name": "bad",
    "decision": {"n": 1},
    "objective": {"linear": [1]},
    "chance": [{"alpha": [1], "a": [1]}],
    "random": {"kind": "product",
               "marginals": [{"family": "cauchy", "p1": 1.0}]},
    "risk": {"eps": 0.5}
  })";
  bool caught = false;
  try {
    parse_problem_json(json::parse(text), "inline");
  } catch (const ParseError& e) {
    caught = true;
    CHECK(std::string(e.what()).find("cauchy") != std::string::npos);
  }
  CHECK(caught);
}

TEST_CASE("emit and parse round-trip field for field") {
  for (const std::string id : {"ex6.3", "ex6.7", "portfolio"}) {
    const ProblemFile p = load_fixture(id);
    const json j = emit_problem(p);
    const ProblemFile q = parse_problem_json(j, "roundtrip:" + id);
    CHECK(q.name == p.name);
    CHECK(q.n == p.n);
    CHECK(q.eps == p.eps);
    CHECK(q.chance.d == p.chance.d);
    CHECK((q.chance.A - p.chance.A).cwiseAbs().maxCoeff() == 0.0);
    CHECK((q.chance.b - p.chance.b).cwiseAbs().maxCoeff() == 0.0);
    CHECK(q.decision_set.num_ineqs() == p.decision_set.num_ineqs());
    CHECK(q.decision_set.num_eqs() == p.decision_set.num_eqs());
    CHECK(q.decision_set.lmis.size() == p.decision_set.lmis.size());
    CHECK(q.decision_set.poly_ineqs.size() ==
          p.decision_set.poly_ineqs.size());
    if (p.linear_objective)
      CHECK((*q.linear_objective - *p.linear_objective).cwiseAbs()
                .maxCoeff() == 0.0);
    if (p.poly_objective) {
      REQUIRE(q.poly_objective.has_value());
      for (const auto& [alpha, c] : p.poly_objective->terms())
        CHECK(q.poly_objective->coeff(alpha) == c);
    }
    CHECK(q.sizing.N == p.sizing.N);
    CHECK(q.sizing.beta == p.sizing.beta);
    CHECK(q.references.size() == p.references.size());
    const bool pm = p.random.has_value();
    CHECK(q.random.has_value() == pm);
    if (pm) CHECK(q.random->kind == p.random->kind);
  }
}

TEST_CASE("csv round trip") {
  Eigen::MatrixXd m(3, 2);
  m << 1.5, -2.25, 0.0, 1e-3, 42.0, -7.0;
  const std::string path = "/tmp/cco_test_rt.csv";
  write_csv(path, m);
  const Eigen::MatrixXd back = read_csv(path);
  CHECK((m - back).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("solve-at-gamma on the toy problem exits cleanly") {
  const std::string path = toy_problem_path();
  const int code = run_cli({"solve-at-gamma", path, "--gamma", "1.0",
                            "--out", "/tmp/cco_cli_toy"});
  CHECK(code == 0);
  const std::string nd = slurp("/tmp/cco_cli_toy/toy-solve.ndjson");
  const json rec = json::parse(nd);
  CHECK(rec["status"] == "certified");
  CHECK(std::abs(rec["fstar"].get<double>() - 1.0) < 1e-5);
}

TEST_CASE("reproduce is byte-deterministic for a fixed seed") {
  const int c1 = run_cli({"reproduce", "ex6.6", "--mc", "20000", "--seed",
                          "7", "--out", "/tmp/cco_cli_r1"});
  const int c2 = run_cli({"reproduce", "ex6.6", "--mc", "20000", "--seed",
                          "7", "--out", "/tmp/cco_cli_r2"});
  CHECK(c1 == 0);
  CHECK(c2 == 0);
  CHECK(slurp("/tmp/cco_cli_r1/ex6.6-reproduce.ndjson") ==
        slurp("/tmp/cco_cli_r2/ex6.6-reproduce.ndjson"));
  CHECK(!slurp("/tmp/cco_cli_r1/ex6.6-reproduce.ndjson").empty());
}

TEST_CASE("certify command validates the toy optimum") {
  const std::string path = toy_problem_path();
  const int code = run_cli({"certify", path, "--gamma", "1.0", "--points",
                            "2000", "--out", "/tmp/cco_cli_cert"});
  CHECK(code == 0);
  const json rec =
      json::parse(slurp("/tmp/cco_cli_cert/toy-certify.ndjson"));
  CHECK(rec["certified"] == true);
}

TEST_CASE("size command reaches the normal-quantile target") {
  const std::string path = toy_problem_path();
  const int code = run_cli({"size", path, "--mc", "200000", "--seed", "5",
                            "--out", "/tmp/cco_cli_size"});
  CHECK(code == 0);
  std::istringstream nd(slurp("/tmp/cco_cli_size/toy-size.ndjson"));
  std::string line, last;
  while (std::getline(nd, line))
    if (!line.empty()) last = line;
  const json fin = json::parse(last);
  CHECK(fin["command"] == "size");
  CHECK(std::abs(fin["gamma_star"].get<double>() - 2.706) < 0.2);
}

TEST_CASE("empirical models load from sibling csv files") {
  Eigen::MatrixXd rows(4, 2);
  rows << 0.0, 1.0, 2.0, -1.0, 1.0, 0.5, -1.0, 0.5;
  write_csv("/tmp/cco_emp_rows.csv", rows);
  std::ofstream out("/tmp/cco_emp_problem.json");
  out << R"({
    "name": "emp",
    "decision": {"n": 1},
    "objective": {"linear": [1]},
    "chance": [{"alpha": [0, 0], "a": [1]}, {"alpha": [1, 0], "b": -1.0}],
    "random": {"kind": "empirical", "csv": "cco_emp_rows.csv"},
    "risk": {"eps": 0.25}
  })";
  out.close();
  const ProblemFile p = parse_problem("/tmp/cco_emp_problem.json");
  REQUIRE(p.random.has_value());
  CHECK(p.random->data.rows() == 4);
  const auto [mu, lam] = p.uncertainty_moments();
  // Sample moments with the 1/(N-1) normalization.
  CHECK(mu[0] == doctest::Approx(0.5));
  CHECK(lam(0, 0) == doctest::Approx((0.25 + 2.25 + 0.25 + 2.25) / 3.0));
}

TEST_CASE("the backend env var is honored and validated") {
  setenv("CCO_BACKEND", "no-such-backend", 1);
  const std::string path = toy_problem_path();
  const int code = run_cli({"solve-at-gamma", path, "--gamma", "1.0",
                            "--out", "/tmp/cco_cli_envbad"});
  unsetenv("CCO_BACKEND");
  CHECK(code == 2);
}

TEST_CASE("unknown fixture ids fail with a listing") {
  const int code = run_cli({"reproduce", "nope"});
  CHECK(code == 2);
}
