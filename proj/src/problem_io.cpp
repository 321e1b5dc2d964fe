#include "cco/problem_io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cco {
namespace cli {

using nlohmann::json;
using robustsolve::DecisionSet;
using robustsolve::LmiBlock;
using robustsolve::PerturbedConstraint;
using uncertainkit::Family;
using uncertainkit::Marginal;
using uncertainkit::RandomModel;

namespace {

class Diagnostics {
 public:
  explicit Diagnostics(std::string origin) : origin_(std::move(origin)) {}

  void add(const std::string& field, const std::string& message) {
    std::ostringstream os;
    os << origin_ << ": " << field << ": " << message;
    items_.push_back(os.str());
  }

  void throw_if_any() const {
    if (items_.empty()) return;
    std::ostringstream os;
    os << origin_ << ": " << items_.size() << " problem-file error(s)";
    for (const auto& s : items_) os << "\n  " << s;
    throw ParseError(os.str(), items_);
  }

  bool empty() const { return items_.empty(); }

 private:
  std::string origin_;
  std::vector<std::string> items_;
};

Eigen::VectorXd to_vector(const json& j) {
  Eigen::VectorXd v(j.size());
  int i = 0;
  for (const auto& x : j) v[i++] = x.get<double>();
  return v;
}

Eigen::MatrixXd to_matrix(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j.at(i).size()) != cols)
      throw Error("ragged matrix literal");
    for (int c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

json from_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json from_matrix(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    out.push_back(row);
  }
  return out;
}

polycore::Poly poly_from_json(const json& j, int n, Diagnostics& diag,
                              const std::string& field) {
  polycore::Poly p(n);
  if (!j.contains("terms") || !j["terms"].is_array()) {
    diag.add(field, "expected an object with a 'terms' array");
    return p;
  }
  for (const auto& t : j["terms"]) {
    std::vector<int> alpha = t.at("alpha").get<std::vector<int>>();
    if (static_cast<int>(alpha.size()) != n) {
      diag.add(field, "term exponent length does not match decision size");
      continue;
    }
    p.add_term(alpha, t.at("coef").get<double>());
  }
  return p;
}

json poly_to_json(const polycore::Poly& p) {
  json terms = json::array();
  for (const auto& [alpha, c] : p.terms())
    terms.push_back(json{{"alpha", alpha}, {"coef", c}});
  return json{{"terms", terms}};
}

std::string exponent_string(const std::vector<int>& alpha) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < alpha.size(); ++i)
    os << alpha[i] << (i + 1 < alpha.size() ? "," : "");
  os << ")";
  return os.str();
}

RandomModel random_from_json(const json& j, int* r_out, Diagnostics& diag,
                             const std::string& base_dir) {
  const std::string kind = j.value("kind", "");
  if (kind == "product") {
    std::vector<Marginal> ms;
    for (const auto& mj : j.at("marginals")) {
      const std::string fam = mj.value("family", "");
      auto f = uncertainkit::family_from_string(fam);
      if (!f) {
        diag.add("random.marginals", "unknown distribution family '" + fam +
                                         "'");
        continue;
      }
      ms.push_back({*f, mj.value("p1", 0.0), mj.value("p2", 0.0)});
    }
    diag.throw_if_any();
    auto m = RandomModel::product(std::move(ms));
    *r_out = m.dim();
    return m;
  }
  if (kind == "joint_gaussian") {
    auto m = RandomModel::joint_gaussian(to_vector(j.at("location")),
                                         to_matrix(j.at("scale")));
    *r_out = m.dim();
    return m;
  }
  if (kind == "joint_t") {
    auto m = RandomModel::joint_t(j.at("dof").get<double>(),
                                  to_vector(j.at("location")),
                                  to_matrix(j.at("scale")));
    *r_out = m.dim();
    return m;
  }
  if (kind == "empirical") {
    const std::string rel = j.at("csv").get<std::string>();
    const std::filesystem::path p =
        std::filesystem::path(base_dir) / rel;
    auto m = RandomModel::empirical(read_csv(p.string()));
    *r_out = m.dim();
    return m;
  }
  diag.add("random.kind", "unknown random model kind '" + kind + "'");
  diag.throw_if_any();
  throw Error("unreachable");
}

json random_to_json(const RandomModel& m) {
  json out;
  switch (m.kind) {
    case RandomModel::Kind::product: {
      out["kind"] = "product";
      json ms = json::array();
      for (const auto& mg : m.marginals)
        ms.push_back(json{{"family", uncertainkit::to_string(mg.family)},
                          {"p1", mg.p1},
                          {"p2", mg.p2}});
      out["marginals"] = ms;
      break;
    }
    case RandomModel::Kind::joint_gaussian:
      out["kind"] = "joint_gaussian";
      out["location"] = from_vector(m.location);
      out["scale"] = from_matrix(m.scale);
      break;
    case RandomModel::Kind::joint_t:
      out["kind"] = "joint_t";
      out["dof"] = m.dof;
      out["location"] = from_vector(m.location);
      out["scale"] = from_matrix(m.scale);
      break;
    case RandomModel::Kind::empirical:
      out["kind"] = "empirical";
      out["csv"] = "";  // emitted models carry data externally
      break;
  }
  return out;
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::MatrixXd> ProblemFile::uncertainty_moments()
    const {
  if (moment_mu && moment_lambda) return {*moment_mu, *moment_lambda};
  if (random) {
    auto [mu, lam] = uncertainkit::moments_of(*random);
    if (moment_mu) mu = *moment_mu;
    if (moment_lambda) lam = *moment_lambda;
    return {mu, lam};
  }
  throw Error("problem '" + name +
              "' has neither explicit moments nor a random model");
}

robustsolve::UncertaintySet ProblemFile::uncertainty_set(double gamma) const {
  auto [mu, lam] = uncertainty_moments();
  return robustsolve::UncertaintySet{gamma, mu, lam};
}

ProblemFile parse_problem_json(const json& j, const std::string& origin) {
  Diagnostics diag(origin);
  ProblemFile p;
  p.name = j.value("name", origin);

  if (!j.contains("decision") || !j["decision"].contains("n")) {
    diag.add("decision", "missing decision section with field n");
    diag.throw_if_any();
  }
  p.n = j["decision"]["n"].get<int>();
  if (p.n < 1) diag.add("decision.n", "must be >= 1");
  if (j["decision"].contains("names"))
    p.variable_names = j["decision"]["names"].get<std::vector<std::string>>();
  else
    for (int i = 0; i < p.n; ++i)
      p.variable_names.push_back("x" + std::to_string(i + 1));
  if (static_cast<int>(p.variable_names.size()) != p.n)
    diag.add("decision.names", "length does not match n");

  // Objective.
  if (j.contains("objective")) {
    const json& obj = j["objective"];
    if (obj.contains("linear")) {
      Eigen::VectorXd c = to_vector(obj["linear"]);
      if (c.size() != p.n) diag.add("objective.linear", "length != n");
      p.linear_objective = c;
    } else if (obj.contains("poly")) {
      p.poly_objective = poly_from_json(obj["poly"], p.n, diag, "objective");
      p.sos_convex = obj["poly"].value("sos_convex", false);
    } else {
      diag.add("objective", "need either 'linear' or 'poly'");
    }
  } else {
    diag.add("objective", "missing");
  }

  // Chance constraint terms.
  int r = -1;
  if (!j.contains("chance") || !j["chance"].is_array() ||
      j["chance"].empty()) {
    diag.add("chance", "chance constraint required");
  } else {
    std::vector<PerturbedConstraint::Term> terms;
    std::vector<std::vector<int>> seen;
    for (const auto& tj : j["chance"]) {
      PerturbedConstraint::Term t;
      t.alpha = tj.at("alpha").get<std::vector<int>>();
      if (r < 0) r = static_cast<int>(t.alpha.size());
      if (static_cast<int>(t.alpha.size()) != r) {
        diag.add("chance", "inconsistent exponent dimensions");
        continue;
      }
      for (const auto& s : seen)
        if (s == t.alpha)
          diag.add("chance", "duplicate exponent " + exponent_string(t.alpha));
      seen.push_back(t.alpha);
      if (tj.contains("a") && !tj["a"].is_null()) {
        t.a = to_vector(tj["a"]);
        if (t.a.size() != p.n)
          diag.add("chance", "coefficient vector for exponent " +
                                 exponent_string(t.alpha) +
                                 " has length != n");
      }
      t.b0 = tj.value("b", 0.0);
      terms.push_back(std::move(t));
    }
    diag.throw_if_any();
    p.chance = PerturbedConstraint::from_terms(r, p.n, terms);
  }
  diag.throw_if_any();

  // Decision set.
  p.decision_set = DecisionSet::free_space(p.n);
  if (j.contains("decision_set")) {
    const json& ds = j["decision_set"];
    if (ds.contains("linear_ineqs")) {
      const auto& rows = ds["linear_ineqs"];
      p.decision_set.ineq_lhs.resize(rows.size(), p.n);
      p.decision_set.ineq_rhs.resize(rows.size());
      int i = 0;
      for (const auto& rj : rows) {
        Eigen::VectorXd a = to_vector(rj.at("a"));
        if (a.size() != p.n)
          diag.add("decision_set.linear_ineqs", "row length != n");
        else
          p.decision_set.ineq_lhs.row(i) = a.transpose();
        p.decision_set.ineq_rhs[i] = rj.at("rhs").get<double>();
        ++i;
      }
    }
    if (ds.contains("linear_eqs")) {
      const auto& rows = ds["linear_eqs"];
      p.decision_set.eq_lhs.resize(rows.size(), p.n);
      p.decision_set.eq_rhs.resize(rows.size());
      int i = 0;
      for (const auto& rj : rows) {
        Eigen::VectorXd a = to_vector(rj.at("a"));
        if (a.size() != p.n)
          diag.add("decision_set.linear_eqs", "row length != n");
        else
          p.decision_set.eq_lhs.row(i) = a.transpose();
        p.decision_set.eq_rhs[i] = rj.at("rhs").get<double>();
        ++i;
      }
    }
    if (ds.contains("lmi")) {
      for (const auto& lj : ds["lmi"]) {
        LmiBlock b;
        b.coef.push_back(to_matrix(lj.at("f0")));
        for (const auto& fj : lj.at("fx")) b.coef.push_back(to_matrix(fj));
        if (static_cast<int>(b.coef.size()) != p.n + 1)
          diag.add("decision_set.lmi", "need one fx matrix per variable");
        p.decision_set.lmis.push_back(std::move(b));
      }
    }
    if (ds.contains("poly_ineqs")) {
      for (const auto& uj : ds["poly_ineqs"])
        p.decision_set.poly_ineqs.push_back(
            poly_from_json(uj, p.n, diag, "decision_set.poly_ineqs"));
    }
  }

  // Random model and/or explicit moments.
  std::string base_dir = ".";
  {
    std::filesystem::path op(origin);
    if (op.has_parent_path()) base_dir = op.parent_path().string();
  }
  if (j.contains("random")) {
    const json& rj = j["random"];
    if (rj.contains("kind")) {
      int r_model = 0;
      p.random = random_from_json(rj, &r_model, diag, base_dir);
      if (r >= 0 && r_model != r)
        diag.add("random", "model dimension does not match the chance terms");
    }
    if (rj.contains("mu")) p.moment_mu = to_vector(rj["mu"]);
    if (rj.contains("lambda")) p.moment_lambda = to_matrix(rj["lambda"]);
    if (p.moment_mu && r >= 0 && p.moment_mu->size() != r)
      diag.add("random.mu", "length does not match the chance dimension");
    if (p.moment_lambda && r >= 0 &&
        (p.moment_lambda->rows() != r || p.moment_lambda->cols() != r))
      diag.add("random.lambda", "shape does not match the chance dimension");
    if (!p.random && !(p.moment_mu && p.moment_lambda))
      diag.add("random", "need a model kind or explicit mu and lambda");
  } else {
    diag.add("random", "missing");
  }

  // Risk and algorithm parameters.
  if (j.contains("risk")) p.eps = j["risk"].value("eps", 0.05);
  else diag.add("risk", "missing");
  if (!(p.eps > 0.0 && p.eps < 1.0)) diag.add("risk.eps", "must be in (0,1)");
  p.sizing.eps = p.eps;
  if (j.contains("sizing")) {
    const json& s = j["sizing"];
    p.sizing.beta = s.value("beta", 0.05);
    p.sizing.rho = s.value("rho", 1e-6);
    p.sizing.N = s.value("N", 100);
    p.sizing.Nhat = s.value("Nhat", 1000000LL);
    p.sizing.seed = s.value("seed", 1ULL);
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    p.solver.gap_tol = s.value("gap_tol", 1e-6);
    p.solver.cert_tol = s.value("cert_tol", 1e-6);
    p.solver.rank_tol = s.value("rank_tol", 1e-6);
    p.solver.k_max_extra = s.value("kmax_extra", 3);
    p.solver.conic.gap_tol = s.value("conic_gap_tol", 1e-8);
    p.solver.conic.feas_tol = s.value("conic_feas_tol", 1e-8);
    p.solver.sos_convexity_preflight = s.value("preflight", false);
  }

  if (j.contains("references")) {
    for (const auto& rj : j["references"]) {
      ProblemFile::Reference ref;
      ref.eps = rj.value("eps", p.eps);
      ref.gamma = rj.at("gamma").get<double>();
      if (rj.contains("fstar")) ref.fstar = rj["fstar"].get<double>();
      if (rj.contains("xstar")) ref.xstar = to_vector(rj["xstar"]);
      p.references.push_back(std::move(ref));
    }
  }

  diag.throw_if_any();
  return p;
}

ProblemFile parse_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open problem file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": JSON syntax error: " + e.what(),
                     {std::string(e.what())});
  }
  return parse_problem_json(j, path);
}

nlohmann::json emit_problem(const ProblemFile& p) {
  json j;
  j["name"] = p.name;
  j["decision"] = json{{"n", p.n}, {"names", p.variable_names}};
  if (p.linear_objective)
    j["objective"] = json{{"linear", from_vector(*p.linear_objective)}};
  else if (p.poly_objective) {
    json poly = poly_to_json(*p.poly_objective);
    poly["sos_convex"] = p.sos_convex;
    j["objective"] = json{{"poly", poly}};
  }
  json chance = json::array();
  auto basis = polycore::monomial_basis(p.chance.r, p.chance.d);
  for (int t = 0; t < basis->size(); ++t) {
    const bool has_a = p.chance.A.row(t).cwiseAbs().sum() != 0.0;
    if (!has_a && p.chance.b[t] == 0.0) continue;
    json tj;
    tj["alpha"] = basis->exponent_at(t);
    if (has_a) tj["a"] = from_vector(p.chance.A.row(t).transpose());
    if (p.chance.b[t] != 0.0) tj["b"] = p.chance.b[t];
    chance.push_back(tj);
  }
  j["chance"] = chance;
  json ds;
  if (p.decision_set.num_ineqs() > 0) {
    json rows = json::array();
    for (int i = 0; i < p.decision_set.num_ineqs(); ++i)
      rows.push_back(
          json{{"a", from_vector(p.decision_set.ineq_lhs.row(i).transpose())},
               {"rhs", p.decision_set.ineq_rhs[i]}});
    ds["linear_ineqs"] = rows;
  }
  if (p.decision_set.num_eqs() > 0) {
    json rows = json::array();
    for (int i = 0; i < p.decision_set.num_eqs(); ++i)
      rows.push_back(
          json{{"a", from_vector(p.decision_set.eq_lhs.row(i).transpose())},
               {"rhs", p.decision_set.eq_rhs[i]}});
    ds["linear_eqs"] = rows;
  }
  if (!p.decision_set.lmis.empty()) {
    json lmis = json::array();
    for (const auto& b : p.decision_set.lmis) {
      json lj;
      lj["f0"] = from_matrix(b.coef[0]);
      json fx = json::array();
      for (std::size_t l = 1; l < b.coef.size(); ++l)
        fx.push_back(from_matrix(b.coef[l]));
      lj["fx"] = fx;
      lmis.push_back(lj);
    }
    ds["lmi"] = lmis;
  }
  if (!p.decision_set.poly_ineqs.empty()) {
    json us = json::array();
    for (const auto& u : p.decision_set.poly_ineqs) us.push_back(poly_to_json(u));
    ds["poly_ineqs"] = us;
  }
  j["decision_set"] = ds;
  json rj;
  if (p.random) rj = random_to_json(*p.random);
  if (p.moment_mu) rj["mu"] = from_vector(*p.moment_mu);
  if (p.moment_lambda) rj["lambda"] = from_matrix(*p.moment_lambda);
  j["random"] = rj;
  j["risk"] = json{{"eps", p.eps}};
  j["sizing"] = json{{"beta", p.sizing.beta},
                     {"rho", p.sizing.rho},
                     {"N", p.sizing.N},
                     {"Nhat", p.sizing.Nhat},
                     {"seed", p.sizing.seed}};
  j["solver"] = json{{"gap_tol", p.solver.gap_tol},
                     {"cert_tol", p.solver.cert_tol},
                     {"rank_tol", p.solver.rank_tol},
                     {"kmax_extra", p.solver.k_max_extra},
                     {"conic_gap_tol", p.solver.conic.gap_tol},
                     {"conic_feas_tol", p.solver.conic.feas_tol}};
  if (!p.references.empty()) {
    json refs = json::array();
    for (const auto& ref : p.references) {
      json e{{"eps", ref.eps}, {"gamma", ref.gamma}};
      if (ref.fstar) e["fstar"] = *ref.fstar;
      if (ref.xstar) e["xstar"] = from_vector(*ref.xstar);
      refs.push_back(e);
    }
    j["references"] = refs;
  }
  return j;
}

Eigen::MatrixXd read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open csv file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric && first) {
      first = false;  // header line
      continue;
    }
    first = false;
    if (!numeric) throw Error(path + ": non-numeric row");
    if (!rows.empty() && rows.back().size() != row.size())
      throw Error(path + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(path + ": no data rows");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c) m(i, c) = rows[i][c];
  return m;
}

void write_csv(const std::string& path, const Eigen::MatrixXd& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write csv file: " + path);
  out.precision(17);
  for (int i = 0; i < rows.rows(); ++i) {
    for (int c = 0; c < rows.cols(); ++c)
      out << rows(i, c) << (c + 1 < rows.cols() ? "," : "");
    out << "\n";
  }
}

std::vector<std::string> fixture_ids() {
  return {"ex6.2", "ex6.3", "ex6.4", "ex6.5",
          "ex6.6", "ex6.7", "ex6.8", "portfolio"};
}

std::string fixture_dir() {
  if (const char* env = std::getenv("CCO_FIXTURE_DIR")) return env;
#ifdef CCO_FIXTURE_DEFAULT_DIR
  return CCO_FIXTURE_DEFAULT_DIR;
#else
  return "fixtures";
#endif
}

std::string fixture_path(const std::string& id) {
  std::string stem = id;
  for (char& c : stem)
    if (c == '.') c = '_';
  return fixture_dir() + "/" + stem + ".json";
}

ProblemFile load_fixture(const std::string& id) {
  const auto ids = fixture_ids();
  if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
    std::ostringstream os;
    os << "unknown fixture '" << id << "'; available:";
    for (const auto& s : ids) os << " " << s;
    throw Error(os.str());
  }
  return parse_problem(fixture_path(id));
}

}  // namespace cli
}  // namespace cco
