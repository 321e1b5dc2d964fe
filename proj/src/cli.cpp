#include "cco/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <future>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cco/uncertainkit.hpp"

namespace cco {
namespace cli {

using nlohmann::json;
using robustsolve::ReportStatus;
using robustsolve::SolveReport;
using robustsolve::SolverOptions;

namespace {

std::string format4(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

std::string format_vec4(const Eigen::VectorXd& v) {
  std::ostringstream os;
  os << "(";
  for (int i = 0; i < v.size(); ++i)
    os << format4(v[i]) << (i + 1 < v.size() ? ", " : "");
  os << ")";
  return os.str();
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

struct OutputSink {
  std::ostringstream table;
  std::vector<json> records;
  std::string stem;
  std::string out_dir;
  bool timings = false;

  void table_row(const std::string& key, const std::string& value) {
    table << key << ' ';
    for (std::size_t i = key.size() + 1; i < 20; ++i) table << ' ';
    table << value << "\n";
  }

  void flush(std::ostream& console) const {
    console << table.str();
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    {
      std::ofstream t(out_dir + "/" + stem + ".txt");
      t << table.str();
    }
    {
      std::ofstream nd(out_dir + "/" + stem + ".ndjson");
      for (const auto& r : records) nd << r.dump() << "\n";
    }
  }
};

json report_record(const ProblemFile& p, const std::string& command,
                   double eps, double gamma, const SolveReport& rep,
                   std::optional<double> pvio) {
  json rec;
  rec["problem"] = p.name;
  rec["command"] = command;
  rec["eps"] = eps;
  rec["gamma"] = gamma;
  rec["status"] = robustsolve::to_string(rep.status);
  rec["k_used"] = rep.k_used;
  rec["fstar"] = rep.fstar;
  rec["xstar"] = vec_to_json(rep.xstar);
  rec["gap"] = rep.gap;
  if (rep.flat_t) rec["flat_t"] = *rep.flat_t;
  else rec["flat_t"] = nullptr;
  if (pvio) rec["pvio"] = *pvio;
  return rec;
}

SolverOptions effective_options(const ProblemFile& p,
                                const std::optional<double>& gap_tol,
                                const std::optional<int>& kmax,
                                const std::string& backend) {
  SolverOptions opts = p.solver;
  if (gap_tol) {
    opts.gap_tol = *gap_tol;
    opts.conic.gap_tol = std::min(opts.conic.gap_tol, 0.01 * *gap_tol);
  }
  if (kmax) opts.k_max_extra = *kmax;
  if (!backend.empty()) opts.backend = backend;
  else if (const char* env = std::getenv("CCO_BACKEND")) opts.backend = env;
  return opts;
}

std::optional<double> estimate_pvio_for(const ProblemFile& p,
                                        const Eigen::VectorXd& x,
                                        long long nhat, std::uint64_t seed) {
  if (!p.random || nhat <= 0) return std::nullopt;
  const Eigen::MatrixXd rows =
      uncertainkit::sample(*p.random, static_cast<int>(nhat), seed);
  return uncertainkit::estimate_pvio(p.chance, x, rows);
}

}  // namespace

SolveReport solve_problem_at(const ProblemFile& p, double gamma,
                             const SolverOptions& opts) {
  const auto U = p.uncertainty_set(gamma);
  if (p.is_linear())
    return robustsolve::solve_linear_cco(*p.linear_objective, p.chance,
                                         p.decision_set, U, opts);
  if (!p.poly_objective)
    throw Error("problem '" + p.name + "' has no objective");
  return robustsolve::solve_sosconvex_cco(*p.poly_objective, p.chance,
                                          p.decision_set, U, opts);
}

Certification certify_solution(const ProblemFile& p, double gamma,
                               const SolveReport& rep,
                               const SolverOptions& opts, int sample_points,
                               std::uint64_t seed) {
  Certification c;
  c.k0 = robustsolve::relaxation_order_floor(p.chance.d);
  c.gap = rep.gap;
  c.flat_t = rep.flat_t;
  c.gap_ok = rep.gap <= opts.gap_tol * (1.0 + std::abs(rep.fstar));
  c.flat_ok = rep.flat_t.has_value() && *rep.flat_t == c.k0;

  const auto U = p.uncertainty_set(gamma);
  const auto m =
      robustsolve::min_on_U(p.chance.fix_x(rep.xstar), U, rep.k_used, opts);
  c.min_on_u = m.bound;
  c.min_on_u_ok = m.bound >= -opts.cert_tol;

  const Eigen::MatrixXd pts = uncertainkit::sample_in_ellipsoid(
      U.mu, U.lambda, U.gamma, sample_points, seed);
  const polycore::Poly h = p.chance.fix_x(rep.xstar);
  double min_h = std::numeric_limits<double>::infinity();
  for (int i = 0; i < pts.rows(); ++i)
    min_h = std::min(min_h, polycore::poly_eval(h, pts.row(i).transpose()));
  c.min_sampled = min_h;
  c.samples_ok = min_h >= -opts.cert_tol;
  return c;
}

namespace {

int cmd_solve(const ProblemFile& p, double gamma, const SolverOptions& opts,
              double eps, long long mc, std::uint64_t seed, OutputSink& sink,
              const std::string& command, const std::string& dump_path,
              const ProblemFile::Reference* reference = nullptr) {
  if (!dump_path.empty()) {
    robustsolve::RelaxationHandles h;
    const int k0 = robustsolve::relaxation_order_floor(p.chance.d);
    const auto U = p.uncertainty_set(gamma);
    conicore::ConicProgram prog =
        p.is_linear()
            ? robustsolve::build_primal_relaxation(*p.linear_objective,
                                                   p.chance, p.decision_set,
                                                   U, k0, &h, opts)
            : robustsolve::build_sosconvex_relaxation(*p.poly_objective,
                                                      p.chance, p.decision_set,
                                                      U, k0, &h, opts);
    std::ofstream out(dump_path);
    prog.dump(out);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const SolveReport rep = solve_problem_at(p, gamma, opts);
  const auto wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
  const auto pvio = estimate_pvio_for(p, rep.xstar, mc, seed);

  sink.table_row("problem", p.name);
  sink.table_row("command", command);
  sink.table_row("gamma", format4(gamma));
  sink.table_row("status", robustsolve::to_string(rep.status));
  sink.table_row("k", std::to_string(rep.k_used));
  sink.table_row("f*", format4(rep.fstar));
  sink.table_row("x*", format_vec4(rep.xstar));
  sink.table_row("gap", (std::ostringstream() << rep.gap).str());
  sink.table_row("flat_t", rep.flat_t ? std::to_string(*rep.flat_t) : "-");
  if (pvio) sink.table_row("p_vio", format4(*pvio));
  if (reference && reference->fstar)
    sink.table_row("reference f*", format4(*reference->fstar));
  sink.table_row("wall(s)", format4(wall));

  json rec = report_record(p, command, eps, gamma, rep, pvio);
  rec["seed"] = seed;
  if (sink.timings) rec["wall_s"] = wall;
  sink.records.push_back(rec);
  return rep.status == ReportStatus::certified ? 0 : 1;
}

int cmd_size(const ProblemFile& p, const uncertainkit::SizingOptions& so,
             const SolverOptions& opts, OutputSink& sink) {
  if (!p.random)
    throw Error("size: problem has no random model to sample from");
  auto [mu, lam] = p.uncertainty_moments();

  std::vector<SolveReport> reports;
  const auto t0 = std::chrono::steady_clock::now();
  uncertainkit::SizingReport sz = uncertainkit::size_uncertainty_set(
      p.chance, mu, lam, *p.random, so, [&](double gamma) {
        SolveReport rep = solve_problem_at(p, gamma, opts);
        // Certified solves are the normal path; a best-effort report with a
        // closed duality gap is still a sound bisection step (only the
        // optimizer feeds the violation estimate).
        const bool usable =
            rep.status == ReportStatus::certified ||
            (rep.status == ReportStatus::max_order_reached &&
             rep.xstar.size() > 0 &&
             rep.gap <= 1e-4 * (1.0 + std::abs(rep.fstar)));
        if (!usable)
          throw Error(std::string("robust solve not usable: ") +
                      robustsolve::to_string(rep.status));
        reports.push_back(rep);
        return std::make_pair(rep.xstar, rep.fstar);
      });
  const auto wall = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();

  for (std::size_t i = 0; i < sz.trace.size(); ++i) {
    const auto& lr = sz.trace[i];
    json rec = report_record(p, "size", so.eps, lr.gamma, reports[i],
                             lr.pvio);
    rec["loop"] = lr.loop;
    rec["seed"] = so.seed;
    sink.records.push_back(rec);
  }
  json fin;
  fin["problem"] = p.name;
  fin["command"] = "size";
  fin["eps"] = so.eps;
  fin["status"] = uncertainkit::to_string(sz.status);
  fin["gamma_star"] = sz.gamma_star;
  fin["initial_gamma"] = sz.initial_gamma;
  fin["lstar"] = sz.lstar;
  fin["loops"] = sz.loops;
  fin["beta_doublings"] = sz.beta_doublings;
  fin["fstar"] = sz.trace.empty() ? 0.0 : sz.trace.back().fstar;
  fin["pvio"] = sz.trace.empty() ? 0.0 : sz.trace.back().pvio;
  fin["seed"] = so.seed;
  if (sink.timings) fin["wall_s"] = wall;
  sink.records.push_back(fin);

  sink.table_row("problem", p.name);
  sink.table_row("command", "size");
  sink.table_row("eps", format4(so.eps));
  sink.table_row("status", uncertainkit::to_string(sz.status));
  sink.table_row("Gamma_1", format4(sz.initial_gamma));
  sink.table_row("L*", std::to_string(sz.lstar));
  sink.table_row("loops", std::to_string(sz.loops));
  sink.table_row("Gamma*", format4(sz.gamma_star));
  if (!sz.trace.empty()) {
    sink.table_row("f*", format4(sz.trace.back().fstar));
    sink.table_row("p_vio", format4(sz.trace.back().pvio));
  }
  sink.table_row("wall(s)", format4(wall));
  return (sz.status == uncertainkit::SizingStatus::converged ||
          sz.status == uncertainkit::SizingStatus::beta_doubled)
             ? 0
             : 1;
}

int cmd_certify(const ProblemFile& p, double gamma, const SolverOptions& opts,
                int points, std::uint64_t seed, OutputSink& sink) {
  const SolveReport rep = solve_problem_at(p, gamma, opts);
  const Certification c = certify_solution(p, gamma, rep, opts, points, seed);

  auto line = [&](const std::string& name, bool ok, const std::string& detail) {
    sink.table_row("check " + name, std::string(ok ? "PASS" : "FAIL") + "  " +
                                        detail);
  };
  sink.table_row("problem", p.name);
  sink.table_row("command", "certify");
  sink.table_row("gamma", format4(gamma));
  sink.table_row("status", robustsolve::to_string(rep.status));
  sink.table_row("f*", format4(rep.fstar));
  {
    std::ostringstream os;
    os << rep.gap << " vs " << opts.gap_tol * (1.0 + std::abs(rep.fstar));
    line("duality-gap", c.gap_ok, os.str());
  }
  {
    std::ostringstream os;
    os << "t=" << (c.flat_t ? std::to_string(*c.flat_t) : "-")
       << " k0=" << c.k0;
    line("flat-trunc", c.flat_ok, os.str());
  }
  {
    std::ostringstream os;
    os << c.min_on_u << " >= " << -opts.cert_tol;
    line("min-on-U", c.min_on_u_ok, os.str());
  }
  {
    std::ostringstream os;
    os << "min h = " << c.min_sampled << " over " << points << " points";
    line("sample-feas", c.samples_ok, os.str());
  }

  json rec = report_record(p, "certify", p.eps, gamma, rep, std::nullopt);
  rec["min_on_u"] = c.min_on_u;
  rec["min_sampled"] = c.min_sampled;
  rec["certified"] = c.all();
  rec["seed"] = seed;
  sink.records.push_back(rec);
  return (rep.status == ReportStatus::certified && c.all()) ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{
      "Robust approximation of chance-constrained polynomial programs"};
  app.require_subcommand(1);

  std::string problem_path, fixture_id, out_dir = "out", backend,
              dump_program;
  std::optional<double> gamma_flag, eps_flag, beta_flag, rho_flag,
      gap_tol_flag;
  std::optional<int> kmax_flag, n_flag;
  std::optional<long long> mc_flag;
  std::optional<std::uint64_t> seed_flag;
  bool timings = false;
  int cert_points = 10000;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_dir, "output directory for reports");
    cmd->add_option("--backend", backend,
                    "conic backend (default reference or $CCO_BACKEND)");
    cmd->add_option("--gap-tol", gap_tol_flag, "duality-gap tolerance");
    cmd->add_option("--kmax", kmax_flag, "extra relaxation orders past k0");
    cmd->add_option("--seed", seed_flag, "sampling seed");
    cmd->add_option("--mc", mc_flag, "Monte Carlo sample count");
    cmd->add_option("--eps", eps_flag, "risk level");
    cmd->add_flag("--timings", timings, "include wall time in records");
  };

  CLI::App* solve = app.add_subcommand(
      "solve-at-gamma", "solve the robust approximation at a fixed set size");
  solve->add_option("problem", problem_path, "problem JSON file")->required();
  solve->add_option("--gamma", gamma_flag, "uncertainty set size")->required();
  solve->add_option("--dump-program", dump_program,
                    "write the order-k0 conic program in triplet form");
  add_common(solve);

  CLI::App* size = app.add_subcommand(
      "size", "calibrate the set size by quantile start plus bisection");
  size->add_option("problem", problem_path, "problem JSON file")->required();
  size->add_option("--beta", beta_flag, "confidence parameter");
  size->add_option("--rho", rho_flag, "violation matching tolerance");
  size->add_option("--samples", n_flag, "order-statistic sample count N");
  add_common(size);

  CLI::App* certify = app.add_subcommand(
      "certify", "solve and verify the optimality certificate");
  certify->add_option("problem", problem_path, "problem JSON file")
      ->required();
  certify->add_option("--gamma", gamma_flag, "uncertainty set size")
      ->required();
  certify->add_option("--points", cert_points,
                      "feasibility sample count inside the set");
  add_common(certify);

  CLI::App* repro = app.add_subcommand(
      "reproduce", "rerun a bundled fixture at its recorded set size");
  repro->add_option("fixture", fixture_id, "fixture id (see --list)")
      ->required();
  repro->add_option("--gamma", gamma_flag, "override the recorded set size");
  add_common(repro);

  CLI::App* repro_all = app.add_subcommand(
      "reproduce-all", "rerun every fixture with a recorded set size");
  bool parallel = false;
  repro_all->add_flag("--parallel", parallel,
                      "run fixtures concurrently, one solver each");
  add_common(repro_all);

  CLI::App* fixtures = app.add_subcommand("fixtures", "list bundled fixtures");
  (void)fixtures;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (app.got_subcommand("fixtures")) {
      for (const auto& id : fixture_ids())
        std::cout << id << "  " << fixture_path(id) << "\n";
      return 0;
    }

    if (app.got_subcommand("reproduce-all")) {
      struct RowResult {
        std::string id;
        double gamma = 0.0;
        robustsolve::SolveReport rep;
        std::string error;
      };
      std::vector<std::string> ids;
      for (const auto& id : fixture_ids())
        if (!load_fixture(id).references.empty()) ids.push_back(id);
      auto run_one = [&](const std::string& id) {
        RowResult out;
        out.id = id;
        try {
          const ProblemFile p = load_fixture(id);
          SolverOptions opts =
              effective_options(p, gap_tol_flag, kmax_flag, backend);
          out.gamma = p.references.front().gamma;
          out.rep = solve_problem_at(p, out.gamma, opts);
        } catch (const std::exception& e) {
          out.error = e.what();
        }
        return out;
      };
      std::vector<RowResult> results(ids.size());
      if (parallel) {
        std::vector<std::future<RowResult>> futs;
        for (const auto& id : ids)
          futs.push_back(std::async(std::launch::async, run_one, id));
        for (std::size_t i = 0; i < futs.size(); ++i)
          results[i] = futs[i].get();
      } else {
        for (std::size_t i = 0; i < ids.size(); ++i)
          results[i] = run_one(ids[i]);
      }
      bool all_ok = true;
      OutputSink sink;
      sink.out_dir = out_dir;
      sink.timings = timings;
      sink.stem = "reproduce-all";
      for (const auto& r : results) {
        if (!r.error.empty()) {
          sink.table_row(r.id, "ERROR " + r.error);
          all_ok = false;
          continue;
        }
        std::ostringstream os;
        os << "gamma " << format4(r.gamma) << "  f* " << format4(r.rep.fstar)
           << "  " << robustsolve::to_string(r.rep.status);
        sink.table_row(r.id, os.str());
        json rec;
        rec["command"] = "reproduce-all";
        rec["problem"] = r.id;
        rec["gamma"] = r.gamma;
        rec["fstar"] = r.rep.fstar;
        rec["status"] = robustsolve::to_string(r.rep.status);
        rec["k_used"] = r.rep.k_used;
        rec["gap"] = r.rep.gap;
        sink.records.push_back(rec);
        all_ok =
            all_ok && r.rep.status == robustsolve::ReportStatus::certified;
      }
      sink.flush(std::cout);
      return all_ok ? 0 : 1;
    }

    ProblemFile p;
    std::string command;
    if (app.got_subcommand("reproduce")) {
      p = load_fixture(fixture_id);
      command = "reproduce";
    } else {
      p = parse_problem(problem_path);
    }

    OutputSink sink;
    sink.out_dir = out_dir;
    sink.timings = timings;

    const double eps = eps_flag.value_or(p.eps);
    const std::uint64_t seed = seed_flag.value_or(p.sizing.seed);
    SolverOptions opts = effective_options(p, gap_tol_flag, kmax_flag,
                                           backend);

    if (app.got_subcommand("solve-at-gamma")) {
      sink.stem = p.name + "-solve";
      const int code =
          cmd_solve(p, *gamma_flag, opts, eps, mc_flag.value_or(0), seed,
                    sink, "solve-at-gamma", dump_program);
      sink.flush(std::cout);
      return code;
    }
    if (app.got_subcommand("certify")) {
      sink.stem = p.name + "-certify";
      const int code = cmd_certify(p, *gamma_flag, opts,
                                   static_cast<int>(mc_flag.value_or(
                                       cert_points)),
                                   seed, sink);
      sink.flush(std::cout);
      return code;
    }
    if (app.got_subcommand("size")) {
      uncertainkit::SizingOptions so = p.sizing;
      so.eps = eps;
      if (beta_flag) so.beta = *beta_flag;
      if (rho_flag) so.rho = *rho_flag;
      if (n_flag) so.N = *n_flag;
      if (mc_flag) so.Nhat = *mc_flag;
      so.seed = seed;
      sink.stem = p.name + "-size";
      const int code = cmd_size(p, so, opts, sink);
      sink.flush(std::cout);
      return code;
    }
    if (app.got_subcommand("reproduce")) {
      // Pick the recorded reference matching the requested risk level.
      const ProblemFile::Reference* best = nullptr;
      for (const auto& ref : p.references)
        if (!best || std::abs(ref.eps - eps) < std::abs(best->eps - eps))
          best = &ref;
      double gamma = 0.0;
      if (gamma_flag) gamma = *gamma_flag;
      else if (best) gamma = best->gamma;
      else
        throw Error("fixture '" + p.name +
                    "' records no reference set size; pass --gamma");
      sink.stem = p.name + "-reproduce";
      const int code = cmd_solve(p, gamma, opts, eps,
                                 mc_flag.value_or(1000000), seed, sink,
                                 "reproduce", dump_program, best);
      sink.flush(std::cout);
      return code;
    }
    return 2;
  } catch (const ParseError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace cli
}  // namespace cco
