#ifndef CCO_CLI_HPP
#define CCO_CLI_HPP

#include <optional>
#include <string>

#include "cco/problem_io.hpp"

namespace cco {
namespace cli {

/// Full command-line driver; returns the process exit code.
int run(int argc, const char* const* argv);

/// One robust solve of a problem at a fixed set size, dispatching on the
/// objective kind. Shared by the solve-at-gamma, certify, and reproduce
/// commands and by the sizing callback.
robustsolve::SolveReport solve_problem_at(
    const ProblemFile& p, double gamma,
    const robustsolve::SolverOptions& opts);

/// Certification checks run by the certify command; returns true when all
/// four pass at the given tolerances.
struct Certification {
  bool gap_ok = false;
  bool flat_ok = false;
  bool min_on_u_ok = false;
  bool samples_ok = false;
  double gap = 0.0;
  int k0 = 0;
  std::optional<int> flat_t;
  double min_on_u = 0.0;
  double min_sampled = 0.0;

  bool all() const { return gap_ok && flat_ok && min_on_u_ok && samples_ok; }
};

Certification certify_solution(const ProblemFile& p, double gamma,
                               const robustsolve::SolveReport& rep,
                               const robustsolve::SolverOptions& opts,
                               int sample_points, std::uint64_t seed);

}  // namespace cli
}  // namespace cco

#endif  // CCO_CLI_HPP
