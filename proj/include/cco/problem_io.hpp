#ifndef CCO_PROBLEM_IO_HPP
#define CCO_PROBLEM_IO_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cco/robustsolve.hpp"
#include "cco/uncertainkit.hpp"

namespace cco {
namespace cli {

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::vector<std::string> diagnostics)
      : Error(what), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

/// A full problem instance as stored on disk (JSON).
struct ProblemFile {
  std::string name;
  int n = 0;
  std::vector<std::string> variable_names;

  std::optional<Eigen::VectorXd> linear_objective;
  std::optional<polycore::Poly> poly_objective;
  bool sos_convex = false;

  robustsolve::PerturbedConstraint chance;
  robustsolve::DecisionSet decision_set;

  std::optional<uncertainkit::RandomModel> random;
  std::optional<Eigen::VectorXd> moment_mu;      // explicit override
  std::optional<Eigen::MatrixXd> moment_lambda;

  double eps = 0.05;
  uncertainkit::SizingOptions sizing;
  robustsolve::SolverOptions solver;

  /// Recorded reference solutions (terminal set sizes and optima) used by
  /// the reproduce command and regression tests.
  struct Reference {
    double eps = 0.0;
    double gamma = 0.0;
    std::optional<double> fstar;
    std::optional<Eigen::VectorXd> xstar;
  };
  std::vector<Reference> references;

  bool is_linear() const { return linear_objective.has_value(); }

  /// Uncertainty-set moments: the explicit override when present, otherwise
  /// the model's analytic (or sample) moments.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> uncertainty_moments() const;

  robustsolve::UncertaintySet uncertainty_set(double gamma) const;
};

ProblemFile parse_problem(const std::string& path);
ProblemFile parse_problem_json(const nlohmann::json& j,
                               const std::string& origin);
nlohmann::json emit_problem(const ProblemFile& p);

/// CSV helpers for empirical sample files: one sample per row, decimal
/// floats, optional header line.
Eigen::MatrixXd read_csv(const std::string& path);
void write_csv(const std::string& path, const Eigen::MatrixXd& rows);

/// Bundled fixture corpus.
std::vector<std::string> fixture_ids();
std::string fixture_dir();
std::string fixture_path(const std::string& id);
ProblemFile load_fixture(const std::string& id);

}  // namespace cli
}  // namespace cco

#endif  // CCO_PROBLEM_IO_HPP
