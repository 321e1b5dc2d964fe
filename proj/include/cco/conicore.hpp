#ifndef CCO_CONICORE_HPP
#define CCO_CONICORE_HPP

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cco/polycore.hpp"

namespace cco {
namespace conicore {

enum class BlockKind { free_vars, nonneg, psd };

/// One variable block of a conic program. Vector blocks hold `size` scalars;
/// a psd block of side n holds the scaled upper triangle (svec) of a
/// symmetric n x n matrix, so that the Euclidean inner product of two svecs
/// equals the trace inner product of the matrices.
struct Block {
  BlockKind kind;
  int size;    // vector length, or matrix side for psd
  int offset;  // first scalar variable index
  std::string label;

  int scalar_count() const {
    return kind == BlockKind::psd ? size * (size + 1) / 2 : size;
  }
};

/// Linear conic program in the standard equality form
///
///   minimize    c' v
///   subject to  E v = d,   v in (free x nonneg x psd x ...)
///
/// Equality rows and objective entries are accumulated through the add_*
/// calls; repeated coefficients on the same entry sum.
class ConicProgram {
 public:
  int add_free_block(int n, std::string label = {});
  int add_nonneg_block(int n, std::string label = {});
  int add_psd_block(int side, std::string label = {});

  /// Scalar variable index of entry i of a vector block.
  int var(int block, int i) const;
  /// Scalar variable index of matrix entry (i, j), i <= j, of a psd block.
  int svec_var(int block, int i, int j) const;

  void add_objective(int scalar_var, double c);
  /// Objective term b * <E_ij_sym, X> on a psd block (counts (i,j) and
  /// (j,i) for i != j).
  void add_objective_psd(int block, int i, int j, double b);

  int add_equality(double rhs, std::string label = {});
  void add_coef(int row, int scalar_var, double c);
  /// Row term b * <E_ij_sym, X> on a psd block.
  void add_psd_coef(int row, int block, int i, int j, double b);
  void set_rhs(int row, double rhs);

  int num_vars() const { return num_vars_; }
  int num_rows() const { return static_cast<int>(rhs_.size()); }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(int b) const { return blocks_.at(b); }
  const Eigen::VectorXd objective_vector() const;
  double rhs(int row) const { return rhs_.at(row); }
  const std::vector<double>& rhs_values() const { return rhs_; }

  struct Entry {
    int row;
    int col;
    double value;
  };
  const std::vector<Entry>& entries() const { return entries_; }

  /// Rows carrying a given label, in insertion order.
  std::vector<int> rows_with_label(const std::string& label) const;

  /// Extracts a vector block's scalar segment from a full-length vector.
  Eigen::VectorXd block_segment(const Eigen::VectorXd& v, int block) const;
  /// Reassembles the symmetric matrix of a psd block from a full-length
  /// svec-scaled vector.
  Eigen::MatrixXd block_matrix(const Eigen::VectorXd& v, int block) const;

  /// Sparse text dump: block table, objective triplets and equality
  /// triplets as (block, row, col, value) records.
  void dump(std::ostream& os) const;

 private:
  int add_block(BlockKind kind, int n, std::string label);

  std::vector<Block> blocks_;
  int num_vars_ = 0;
  std::vector<Entry> entries_;
  std::vector<Entry> objective_;
  std::vector<double> rhs_;
  std::vector<std::string> row_labels_;
};

enum class SolveStatus {
  optimal,
  primal_infeasible,
  dual_infeasible,
  numerical_failure,
};

const char* to_string(SolveStatus status);

struct SolveOptions {
  double gap_tol = 1e-8;
  double feas_tol = 1e-8;
  int max_iterations = 200;
  double step_fraction = 0.98;
  double static_reg = 1e-13;
  int kkt_refinements = 6;
  bool verbose = false;
};

/// Primal-dual result. On status optimal the primal block values are cone
/// feasible within feas_tol, every equality holds within feas_tol, and the
/// absolute duality gap is at most gap_tol * (1 + |objective|). On an
/// infeasibility status the corresponding certificate ray is returned in the
/// dual (primal infeasible) or primal (dual infeasible) fields.
struct PrimalDualSolution {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd primal;
  Eigen::VectorXd equality_dual;
  Eigen::VectorXd cone_dual;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double gap = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
};

class SolverFailure : public Error {
 public:
  explicit SolverFailure(const std::string& what, PrimalDualSolution partial)
      : Error(what), partial_(std::move(partial)) {}
  const PrimalDualSolution& partial() const { return partial_; }

 private:
  PrimalDualSolution partial_;
};

/// Solver backend contract; the bundled reference backend is a dense
/// primal-dual interior-point method on the homogeneous self-dual embedding
/// with Nesterov-Todd scaling.
class SolverBackend {
 public:
  virtual ~SolverBackend() = default;
  virtual std::string name() const = 0;
  virtual PrimalDualSolution solve(const ConicProgram& prog,
                                   const SolveOptions& opts) const = 0;
};

void register_backend(std::shared_ptr<SolverBackend> backend);

namespace detail {
/// Defined next to the reference solver; invoked lazily by the registry so
/// archive linking never drops the built-in backend.
void register_builtin_backends();
}  // namespace detail
std::shared_ptr<SolverBackend> find_backend(const std::string& name);
std::vector<std::string> backend_names();

/// Solves with the named backend ("reference" unless overridden).
PrimalDualSolution solve(const ConicProgram& prog,
                         const SolveOptions& opts = {},
                         const std::string& backend = "reference");

/// Gathers equality-row dual multipliers by row label. Every requested label
/// must exist on at least one row.
std::map<std::string, Eigen::VectorXd> dual_extract(
    const ConicProgram& prog, const PrimalDualSolution& sol,
    const std::vector<std::string>& labels);

}  // namespace conicore
}  // namespace cco

#endif  // CCO_CONICORE_HPP
