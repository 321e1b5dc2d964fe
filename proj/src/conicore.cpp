#include "cco/conicore.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace cco {
namespace conicore {

namespace {
constexpr double kSqrt2 = 1.4142135623730951;
}

int ConicProgram::add_block(BlockKind kind, int n, std::string label) {
  if (n < 1) throw DimensionMismatch("ConicProgram: block size must be >= 1");
  Block b{kind, n, num_vars_, std::move(label)};
  num_vars_ += b.scalar_count();
  blocks_.push_back(std::move(b));
  return static_cast<int>(blocks_.size()) - 1;
}

int ConicProgram::add_free_block(int n, std::string label) {
  return add_block(BlockKind::free_vars, n, std::move(label));
}

int ConicProgram::add_nonneg_block(int n, std::string label) {
  return add_block(BlockKind::nonneg, n, std::move(label));
}

int ConicProgram::add_psd_block(int side, std::string label) {
  return add_block(BlockKind::psd, side, std::move(label));
}

int ConicProgram::var(int block, int i) const {
  const Block& b = blocks_.at(block);
  if (b.kind == BlockKind::psd)
    throw DimensionMismatch("ConicProgram::var: block is psd");
  if (i < 0 || i >= b.size)
    throw DimensionMismatch("ConicProgram::var: index out of range");
  return b.offset + i;
}

int ConicProgram::svec_var(int block, int i, int j) const {
  const Block& b = blocks_.at(block);
  if (b.kind != BlockKind::psd)
    throw DimensionMismatch("ConicProgram::svec_var: block is not psd");
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= b.size)
    throw DimensionMismatch("ConicProgram::svec_var: index out of range");
  // Row-wise upper triangle.
  return b.offset + i * b.size - i * (i - 1) / 2 + (j - i);
}

void ConicProgram::add_objective(int scalar_var, double c) {
  if (c != 0.0) objective_.push_back({0, scalar_var, c});
}

void ConicProgram::add_objective_psd(int block, int i, int j, double b) {
  if (b == 0.0) return;
  const double scale = (i == j) ? 1.0 : kSqrt2;
  objective_.push_back({0, svec_var(block, i, j), scale * b});
}

int ConicProgram::add_equality(double rhs, std::string label) {
  rhs_.push_back(rhs);
  row_labels_.push_back(std::move(label));
  return static_cast<int>(rhs_.size()) - 1;
}

void ConicProgram::add_coef(int row, int scalar_var, double c) {
  if (row < 0 || row >= num_rows())
    throw DimensionMismatch("ConicProgram::add_coef: bad row");
  if (scalar_var < 0 || scalar_var >= num_vars_)
    throw DimensionMismatch("ConicProgram::add_coef: bad variable");
  if (c != 0.0) entries_.push_back({row, scalar_var, c});
}

void ConicProgram::add_psd_coef(int row, int block, int i, int j, double b) {
  if (b == 0.0) return;
  const double scale = (i == j) ? 1.0 : kSqrt2;
  add_coef(row, svec_var(block, i, j), scale * b);
}

void ConicProgram::set_rhs(int row, double rhs) { rhs_.at(row) = rhs; }

const Eigen::VectorXd ConicProgram::objective_vector() const {
  Eigen::VectorXd c = Eigen::VectorXd::Zero(num_vars_);
  for (const Entry& e : objective_) c[e.col] += e.value;
  return c;
}

std::vector<int> ConicProgram::rows_with_label(const std::string& label) const {
  std::vector<int> rows;
  for (int i = 0; i < num_rows(); ++i)
    if (row_labels_[i] == label) rows.push_back(i);
  return rows;
}

Eigen::VectorXd ConicProgram::block_segment(const Eigen::VectorXd& v,
                                            int block) const {
  const Block& b = blocks_.at(block);
  return v.segment(b.offset, b.scalar_count());
}

Eigen::MatrixXd ConicProgram::block_matrix(const Eigen::VectorXd& v,
                                           int block) const {
  const Block& b = blocks_.at(block);
  if (b.kind != BlockKind::psd)
    throw DimensionMismatch("ConicProgram::block_matrix: block is not psd");
  Eigen::MatrixXd m(b.size, b.size);
  int idx = b.offset;
  for (int i = 0; i < b.size; ++i) {
    for (int j = i; j < b.size; ++j, ++idx) {
      const double x = (i == j) ? v[idx] : v[idx] / kSqrt2;
      m(i, j) = x;
      m(j, i) = x;
    }
  }
  return m;
}

void ConicProgram::dump(std::ostream& os) const {
  os << "blocks " << blocks_.size() << "\n";
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const char* kind = blocks_[b].kind == BlockKind::free_vars ? "free"
                       : blocks_[b].kind == BlockKind::nonneg ? "nonneg"
                                                              : "psd";
    os << "block " << b << " " << kind << " " << blocks_[b].size << " "
       << (blocks_[b].label.empty() ? "-" : blocks_[b].label) << "\n";
  }
  auto locate = [&](int col) {
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      const Block& blk = blocks_[b];
      if (col >= blk.offset && col < blk.offset + blk.scalar_count())
        return std::pair<int, int>(static_cast<int>(b), col - blk.offset);
    }
    return std::pair<int, int>(-1, col);
  };
  os << "objective " << objective_.size() << "\n";
  for (const Entry& e : objective_) {
    auto [b, local] = locate(e.col);
    os << b << " -1 " << local << " " << e.value << "\n";
  }
  os << "equalities " << rhs_.size() << " entries " << entries_.size() << "\n";
  for (const Entry& e : entries_) {
    auto [b, local] = locate(e.col);
    os << b << " " << e.row << " " << local << " " << e.value << "\n";
  }
  os << "rhs\n";
  for (std::size_t i = 0; i < rhs_.size(); ++i) os << i << " " << rhs_[i] << "\n";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::primal_infeasible:
      return "primal-infeasible";
    case SolveStatus::dual_infeasible:
      return "dual-infeasible";
    case SolveStatus::numerical_failure:
      return "numerical-failure";
  }
  return "unknown";
}

namespace {

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

std::unordered_map<std::string, std::shared_ptr<SolverBackend>>& registry() {
  static std::unordered_map<std::string, std::shared_ptr<SolverBackend>> r;
  return r;
}

}  // namespace

void register_backend(std::shared_ptr<SolverBackend> backend) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  registry()[backend->name()] = std::move(backend);
}

std::shared_ptr<SolverBackend> find_backend(const std::string& name) {
  static std::once_flag builtin_once;
  std::call_once(builtin_once, detail::register_builtin_backends);
  std::lock_guard<std::mutex> lock(registry_mutex());
  auto it = registry().find(name);
  if (it == registry().end()) {
    std::ostringstream os;
    os << "unknown conic backend '" << name << "'; available:";
    for (const auto& [n, _] : registry()) os << " " << n;
    throw Error(os.str());
  }
  return it->second;
}

std::vector<std::string> backend_names() {
  static std::once_flag builtin_once;
  std::call_once(builtin_once, detail::register_builtin_backends);
  std::lock_guard<std::mutex> lock(registry_mutex());
  std::vector<std::string> names;
  for (const auto& [n, _] : registry()) names.push_back(n);
  std::sort(names.begin(), names.end());
  return names;
}

PrimalDualSolution solve(const ConicProgram& prog, const SolveOptions& opts,
                         const std::string& backend) {
  return find_backend(backend)->solve(prog, opts);
}

std::map<std::string, Eigen::VectorXd> dual_extract(
    const ConicProgram& prog, const PrimalDualSolution& sol,
    const std::vector<std::string>& labels) {
  if (sol.status != SolveStatus::optimal)
    throw Error("dual_extract: solution is not optimal");
  std::map<std::string, Eigen::VectorXd> out;
  for (const std::string& label : labels) {
    const std::vector<int> rows = prog.rows_with_label(label);
    if (rows.empty()) throw Error("dual_extract: missing label '" + label + "'");
    Eigen::VectorXd v(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      v[i] = sol.equality_dual[rows[i]];
    out.emplace(label, std::move(v));
  }
  return out;
}

}  // namespace conicore
}  // namespace cco
