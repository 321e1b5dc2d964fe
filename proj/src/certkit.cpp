#include "cco/certkit.hpp"

#include <cmath>

namespace cco {
namespace certkit {

using polycore::basis_size;
using polycore::Exponent;
using polycore::exponent_sum;
using polycore::monomial_basis;

QmodEncoding encode_qmod_membership_on(conicore::ConicProgram& prog, int r,
                                       const Eigen::MatrixXd& A,
                                       const Eigen::VectorXd& b,
                                       const std::vector<int>& x_vars,
                                       const std::vector<Poly>& g, int k,
                                       const std::string& row_label) {
  for (const Poly& gi : g)
    if (gi.dimension() != r)
      throw DimensionMismatch("encode_qmod_membership: generator dimensions");
  if (A.rows() != b.size())
    throw DimensionMismatch("encode_qmod_membership: A rows vs b length");
  if (static_cast<int>(x_vars.size()) != A.cols())
    throw DimensionMismatch("encode_qmod_membership: A cols vs x variables");

  // The target lives in R[xi]_d where d is determined by A's row count.
  int d = 0;
  while (basis_size(r, d) < A.rows()) ++d;
  if (basis_size(r, d) != A.rows())
    throw DimensionMismatch(
        "encode_qmod_membership: A row count is not a full basis size");

  int max_gdeg = 0;
  for (const Poly& gi : g) max_gdeg = std::max(max_gdeg, gi.degree());
  if (2 * k < d || 2 * k < max_gdeg)
    throw DegreeOverflow("encode_qmod_membership: order too small (2k < d)");

  QmodEncoding enc;
  enc.r = r;
  enc.k = k;
  enc.target_degree = d;

  auto target_basis = monomial_basis(r, d);
  auto row_basis = monomial_basis(r, 2 * k);

  // One multiplier block per generator; the constant generator 1 is treated
  // like any other, so the plain SOS block is the caller's g[0] = 1 or an
  // implicit one we prepend here.
  std::vector<Poly> gens;
  gens.reserve(g.size() + 1);
  gens.push_back(Poly::constant(r, 1.0));
  for (const Poly& gi : g) gens.push_back(gi);

  for (const Poly& gi : gens) {
    const int half = (gi.degree() + 1) / 2;
    const int side = static_cast<int>(basis_size(r, k - half));
    enc.psd_blocks.push_back(prog.add_psd_block(side, row_label + ".Q"));
    enc.psd_sides.push_back(side);
  }

  enc.matchrows.reserve(row_basis->size());
  for (int a = 0; a < row_basis->size(); ++a) {
    const Exponent& alpha = row_basis->exponent_at(a);
    const int t = target_basis->find(alpha);
    const double rhs = (t >= 0) ? b[t] : 0.0;
    const int row = prog.add_equality(rhs, row_label);
    enc.matchrows.push_back(row);
    if (t >= 0)
      for (int l = 0; l < A.cols(); ++l)
        if (A(t, l) != 0.0) prog.add_coef(row, x_vars[l], -A(t, l));
  }

  // Coefficient of xi^alpha in [xi]_s' Q [xi]_s * g: every unordered pair
  // (beta, gamma) contributes g_delta on the row alpha = beta+gamma+delta.
  for (std::size_t gi = 0; gi < gens.size(); ++gi) {
    const int side = enc.psd_sides[gi];
    const int block = enc.psd_blocks[gi];
    const int half = (gens[gi].degree() + 1) / 2;
    auto side_basis = monomial_basis(r, k - half);
    for (int i = 0; i < side; ++i) {
      for (int j = i; j < side; ++j) {
        const Exponent bg = exponent_sum(side_basis->exponent_at(i),
                                         side_basis->exponent_at(j));
        for (const auto& [delta, coef] : gens[gi].terms()) {
          const int a = row_basis->index_of(exponent_sum(bg, delta));
          prog.add_psd_coef(enc.matchrows[a], block, i, j, coef);
        }
      }
    }
  }
  return enc;
}

QmodEncoding encode_qmod_membership(conicore::ConicProgram& prog,
                                    const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& b, const Poly& g,
                                    int k, const std::string& row_label) {
  const int n = static_cast<int>(A.cols());
  std::vector<int> x_vars;
  int x_block = -1;
  if (n > 0) {
    x_block = prog.add_free_block(n, row_label + ".x");
    for (int l = 0; l < n; ++l) x_vars.push_back(prog.var(x_block, l));
  }
  QmodEncoding enc = encode_qmod_membership_on(prog, g.dimension(), A, b,
                                               x_vars, {g}, k, row_label);
  enc.x_block = x_block;
  return enc;
}

QmodEncoding encode_sos_in_x(conicore::ConicProgram& prog, int n, int d1,
                             const std::string& row_label) {
  if (n < 1 || d1 < 0)
    throw DimensionMismatch("encode_sos_in_x: bad dimensions");
  const Eigen::MatrixXd A(basis_size(n, 2 * d1), 0);
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(basis_size(n, 2 * d1));
  return encode_qmod_membership_on(prog, n, A, b, {}, {}, d1, row_label);
}

std::vector<int> append_localizing_definition(conicore::ConicProgram& prog,
                                              int psd_block,
                                              const std::vector<int>& z_vars,
                                              const Poly& g, int k,
                                              const std::string& row_label) {
  const int r = g.dimension();
  auto z_basis = monomial_basis(r, 2 * k);
  if (static_cast<int>(z_vars.size()) != z_basis->size())
    throw DimensionMismatch("append_localizing_definition: z length");
  const int half = (g.degree() + 1) / 2;
  auto side_basis = monomial_basis(r, k - half);
  const int side = side_basis->size();
  if (prog.block(psd_block).size != side)
    throw DimensionMismatch("append_localizing_definition: block side");

  std::vector<int> rows;
  for (int i = 0; i < side; ++i) {
    for (int j = i; j < side; ++j) {
      const Exponent bg = exponent_sum(side_basis->exponent_at(i),
                                       side_basis->exponent_at(j));
      const int row = prog.add_equality(0.0, row_label);
      const double f = (i == j) ? 1.0 : 2.0;
      for (const auto& [delta, coef] : g.terms())
        prog.add_coef(row, z_vars[z_basis->index_of(exponent_sum(bg, delta))],
                      f * coef);
      prog.add_psd_coef(row, psd_block, i, j, -1.0);
      rows.push_back(row);
    }
  }
  return rows;
}

CAlphaFamily build_c_alpha(int n, int d1) {
  if (n < 1 || d1 < 1) throw DimensionMismatch("build_c_alpha: bad inputs");
  CAlphaFamily fam;
  fam.n = n;
  fam.d1 = d1;
  fam.alpha_basis = monomial_basis(n, 2 * d1);
  fam.row_basis = monomial_basis(n, d1);
  const int side = fam.row_basis->size();
  fam.matrices.assign(fam.alpha_basis->size(),
                      Eigen::MatrixXd::Zero(side, side));
  fam.pair_count.assign(fam.alpha_basis->size(), 0);
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const int a = fam.alpha_basis->index_of(exponent_sum(
          fam.row_basis->exponent_at(i), fam.row_basis->exponent_at(j)));
      fam.pair_count[a] += 1;
    }
  for (int i = 0; i < side; ++i)
    for (int j = 0; j < side; ++j) {
      const int a = fam.alpha_basis->index_of(exponent_sum(
          fam.row_basis->exponent_at(i), fam.row_basis->exponent_at(j)));
      fam.matrices[a](i, j) = 1.0 / fam.pair_count[a];
    }
  return fam;
}

Poly reassemble_certificate(const conicore::ConicProgram& prog,
                            const QmodEncoding& enc,
                            const std::vector<Poly>& g,
                            const Eigen::VectorXd& primal) {
  const int r = enc.r;
  std::vector<Poly> gens;
  gens.push_back(Poly::constant(r, 1.0));
  for (const Poly& gi : g) gens.push_back(gi);
  if (gens.size() != enc.psd_blocks.size())
    throw DimensionMismatch("reassemble_certificate: generator count");

  Poly out(r);
  for (std::size_t gi = 0; gi < gens.size(); ++gi) {
    const int half = (gens[gi].degree() + 1) / 2;
    auto side_basis = monomial_basis(r, enc.k - half);
    const Eigen::MatrixXd Q = prog.block_matrix(primal, enc.psd_blocks[gi]);
    Poly quad(r);
    for (int i = 0; i < side_basis->size(); ++i)
      for (int j = 0; j < side_basis->size(); ++j)
        quad.add_term(exponent_sum(side_basis->exponent_at(i),
                                   side_basis->exponent_at(j)),
                      Q(i, j));
    out += quad * gens[gi];
  }
  return out;
}

}  // namespace certkit
}  // namespace cco
