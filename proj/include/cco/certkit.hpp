#ifndef CCO_CERTKIT_HPP
#define CCO_CERTKIT_HPP

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cco/conicore.hpp"
#include "cco/momentkit.hpp"
#include "cco/polycore.hpp"

namespace cco {
namespace certkit {

using polycore::MonomialBasis;
using polycore::Poly;

/// Handles into a conic program for a coefficient-matching membership
/// encoding: one PSD multiplier block per generator (the first one is the
/// plain SOS block) and one equality row per monomial of the matched space.
struct QmodEncoding {
  int r = 0;
  int k = 0;
  int target_degree = 0;          // degree cap d of the matched polynomial
  std::vector<int> psd_blocks;    // Q0, then one block per generator g_i
  std::vector<int> psd_sides;
  std::vector<int> matchrows;     // indexed by monomial_basis(r, 2k)
  int x_block = -1;               // set when the encoder owns the x block
};

/// Membership of (A x + b)' [xi]_d in the order-k truncated quadratic module
/// of the tuple g, intersected with polynomials of degree <= d. The target's
/// linear part enters through the scalar variables x_vars (one per column of
/// A; may be empty for a constant target). Row alpha reads
///
///   sum_i <B_alpha^i, Q_i>  -  (A x)_alpha  =  b_alpha      (|alpha| <= d)
///   sum_i <B_alpha^i, Q_i>                  =  0            (|alpha| >  d)
///
/// so the rows pin every coefficient of the certificate above degree d to
/// zero. Rows are labeled `row_label` in basis order.
QmodEncoding encode_qmod_membership_on(conicore::ConicProgram& prog, int r,
                                       const Eigen::MatrixXd& A,
                                       const Eigen::VectorXd& b,
                                       const std::vector<int>& x_vars,
                                       const std::vector<Poly>& g, int k,
                                       const std::string& row_label);

/// Same, creating a fresh free block for x (the common single-generator
/// entry point).
QmodEncoding encode_qmod_membership(conicore::ConicProgram& prog,
                                    const Eigen::MatrixXd& A,
                                    const Eigen::VectorXd& b, const Poly& g,
                                    int k,
                                    const std::string& row_label = "qmod");

/// Membership of a degree-2d1 polynomial in n variables in the plain SOS
/// cone: one PSD block of side C(n+d1, d1) and one row per alpha reading
/// <B_alpha, Q> = 0. The caller wires the target by adding its linear terms
/// (negated) and setting the row rhs to the constant part.
QmodEncoding encode_sos_in_x(conicore::ConicProgram& prog, int n, int d1,
                             const std::string& row_label = "sos");

/// Rows tying a PSD block to the localizing matrix of a vector of scalar
/// variables z indexed by monomial_basis(r, 2k):
///
///   sum_delta g_delta z_{alpha_i + alpha_j + delta} - S_ij = 0
///
/// Returns the row ids in row-wise upper-triangle order. With g = 1 this
/// defines the moment matrix.
std::vector<int> append_localizing_definition(conicore::ConicProgram& prog,
                                              int psd_block,
                                              const std::vector<int>& z_vars,
                                              const Poly& g, int k,
                                              const std::string& row_label);

/// Decomposition of the outer product of the degree-d1 monomial vector:
/// matrices C_alpha with entry rule (C_alpha)_{beta,gamma} = 1/m_alpha for
/// beta + gamma = alpha, where m_alpha counts the ordered pairs. Each
/// C_alpha is symmetric and has total weight one.
struct CAlphaFamily {
  int n = 0;
  int d1 = 0;
  std::shared_ptr<const MonomialBasis> alpha_basis;  // N^n_{2 d1}
  std::shared_ptr<const MonomialBasis> row_basis;    // N^n_{d1}
  std::vector<Eigen::MatrixXd> matrices;
  std::vector<int> pair_count;  // m_alpha

  const Eigen::MatrixXd& at(const polycore::Exponent& alpha) const {
    return matrices.at(alpha_basis->index_of(alpha));
  }
};

CAlphaFamily build_c_alpha(int n, int d1);

/// Reassembles sigma_0 + sum_i g_i sigma_i from the PSD block values of an
/// encoding, as a polynomial in the xi variables. Used by soundness checks.
Poly reassemble_certificate(const conicore::ConicProgram& prog,
                            const QmodEncoding& enc,
                            const std::vector<Poly>& g,
                            const Eigen::VectorXd& primal);

}  // namespace certkit
}  // namespace cco

#endif  // CCO_CERTKIT_HPP
