#pragma once

// Two-dimensional spectral submanifold of the chain system, computed with
// the parameterization method in normal-form style.
//
// The manifold z = W(p, conj p) = sum W_kl p^k conj(p)^l is found order by
// order from the invariance equation
//
//   A W(p) + F(W(p)) = DW(p) R(p),
//   R(p) = lambda p + sum_j gamma_j p^{j+1} conj(p)^j,
//
// where the monomials k = l + 1 are kept in the reduced dynamics (inner
// resonances) and every other monomial is solved for in W. In polar
// coordinates p = rho e^{i theta} this gives rho' = a(rho), theta' = b(rho).
//
// Forcing enters at leading order: z += eps (x0 e^{i Omega t} + c.c.) and
// p' = R(p) + eps f e^{i Omega t}, f = u^H F+ with F+ the +Omega amplitude.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddessm/chain.hpp"
#include "ddessm/spectral.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

inline int monomial_index(int k, int l) {
    const int m = k + l;
    return m * (m + 1) / 2 + l;
}

struct SsmOptions {
    double resonance_tol = 1e-6;
    /// Full spectrum for the resonance guard; computed when empty.
    std::vector<cplx> spectrum;
};

struct SsmExpansion {
    int order = 0;
    MasterMode master;
    std::vector<CVec> W;      // indexed by monomial_index(k, l), k + l <= order
    std::vector<cplx> gamma;  // gamma_1 .. gamma_{(order-1)/2}

    // leading-order forcing correction (filled by nonauto_correction)
    std::optional<CVec> x0_nonauto;
    std::optional<cplx> modal_force;  // at the resolved Omega
    double epsilon = 0.0;
    double Omega = 0.0;

    int dim() const { return static_cast<int>(W.front().size()); }
    const CVec& coeff(int k, int l) const { return W[monomial_index(k, l)]; }

    /// Lower-order expansion (gamma and W truncated).
    SsmExpansion truncated(int new_order) const;
};

/// Polar reduced dynamics. a(rho) = sum a_odd[j] rho^{2j+1}, b(rho) = sum b_even[j] rho^{2j}.
struct Rom {
    std::vector<double> a_odd;
    std::vector<double> b_even;
    cplx modal_force{0.0, 0.0};  // u^H F+ with unit forcing scale
    ForcingScaling forcing_scaling = ForcingScaling::constant;
    double epsilon = 0.0;
    double Omega = 0.0;

    int order() const { return 2 * static_cast<int>(a_odd.size()) - 1; }
    double a(double rho) const;
    double da(double rho) const;
    double b(double rho) const;
    double db(double rho) const;
    double d2a(double rho) const;
    double d2b(double rho) const;
    /// a(rho) / rho, smooth at the origin.
    double a_over_rho(double rho) const;
    /// Modal force at frequency Omega with the scaling tag applied.
    cplx effective_force(double Omega) const;
    Rom truncated(int order) const;
    Rom with_forcing(double epsilon, double Omega) const;

    static Rom from_polynomials(std::vector<double> a_odd, std::vector<double> b_even);
};

SsmExpansion compute_ssm(const ChainSystem& cs, const MasterMode& master, int order,
                         const SsmOptions& opts = {});

/// Fills x0_nonauto and modal_force for forcing at frequency Omega.
SsmExpansion nonauto_correction(const SsmExpansion& ssm, const ChainSystem& cs, double Omega);

/// Reduced dynamics; modal force taken from the chain's forcing template.
Rom make_rom(const SsmExpansion& ssm, const ChainSystem& cs);

/// Real state on the autonomous manifold.
Vec lift(const SsmExpansion& ssm, cplx p);

/// Real state including eps (x0 e^{i Omega t} + c.c.) when the correction is present.
Vec lift(const SsmExpansion& ssm, cplx p, double t);

/// Single coordinate of lift(ssm, p), cheaper for amplitude scans.
double lift_coordinate(const SsmExpansion& ssm, cplx p, int index);

/// ||A W(p) + F(W(p)) - DW(p) R(p)|| / ||W(p)||.
double invariance_residual(const SsmExpansion& ssm, const ChainSystem& cs, cplx p);

enum class ResidualPrecision {
    working,  // double; floors near 1e-16 * ||A||
    extended  // expansion refined and evaluated in quad precision
};

struct ResidualProfile {
    std::vector<double> radii;
    std::vector<double> residuals;
    double slope = 0.0;  // least-squares slope of log residual vs log r
};

/// Relative invariance residual at p = r e^{i theta} for each radius.
/// The extended mode refines W, gamma and the master eigenpair by iterative
/// refinement (quad residuals, double factorizations) before evaluating.
ResidualProfile invariance_residual_profile(const SsmExpansion& ssm, const ChainSystem& cs,
                                            const std::vector<double>& radii, double theta = 0.3,
                                            ResidualPrecision precision = ResidualPrecision::extended);

enum class ProjectionMethod {
    adjoint,      // p0 = u^H z0
    transpose,    // p0 = v^T z0 (literal linear projection)
    min_distance  // argmin ||z0 - W(p)||, started from the adjoint projection
};

/// z(0) from an initial history: u_i = x0(-i tau/N), w_i = x0'(-i tau/N).
Vec history_to_chain_state(const ChainSystem& cs, const InitialHistory& hist);

cplx project_initial(const SsmExpansion& ssm, const InitialHistory& hist, const ChainSystem& cs,
                     ProjectionMethod method = ProjectionMethod::adjoint);
cplx project_state(const SsmExpansion& ssm, const Vec& z0,
                   ProjectionMethod method = ProjectionMethod::adjoint);

nlohmann::json ssm_to_json(const SsmExpansion& ssm);
SsmExpansion ssm_from_json(const nlohmann::json& j);
void save_ssm(const SsmExpansion& ssm, const std::string& path);
SsmExpansion load_ssm(const std::string& path);

}  // namespace ddessm
