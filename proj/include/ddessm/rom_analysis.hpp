#pragma once

// Predictions read off the polar reduced dynamics
//
//   rho'         = a(rho) + eps Re(f e^{-i theta})
//   rho theta'   = rho (b(rho) - Omega) + eps Im(f e^{-i theta})
//
// (theta measured against the forcing phase Omega t): backbones, limit-cycle
// roots of a, forced response curves with SN/HB flags, isolas, and tori.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddessm/ssm.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

/// Observable of the lifted orbit: one coordinate of the chain state,
/// by default x1 (first component of the u0 block).
struct Observable {
    int index = 0;
    int n_theta = 64;  // coarse samples before the local maximization
};

/// Fourier form of the observable on the circle |p| = rho:
/// obs(phi) = sum_h C_h e^{i h phi}, h = -order..order.
class ObservableHarmonics {
public:
    /// Orbit p = rho e^{i(theta + phi)}; `forced` adds forced e^{i phi} + c.c.
    ObservableHarmonics(const SsmExpansion& ssm, double rho, int index, double theta = 0.0,
                        cplx forced = 0.0);
    double eval(double phi) const;
    /// max over phi, coarse grid then Brent refinement.
    double max(int n_theta = 64) const;
    double min(int n_theta = 64) const;

private:
    int order_;
    std::vector<cplx> c_;  // index h + order_
};

/// Physical amplitude of the periodic orbit p = rho e^{i phi}: max_phi obs.
double orbit_amplitude(const SsmExpansion& ssm, double rho, const Observable& obs = {});

// ---- backbone ----

struct BackbonePoint {
    double rho = 0.0;
    double omega = 0.0;
    double phys_amp = 0.0;  // NaN when no expansion supplied
};

std::vector<BackbonePoint> backbone(const Rom& rom, double rho_max, int n_points,
                                    const SsmExpansion* ssm = nullptr, const Observable& obs = {});

// ---- limit-cycle roots ----

enum class RootClass { converged, spurious };

struct RootTrack {
    double rho = 0.0;                  // top-order root
    std::map<int, double> by_order;    // matched roots at lower orders
    RootClass cls = RootClass::spurious;
    std::string reason;
};

struct LimitCycleRoots {
    std::map<int, std::vector<double>> roots_by_order;  // positive real roots, ascending
    std::vector<RootTrack> tracks;                     // one per top-order root
    int top_order = 0;

    std::optional<double> converged_root() const;  // smallest converged root
};

struct RootOptions {
    double agreement = 0.01;       // relative, top three orders vs the top one
    double boundary_margin = 0.05; // relative to the convergence-domain estimate
};

/// Nontrivial positive roots of a(rho) per order, via companion eigenvalues in x = rho^2.
std::vector<double> positive_roots(const std::vector<double>& a_odd);

LimitCycleRoots limit_cycle_roots(const std::map<int, std::vector<double>>& a_by_order,
                                  std::optional<double> conv_radius = std::nullopt,
                                  const RootOptions& opts = {});

/// a-polynomials of a ROM truncated to every odd order from 3 to its own.
std::map<int, std::vector<double>> a_polynomials_by_order(const Rom& rom);

struct LimitCyclePrediction {
    double rho = 0.0;
    double frequency = 0.0;  // b(rho)
    double period = 0.0;
    double phys_amp = 0.0;
    std::vector<double> theta;
    std::vector<Vec> states;  // lifted chain state at each theta
};

LimitCyclePrediction limit_cycle_predict(const Rom& rom, const SsmExpansion& ssm, double rho_star,
                                         int n_samples = 200, const Observable& obs = {});

// ---- forced response ----

enum class BifFlag { none, SN, HB };
const char* to_string(BifFlag f);

struct FrcPoint {
    double Omega = 0.0;
    double rho = 0.0;
    double theta = 0.0;
    bool stable = false;
    BifFlag bif_flag = BifFlag::none;
    double phys_amp = 0.0;
    double residual = 0.0;  // fixed-point residual of the reduced equations
    double trace = 0.0;
    double det = 0.0;
    int branch = -1;
};

struct FrcBranch {
    std::vector<FrcPoint> points;  // ordered along the curve
    bool closed = false;
    bool isola = false;
};

struct FrcOptions {
    int n_grid = 400;         // uniform Omega columns
    double rho_max = 0.0;     // required
    int n_rho = 2000;
    int max_refine = 10;      // bisection depth for ambiguous column pairs
    int threads = 1;
};

struct FrcResult {
    double epsilon = 0.0;
    double Omega_lo = 0.0;
    double Omega_hi = 0.0;
    std::vector<FrcPoint> points;  // every point, branch order
    std::vector<FrcBranch> branches;
    std::vector<std::string> warnings;

    std::vector<FrcPoint> flagged(BifFlag f) const;
    int isola_count() const;
};

/// Fixed points of the forced ROM at one Omega (ascending rho).
std::vector<FrcPoint> frc_column(const Rom& rom, double eps, double Omega, double rho_max, int n_rho);

/// Residual, trace, det and stability of a point from (Omega, rho).
FrcPoint make_frc_point(const Rom& rom, double eps, double Omega, double rho);

FrcResult frc_periodic(const Rom& rom, double eps, double Omega_lo, double Omega_hi,
                       const FrcOptions& opts);

/// Links column-structured grid points (equal Omega = one column) into branches.
/// Points must carry bif_flag none. Ambiguous joins are left open and reported.
std::vector<FrcBranch> branch_connect(const std::vector<FrcPoint>& points,
                                      std::vector<std::string>* warnings = nullptr);

/// Fills phys_amp for every point of the result (non-autonomous lift at each Omega).
void frc_physical_amplitudes(FrcResult& frc, const SsmExpansion& ssm, const ChainSystem& cs,
                             const Observable& obs = {}, int threads = 1);

// ---- ROM limit cycles / tori ----

struct RomCycle {
    double Omega = 0.0;
    double epsilon = 0.0;
    bool found = false;
    std::string status;  // "cycle", "stable fixed point", "no cycle"
    double period = 0.0;
    bool stable = false;
    double multiplier = 0.0;  // return-map derivative
    std::vector<double> t;
    std::vector<double> rho;
    std::vector<double> theta;
    double closure = 0.0;  // |q(T) - q(0)|
};

struct TorusSample {
    double Omega = 0.0;
    double phase1 = 0.0;  // cycle phase in [0, 1)
    double phase2 = 0.0;  // forcing phase in [0, 2 pi)
    double observable = 0.0;
};

struct CycleOptions {
    double t_max = 20000.0;
    double return_tol = 1e-8;
    int n_samples = 400;
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
};

/// Attracting cycle of the 2D forced reduced flow at one Omega.
RomCycle rom_cycle(const Rom& rom, double eps, double Omega, const CycleOptions& opts = {});

struct RomCycleResult {
    std::vector<RomCycle> cycles;
    std::vector<TorusSample> torus;
};

RomCycleResult rom_limit_cycles(const Rom& rom, double eps, const std::vector<double>& Omegas,
                                const SsmExpansion* ssm = nullptr, const ChainSystem* cs = nullptr,
                                const Observable& obs = {}, int n_phase2 = 64,
                                const CycleOptions& opts = {});

/// Lifted torus: (x1, x2) states of the Poincare section at forcing phase phi0.
std::vector<Vec> torus_section(const RomCycle& cyc, const SsmExpansion& ssm_forced, double phi0,
                               int n_block = 2);

/// Band [min, max] of per-forcing-period peaks of the observable over the torus.
std::pair<double, double> torus_amplitude_band(const RomCycle& cyc, const SsmExpansion& ssm_forced,
                                               const Observable& obs = {});

// ---- reduced trajectories ----

/// p(t) of the reduced flow p' = p (a/rho + i b) + eps f_eff e^{i Omega t} at the given times
/// (increasing, starting at or after 0). The forcing data come from `rom`.
std::vector<cplx> integrate_rom(const Rom& rom, cplx p0, const std::vector<double>& times,
                                double tol = 1e-11);

// ---- simulation seeds ----

/// DDE history on [-tau, 0] following the predicted orbit p(t) = rho e^{i(theta + Omega t)}
/// lifted through `ssm` (forced lift when the correction is present).
InitialHistory orbit_history(const SsmExpansion& ssm, const ChainSystem& cs, double rho, double theta,
                             double Omega);

/// Chain state on the predicted orbit at t = 0.
Vec orbit_chain_state(const SsmExpansion& ssm, double rho, double theta);

// ---- convergence diagnostics ----

struct ConvergenceEstimate {
    int order = 0;
    double rho_max = 0.0;
};

/// Per order O: largest rho where the O and O-2 backbones agree within tol (relative, in omega).
std::vector<ConvergenceEstimate> convergence_domain(
    const std::map<int, std::vector<BackbonePoint>>& backbones_by_order, double tol = 1e-3);

struct FrcConvergence {
    bool converged = true;
    double max_rel_diff = 0.0;
    double worst_Omega = 0.0;
    double worst_rho = 0.0;
};

/// Compares the FRC of the top order with that of order - 2 column by column.
FrcConvergence frc_order_convergence(const Rom& rom, double eps, double Omega_lo, double Omega_hi,
                                     double rho_max, int n_grid = 200, double tol = 1e-2);

}  // namespace ddessm
