#pragma once

// Reference solvers: method of steps for the DDE, an L-stable SDIRK scheme
// for the chain ODE (explicit Dormand-Prince behind a flag), and the
// steady-state / Poincare post-processing used to check ROM predictions.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddessm/chain.hpp"
#include "ddessm/delay_model.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

enum class TrajectorySource { dde, chain, rom };
const char* to_string(TrajectorySource s);

/// Sampled solution with cubic Hermite dense output between nodes.
/// `states` hold the recorded coordinates only (see `coordinates`).
struct Trajectory {
    TrajectorySource source = TrajectorySource::dde;
    std::vector<int> coordinates;  // full-state index of each recorded component
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<Vec> derivatives;

    bool empty() const { return times.empty(); }
    double t_begin() const { return times.front(); }
    double t_end() const { return times.back(); }
    /// Position of full-state coordinate `index` among the recorded ones; -1 if absent.
    int column(int index) const;

    Vec at(double t) const;
    double at(double t, int col) const;
    double derivative_at(double t, int col) const;
};

struct DdeOptions {
    double blowup = 1e8;
    std::vector<int> record;  // empty: every component
    double record_from = -1e300;
};

/// Classical RK4 with fixed step dt = tau / m (m >= 20 integer). Delayed values
/// come from the history for t < tau and from the trajectory's Hermite dense
/// output afterwards.
Trajectory integrate_dde(const DelaySystem& sys, const InitialHistory& hist, double t_end, double dt,
                         const DdeOptions& opts = {});

enum class ChainMethod { sdirk4, dopri5 };

struct ChainOptions {
    ChainMethod method = ChainMethod::sdirk4;
    double h0 = 1e-3;
    double h_min = 1e-12;
    double h_max = 0.5;
    int max_steps = 5000000;
    double blowup = 1e8;
    std::vector<int> record;  // empty: every coordinate
    double record_from = -1e300;
};

struct ChainStats {
    long accepted = 0;
    long rejected = 0;
    long newton_failures = 0;
    long factorizations = 0;
};

/// Adaptive integration of the chain ODE. tol is used as both rtol and atol.
Trajectory integrate_chain(const ChainSystem& cs, const Vec& z0, double t_end, double tol,
                           const ChainOptions& opts = {}, ChainStats* stats = nullptr);

// ---- post-processing ----

enum class ResponseKind { decay, periodic, quasi_periodic, inconclusive };
const char* to_string(ResponseKind k);

struct SteadyStateOptions {
    double transient_fraction = 0.6;
    double periodic_tol = 1e-4;   // relative agreement of matching peaks
    double decay_floor = 1e-10;   // absolute level regarded as rest
    int max_peak_lag = 4;         // peaks per period considered for periodic responses
};

struct SteadyState {
    ResponseKind kind = ResponseKind::inconclusive;
    double amplitude = 0.0;                // max peak (periodic)
    std::pair<double, double> band{0, 0};  // (min, max) of the peaks
    double period = 0.0;                   // response period, or carrier period
    double modulation_period = 0.0;        // envelope period (quasi-periodic)
    double decay_rate = 0.0;               // fitted log-envelope slope (decay)
    int n_peaks = 0;
    std::string note;
};

/// Local maxima (time, value) of one recorded coordinate on [t_from, t_end].
std::vector<std::pair<double, double>> find_peaks(const Trajectory& traj, int col, double t_from);

SteadyState steady_state(const Trajectory& traj, int index, const SteadyStateOptions& opts = {});

/// States at t_k = t0 + 2 pi k / Omega inside [t_from, t_end].
std::vector<Vec> poincare_section(const Trajectory& traj, double Omega, double t_from,
                                  double t0 = 0.0);

/// Symmetric Hausdorff distance between point sets.
double hausdorff_distance(const std::vector<Vec>& a, const std::vector<Vec>& b);
/// Largest pairwise distance of a point set.
double diameter(const std::vector<Vec>& pts);

}  // namespace ddessm
