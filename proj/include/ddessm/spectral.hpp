#pragma once

// Eigen-analysis of the chain system: spectrum, master mode with its
// adjoint vector, Hopf loci over a parameter, and transcendental
// characteristic roots of the linearized DDE as an independent oracle.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ddessm/chain.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

struct Spectrum {
    std::vector<cplx> eigenvalues;  // descending real part, ties by descending |Im|
    CMat right_vectors;             // columns for the leading eigenvalues
    int N_used = 0;
};

struct MasterMode {
    cplx lambda;  // Im(lambda) > 0
    CVec v;       // unit norm, largest entry real positive
    CVec u;       // left eigenvector, u^H v = 1
    int index = 0;
    std::vector<std::string> warnings;
};

/// Sort order used for every eigenvalue list in the library.
bool spectral_order(const cplx& a, const cplx& b);

/// All eigenvalues of A (dense), sorted.
std::vector<cplx> chain_eigenvalues(const ChainSystem& cs);

/// Eigenvalue with the largest real part.
cplx leading_eigenvalue(const ChainSystem& cs);

/// Full sorted spectrum with right eigenvectors for the `k` leading eigenvalues.
Spectrum compute_spectrum(const ChainSystem& cs, std::optional<int> k = 10);

/// Right eigenvector of `M` for eigenvalue `lambda` by shifted inverse iteration.
CVec inverse_iteration(const SpMat& M, cplx lambda);

MasterMode select_master(const ChainSystem& cs, const Spectrum& spec);

/// Same master mode with v scaled by `c` (and u by 1/conj(c)).
MasterMode rescale_master(const MasterMode& m, cplx c);

/// max ||A v - lambda v|| / (||A|| ||v||) over the stored eigenpairs.
double eigen_residual(const ChainSystem& cs, const Spectrum& spec);

// ---- transcendental oracle ----

struct ComplexBox {
    double re_min = -10.0;
    double re_max = 2.0;
    double im_min = 0.0;
    double im_max = 20.0;
};

struct CharacteristicRoot {
    cplx lambda;
    double residual = 0.0;
    bool converged = false;
};

/// det(lambda I - A_now - A_delayed e^{-lambda tau}).
cplx characteristic_function(const DelaySystem& sys, cplx lambda);

/// Newton on the characteristic function from `guess`.
CharacteristicRoot refine_characteristic_root(const DelaySystem& sys, cplx guess);

/// Number of characteristic roots inside `box` (argument principle).
int count_characteristic_roots(const DelaySystem& sys, const ComplexBox& box);

/// Roots in `box`, sorted by descending real part, at most `n_roots`.
std::vector<CharacteristicRoot> exact_characteristic_roots(const DelaySystem& sys, int n_roots,
                                                           const ComplexBox& box = {});

// ---- parameter studies ----

struct LocusPoint {
    double param = 0.0;
    cplx lambda;
};

struct HopfLocus {
    double critical = 0.0;
    double lo = 0.0;  // bracket with Re(lambda(lo)) < 0 < Re(lambda(hi)) or reversed
    double hi = 0.0;
    std::vector<LocusPoint> samples;  // evaluation order
};

using SystemFamily = std::function<DelaySystem(double)>;

HopfLocus hopf_locus(const SystemFamily& family, double param_lo, double param_hi, int N,
                     double tol = 1e-4);

/// Leading eigenvalue on a uniform parameter grid.
std::vector<LocusPoint> leading_eigenvalue_sweep(const SystemFamily& family, double param_lo,
                                                 double param_hi, int n_points, int N);

struct ConvergenceRow {
    int N = 0;
    cplx lambda;
    double abs_error = 0.0;
};

struct ConvergenceStudy {
    cplx exact;
    std::vector<ConvergenceRow> rows;
    double fitted_order = 0.0;  // slope of -log|err| vs log N
};

ConvergenceStudy convergence_study(const DelaySystem& sys, const std::vector<int>& N_list);

}  // namespace ddessm
