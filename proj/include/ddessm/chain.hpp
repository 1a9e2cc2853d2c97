#pragma once

// Delay-free approximation of a DelaySystem. The delay line is sampled at
// tau_i = i tau / N and closed with a second-order Taylor step:
//
//   u0' = f(u0, uN) + eps g(Omega t)
//   ui' = wi
//   wi' = (2 N^2 / tau^2) (u_{i-1} - u_i) - (2 N / tau) wi,   i = 1..N
//
// State layout: z = (u0, u1, ..., uN, w1, ..., wN), each block of size n.

#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ddessm/delay_model.hpp"
#include "ddessm/types.hpp"

namespace ddessm {

/// Polynomial term over chain coordinates (indices into z).
struct ChainTerm {
    int row = 0;
    std::vector<std::pair<int, int>> factors;
    double coeff = 0.0;

    double evaluate(const Vec& z) const;
    template <typename Scalar, typename VecT>
    Scalar evaluate_generic(const VecT& z) const {
        Scalar v(coeff);
        for (const auto& [var, power] : factors)
            for (int p = 0; p < power; ++p) v *= z[var];
        return v;
    }
};

class ChainSystem {
public:
    int n() const { return n_; }
    int N() const { return N_; }
    int dim() const { return (2 * N_ + 1) * n_; }
    double tau() const { return source_->tau(); }

    const SpMat& A() const { return A_; }
    const std::vector<ChainTerm>& terms() const { return terms_; }
    const DelaySystem& source() const { return *source_; }

    /// Real-signal forcing amplitude g-hat, nonzero only in u0 rows.
    const CVec& forcing_template() const { return forcing_template_; }
    ForcingScaling forcing_scaling() const { return scaling_; }
    /// Complex amplitude at +Omega with the scaling tag resolved.
    CVec forcing_positive(double Omega) const;
    double epsilon() const { return source_->epsilon(); }
    double Omega() const { return source_->Omega(); }
    bool forced() const { return source_->forced(); }

    int u_index(int link, int component) const { return link * n_ + component; }
    int w_index(int link, int component) const {
        return (N_ + 1) * n_ + (link - 1) * n_ + component;
    }

    /// Chain with different forcing data, sharing everything else.
    ChainSystem with_forcing(double epsilon, double Omega) const;

private:
    friend ChainSystem build_chain(const DelaySystem& sys, int N);
    int n_ = 0;
    int N_ = 0;
    SpMat A_;
    std::vector<ChainTerm> terms_;
    CVec forcing_template_;
    ForcingScaling scaling_ = ForcingScaling::constant;
    std::shared_ptr<const DelaySystem> source_;
};

ChainSystem build_chain(const DelaySystem& sys, int N);

/// F(z): nonlinear part only.
Vec eval_nonlinear(const ChainSystem& cs, const Vec& z);

/// Az + F(z) + eps Re(F-hat e^{i Omega t}).
Vec eval_rhs(const ChainSystem& cs, const Vec& z, double t);

/// A + DF(z), exact.
SpMat eval_jacobian(const ChainSystem& cs, const Vec& z);

/// Coordinate-format dump of A (and the forcing template when present).
void write_matrix_market(std::ostream& os, const SpMat& M);
void export_chain(const ChainSystem& cs, const std::string& matrix_path,
                  const std::string& forcing_path);

}  // namespace ddessm
