#include "ddessm/chain.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "ddessm/error.hpp"

namespace ddessm {

double ChainTerm::evaluate(const Vec& z) const { return evaluate_generic<double>(z); }

CVec ChainSystem::forcing_positive(double Omega) const {
    const double s = scaling_ == ForcingScaling::omega_squared ? Omega * Omega : 1.0;
    return forcing_template_ * (0.5 * s);
}

ChainSystem ChainSystem::with_forcing(double epsilon, double Omega) const {
    ChainSystem cs = *this;
    cs.source_ = std::make_shared<const DelaySystem>(source_->with_forcing(epsilon, Omega));
    return cs;
}

ChainSystem build_chain(const DelaySystem& sys, int N) {
    if (N < 1) throw ConfigError("chain grid count N must be >= 1");
    ChainSystem cs;
    cs.n_ = sys.n();
    cs.N_ = N;
    cs.source_ = std::make_shared<const DelaySystem>(sys);
    const int n = cs.n_;
    const int dim = cs.dim();
    const double tau = sys.tau();
    const double stiff = 2.0 * N * N / (tau * tau);
    const double damp = 2.0 * N / tau;

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(4 * N * n + 2 * n * n));
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (sys.A_now()(r, c) != 0.0) trip.emplace_back(r, cs.u_index(0, c), sys.A_now()(r, c));
            if (sys.A_delayed()(r, c) != 0.0)
                trip.emplace_back(r, cs.u_index(N, c), sys.A_delayed()(r, c));
        }
    for (int i = 1; i <= N; ++i)
        for (int c = 0; c < n; ++c) {
            trip.emplace_back(cs.u_index(i, c), cs.w_index(i, c), 1.0);
            trip.emplace_back(cs.w_index(i, c), cs.u_index(i - 1, c), stiff);
            trip.emplace_back(cs.w_index(i, c), cs.u_index(i, c), -stiff);
            trip.emplace_back(cs.w_index(i, c), cs.w_index(i, c), -damp);
        }
    cs.A_.resize(dim, dim);
    cs.A_.setFromTriplets(trip.begin(), trip.end());
    cs.A_.makeCompressed();

    for (const auto& t : sys.terms()) {
        ChainTerm ct{t.row, {}, t.coeff};
        for (const auto& [var, power] : t.factors) {
            const int zi = var < n ? cs.u_index(0, var) : cs.u_index(N, var - n);
            ct.factors.emplace_back(zi, power);
        }
        cs.terms_.push_back(std::move(ct));
    }

    cs.forcing_template_ = CVec::Zero(dim);
    if (sys.forcing()) {
        cs.forcing_template_.head(n) = sys.forcing()->amplitude;
        cs.scaling_ = sys.forcing()->scaling;
    }
    return cs;
}

Vec eval_nonlinear(const ChainSystem& cs, const Vec& z) {
    Vec F = Vec::Zero(cs.dim());
    for (const auto& t : cs.terms()) F[t.row] += t.evaluate(z);
    return F;
}

Vec eval_rhs(const ChainSystem& cs, const Vec& z, double t) {
    if (z.size() != cs.dim()) throw std::invalid_argument("eval_rhs: state dimension mismatch");
    Vec out = cs.A() * z;
    for (const auto& term : cs.terms()) out[term.row] += term.evaluate(z);
    if (cs.forced()) {
        const cplx phase = std::polar(1.0, cs.Omega() * t);
        const double s = cs.epsilon() * (cs.forcing_scaling() == ForcingScaling::omega_squared
                                             ? cs.Omega() * cs.Omega()
                                             : 1.0);
        for (int r = 0; r < cs.n(); ++r) out[r] += s * (cs.forcing_template()[r] * phase).real();
    }
    return out;
}

SpMat eval_jacobian(const ChainSystem& cs, const Vec& z) {
    if (z.size() != cs.dim()) throw std::invalid_argument("eval_jacobian: state dimension mismatch");
    std::vector<Eigen::Triplet<double>> trip;
    for (const auto& t : cs.terms()) {
        for (size_t f = 0; f < t.factors.size(); ++f) {
            const auto [var, power] = t.factors[f];
            double d = t.coeff * power;
            for (int p = 0; p < power - 1; ++p) d *= z[var];
            for (size_t g = 0; g < t.factors.size(); ++g) {
                if (g == f) continue;
                for (int p = 0; p < t.factors[g].second; ++p) d *= z[t.factors[g].first];
            }
            trip.emplace_back(t.row, var, d);
        }
    }
    SpMat DF(cs.dim(), cs.dim());
    DF.setFromTriplets(trip.begin(), trip.end());
    SpMat J = cs.A() + DF;
    J.makeCompressed();
    return J;
}

void write_matrix_market(std::ostream& os, const SpMat& M) {
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << M.rows() << ' ' << M.cols() << ' ' << M.nonZeros() << '\n';
    os << std::setprecision(17);
    for (int k = 0; k < M.outerSize(); ++k)
        for (SpMat::InnerIterator it(M, k); it; ++it)
            os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
}

void export_chain(const ChainSystem& cs, const std::string& matrix_path,
                  const std::string& forcing_path) {
    std::ofstream am(matrix_path);
    if (!am) throw ConfigError("cannot open " + matrix_path);
    write_matrix_market(am, cs.A());
    std::ofstream fm(forcing_path);
    if (!fm) throw ConfigError("cannot open " + forcing_path);
    fm << "%%MatrixMarket matrix array complex general\n" << cs.dim() << " 1\n";
    fm << std::setprecision(17);
    for (int i = 0; i < cs.dim(); ++i)
        fm << cs.forcing_template()[i].real() << ' ' << cs.forcing_template()[i].imag() << '\n';
}

}  // namespace ddessm
