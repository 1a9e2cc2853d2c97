#include <cmath>
#include <map>

#include <Eigen/SparseLU>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include "ddessm/error.hpp"
#include "ddessm/ssm.hpp"

namespace ddessm {

namespace {

using Q = boost::multiprecision::cpp_bin_float_quad;

struct QC {
    Q re = 0;
    Q im = 0;
    QC() = default;
    QC(Q r, Q i) : re(std::move(r)), im(std::move(i)) {}
    explicit QC(cplx c) : re(c.real()), im(c.imag()) {}
    cplx to_double() const { return {static_cast<double>(re), static_cast<double>(im)}; }
};

QC operator+(const QC& a, const QC& b) { return {a.re + b.re, a.im + b.im}; }
QC operator-(const QC& a, const QC& b) { return {a.re - b.re, a.im - b.im}; }
QC operator*(const QC& a, const QC& b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
QC operator*(const Q& s, const QC& a) { return {s * a.re, s * a.im}; }
QC& operator+=(QC& a, const QC& b) {
    a.re += b.re;
    a.im += b.im;
    return a;
}
QC conj(const QC& a) { return {a.re, -a.im}; }
bool is_zero(const QC& a) { return a.re == 0 && a.im == 0; }

using QVec = std::vector<QC>;

QVec to_q(const CVec& v) {
    QVec out(static_cast<size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<size_t>(i)] = QC(v[i]);
    return out;
}

// (A - sigma) x
QVec apply_shifted(const SpMat& A, const QC& sigma, const QVec& x) {
    QVec y(x.size());
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            y[static_cast<size_t>(it.row())] += Q(it.value()) * x[static_cast<size_t>(it.col())];
    for (size_t i = 0; i < x.size(); ++i) y[i] = y[i] - sigma * x[i];
    return y;
}

QC hdot(const CVec& u, const QVec& x) {
    QC s;
    for (size_t i = 0; i < x.size(); ++i) s += conj(QC(u[static_cast<Eigen::Index>(i)])) * x[i];
    return s;
}

CSpMat shifted_matrix(const SpMat& A, cplx sigma, const CVec* v, const CVec* u) {
    const auto D = A.rows();
    const auto size = v ? D + 1 : D;
    std::vector<Eigen::Triplet<cplx>> trip;
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < D; ++i) trip.emplace_back(i, i, -sigma);
    if (v)
        for (int i = 0; i < D; ++i) {
            trip.emplace_back(i, static_cast<int>(D), -(*v)[i]);
            trip.emplace_back(static_cast<int>(D), i, std::conj((*u)[i]));
        }
    CSpMat M(size, size);
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    return M;
}

struct QPoly {
    int deg;
    std::vector<QC> c;
    explicit QPoly(int d) : deg(d), c(static_cast<size_t>(monomial_index(0, d) + 1)) {}
    QC& at(int k, int l) { return c[monomial_index(k, l)]; }
    const QC& at(int k, int l) const { return c[monomial_index(k, l)]; }
};

QPoly qmultiply(const QPoly& a, const QPoly& b, int deg) {
    QPoly r(deg);
    for (int ma = 0; ma <= deg; ++ma)
        for (int ka = 0; ka <= ma; ++ka) {
            const QC& ca = a.at(ka, ma - ka);
            if (is_zero(ca)) continue;
            for (int mb = 0; mb <= deg - ma; ++mb)
                for (int kb = 0; kb <= mb; ++kb) {
                    const QC& cb = b.at(kb, mb - kb);
                    if (is_zero(cb)) continue;
                    r.at(ka + kb, ma - ka + mb - kb) += ca * cb;
                }
        }
    return r;
}

struct QuadExpansion {
    int order = 0;
    QC lambda;
    std::vector<QVec> W;
    std::vector<QC> gamma;
};

QuadExpansion refine(const SsmExpansion& ssm, const ChainSystem& cs) {
    const int D = ssm.dim();
    const SpMat& A = cs.A();
    const CVec& v = ssm.master.v;
    const CVec& u = ssm.master.u;
    constexpr int sweeps = 4;

    QuadExpansion q;
    q.order = ssm.order;
    q.W.assign(ssm.W.size(), QVec(static_cast<size_t>(D)));
    q.gamma.assign(ssm.gamma.size(), QC());

    // eigenpair: (A - lambda) v = 0 with u^H v fixed
    {
        Eigen::SparseLU<CSpMat> lu;
        lu.compute(shifted_matrix(A, ssm.master.lambda, &v, &u));
        if (lu.info() != Eigen::Success) throw NumericalError("refinement: singular bordered matrix");
        QVec x = to_q(v);
        QC lam(ssm.master.lambda);
        for (int s = 0; s < sweeps; ++s) {
            const QVec r = apply_shifted(A, lam, x);
            CVec b(D + 1);
            for (int i = 0; i < D; ++i) b[i] = -r[static_cast<size_t>(i)].to_double();
            b[D] = 0.0;
            const CVec d = lu.solve(b);
            for (int i = 0; i < D; ++i) x[static_cast<size_t>(i)] += QC(d[i]);
            lam += QC(d[D]);
        }
        q.lambda = lam;
        q.W[monomial_index(1, 0)] = x;
        QVec xc(x.size());
        for (size_t i = 0; i < x.size(); ++i) xc[i] = conj(x[i]);
        q.W[monomial_index(0, 1)] = xc;
    }

    std::map<int, int> used;  // chain coordinate -> referenced
    for (const auto& t : cs.terms())
        for (const auto& [var, power] : t.factors) used[var] = 1;

    for (int m = 2; m <= ssm.order; ++m) {
        std::map<int, QPoly> polys;
        for (const auto& [var, flag] : used) {
            QPoly P(m);
            for (int d = 1; d < m; ++d)
                for (int k = 0; k <= d; ++k)
                    P.at(k, d - k) = q.W[monomial_index(k, d - k)][static_cast<size_t>(var)];
            polys.emplace(var, std::move(P));
        }
        std::vector<QVec> F(static_cast<size_t>(m + 1), QVec(static_cast<size_t>(D)));
        for (const auto& t : cs.terms()) {
            QPoly prod(m);
            prod.at(0, 0) = QC(Q(t.coeff), Q(0));
            for (const auto& [var, power] : t.factors)
                for (int p = 0; p < power; ++p) prod = qmultiply(prod, polys.at(var), m);
            for (int k = 0; k <= m; ++k)
                F[static_cast<size_t>(k)][static_cast<size_t>(t.row)] += prod.at(k, m - k);
        }

        for (int l = 0; 2 * l <= m; ++l) {
            const int k = m - l;
            const bool inner = (k == l + 1);
            const QC sigma = Q(k) * q.lambda + Q(l) * conj(q.lambda);
            QVec rhs(static_cast<size_t>(D));
            for (int i = 0; i < D; ++i)
                rhs[static_cast<size_t>(i)] = Q(-1) * F[static_cast<size_t>(k)][static_cast<size_t>(i)];
            for (int j = 1; j <= l; ++j) {
                if (inner && j == l) continue;
                const QC& g = q.gamma[static_cast<size_t>(j - 1)];
                const QC c = Q(k - j) * g + Q(l - j) * conj(g);
                const QVec& Wj = q.W[monomial_index(k - j, l - j)];
                for (int i = 0; i < D; ++i) rhs[static_cast<size_t>(i)] += c * Wj[static_cast<size_t>(i)];
            }

            QVec x = to_q(ssm.coeff(k, l));
            QC g = inner ? QC(ssm.gamma[static_cast<size_t>(l - 1)]) : QC();
            Eigen::SparseLU<CSpMat> lu;
            lu.compute(shifted_matrix(A, sigma.to_double(), inner ? &v : nullptr, inner ? &u : nullptr));
            if (lu.info() != Eigen::Success) throw NumericalError("refinement: singular homological matrix");
            const QVec& vq = q.W[monomial_index(1, 0)];
            for (int s = 0; s < sweeps; ++s) {
                const QVec Ax = apply_shifted(A, sigma, x);
                CVec b(inner ? D + 1 : D);
                for (int i = 0; i < D; ++i) {
                    QC r = rhs[static_cast<size_t>(i)] - Ax[static_cast<size_t>(i)];
                    if (inner) r += g * vq[static_cast<size_t>(i)];
                    b[i] = r.to_double();
                }
                if (inner) b[D] = (Q(-1) * hdot(u, x)).to_double();
                const CVec d = lu.solve(b);
                for (int i = 0; i < D; ++i) x[static_cast<size_t>(i)] += QC(d[i]);
                if (inner) g += QC(d[D]);
            }
            if (inner) q.gamma[static_cast<size_t>(l - 1)] = g;
            if (k == l)
                for (auto& e : x) e.im = 0;
            QVec xc(x.size());
            for (size_t i = 0; i < x.size(); ++i) xc[i] = conj(x[i]);
            q.W[monomial_index(l, k)] = std::move(xc);
            q.W[monomial_index(k, l)] = std::move(x);
        }
    }
    return q;
}

double quad_residual(const QuadExpansion& q, const ChainSystem& cs, cplx p_d) {
    const auto D = static_cast<size_t>(cs.dim());
    const QC p(p_d);
    const QC pc = conj(p);
    const int O = q.order;
    std::vector<QC> pk(static_cast<size_t>(O + 1)), pck(static_cast<size_t>(O + 1));
    pk[0] = QC(Q(1), Q(0));
    pck[0] = pk[0];
    for (int i = 1; i <= O; ++i) {
        pk[static_cast<size_t>(i)] = pk[static_cast<size_t>(i - 1)] * p;
        pck[static_cast<size_t>(i)] = pck[static_cast<size_t>(i - 1)] * pc;
    }
    QVec Wp(D), Wd(D), Wdc(D);
    for (int m = 1; m <= O; ++m)
        for (int k = 0; k <= m; ++k) {
            const int l = m - k;
            const QVec& c = q.W[monomial_index(k, l)];
            const QC mon = pk[static_cast<size_t>(k)] * pck[static_cast<size_t>(l)];
            const QC dk = k > 0 ? Q(k) * (pk[static_cast<size_t>(k - 1)] * pck[static_cast<size_t>(l)]) : QC();
            const QC dl = l > 0 ? Q(l) * (pk[static_cast<size_t>(k)] * pck[static_cast<size_t>(l - 1)]) : QC();
            for (size_t i = 0; i < D; ++i) {
                Wp[i] += c[i] * mon;
                if (k > 0) Wd[i] += c[i] * dk;
                if (l > 0) Wdc[i] += c[i] * dl;
            }
        }
    QC R = q.lambda * p;
    for (size_t j = 0; j < q.gamma.size(); ++j) {
        const auto jj = j + 1;
        R += q.gamma[j] * (pk[jj + 1] * pck[jj]);
    }
    std::vector<Q> z(D);
    for (size_t i = 0; i < D; ++i) z[i] = Wp[i].re;
    std::vector<Q> lhs(D);
    const SpMat& A = cs.A();
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            lhs[static_cast<size_t>(it.row())] += Q(it.value()) * z[static_cast<size_t>(it.col())];
    for (const auto& t : cs.terms()) lhs[static_cast<size_t>(t.row)] += t.evaluate_generic<Q>(z);
    const QC Rc = conj(R);
    Q num = 0, den = 0;
    for (size_t i = 0; i < D; ++i) {
        const Q r = lhs[i] - (Wd[i] * R + Wdc[i] * Rc).re;
        num += r * r;
        den += z[i] * z[i];
    }
    if (den == 0) return 0.0;
    return std::sqrt(static_cast<double>(num / den));
}

}  // namespace

ResidualProfile invariance_residual_profile(const SsmExpansion& ssm, const ChainSystem& cs,
                                            const std::vector<double>& radii, double theta,
                                            ResidualPrecision precision) {
    if (cs.dim() != ssm.dim()) throw ConfigError("SSM dimension does not match the chain");
    ResidualProfile prof;
    prof.radii = radii;
    std::optional<QuadExpansion> q;
    if (precision == ResidualPrecision::extended) q = refine(ssm, cs);
    for (double r : radii) {
        const cplx p = std::polar(r, theta);
        prof.residuals.push_back(q ? quad_residual(*q, cs, p) : invariance_residual(ssm, cs, p));
    }
    // least-squares slope in log-log
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0) || !(prof.residuals[i] > 0.0)) continue;
        const double x = std::log(radii[i]);
        const double y = std::log(prof.residuals[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n >= 2) prof.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return prof;
}

}  // namespace ddessm
