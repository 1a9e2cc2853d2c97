#include "ddessm/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/SparseLU>

#include "ddessm/error.hpp"

namespace ddessm {

namespace {

// Bivariate polynomial in (p, conj p), truncated at total degree `deg`.
struct BiPoly {
    int deg = 0;
    std::vector<cplx> c;

    explicit BiPoly(int d) : deg(d), c(static_cast<size_t>(monomial_index(0, d) + 1), 0.0) {}
    cplx& at(int k, int l) { return c[monomial_index(k, l)]; }
    cplx at(int k, int l) const { return c[monomial_index(k, l)]; }
};

BiPoly multiply(const BiPoly& a, const BiPoly& b, int deg) {
    BiPoly r(deg);
    for (int ma = 0; ma <= std::min(a.deg, deg); ++ma)
        for (int ka = 0; ka <= ma; ++ka) {
            const cplx ca = a.at(ka, ma - ka);
            if (ca == 0.0) continue;
            for (int mb = 0; mb <= std::min(b.deg, deg - ma); ++mb)
                for (int kb = 0; kb <= mb; ++kb) {
                    const cplx cb = b.at(kb, mb - kb);
                    if (cb == 0.0) continue;
                    r.at(ka + kb, ma - ka + mb - kb) += ca * cb;
                }
        }
    return r;
}

CSpMat complex_shifted(const SpMat& A, cplx sigma, const CVec* border_col, const CVec* border_row) {
    const auto D = A.rows();
    const bool bordered = border_col != nullptr;
    const auto size = bordered ? D + 1 : D;
    std::vector<Eigen::Triplet<cplx>> trip;
    trip.reserve(static_cast<size_t>(A.nonZeros() + D + (bordered ? 2 * D : 0)));
    for (int k = 0; k < A.outerSize(); ++k)
        for (SpMat::InnerIterator it(A, k); it; ++it)
            trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < D; ++i) trip.emplace_back(i, i, -sigma);
    if (bordered) {
        for (int i = 0; i < D; ++i) {
            if ((*border_col)[i] != 0.0) trip.emplace_back(i, static_cast<int>(D), -(*border_col)[i]);
            if ((*border_row)[i] != 0.0) trip.emplace_back(static_cast<int>(D), i, std::conj((*border_row)[i]));
        }
    }
    CSpMat M(size, size);
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    return M;
}

// Solves [[A - sigma I, -v], [u^H, 0]] [x; s] = [rhs; 0].
std::pair<CVec, cplx> bordered_solve(const SpMat& A, cplx sigma, const CVec& v, const CVec& u,
                                     const CVec& rhs) {
    const auto D = A.rows();
    Eigen::SparseLU<CSpMat> lu;
    lu.compute(complex_shifted(A, sigma, &v, &u));
    if (lu.info() != Eigen::Success) throw NumericalError("bordered homological system is singular");
    CVec b(D + 1);
    b.head(D) = rhs;
    b[D] = 0.0;
    CVec x = lu.solve(b);
    return {x.head(D), x[D]};
}

std::string monomial_name(int k, int l) {
    std::ostringstream os;
    os << "(" << k << "," << l << ")";
    return os.str();
}

// Substitution polynomials for every chain coordinate referenced by a monomial.
std::map<int, BiPoly> substitution_polys(const ChainSystem& cs, const std::vector<CVec>& W,
                                         int known_deg, int deg) {
    std::map<int, BiPoly> polys;
    for (const auto& t : cs.terms())
        for (const auto& [var, power] : t.factors) {
            if (polys.count(var)) continue;
            BiPoly P(deg);
            for (int m = 1; m <= known_deg; ++m)
                for (int k = 0; k <= m; ++k) P.at(k, m - k) = W[monomial_index(k, m - k)][var];
            polys.emplace(var, std::move(P));
        }
    return polys;
}

// Degree-`deg` part of F(W(p)), given W through degree deg - 1.
std::vector<CVec> compose_degree(const ChainSystem& cs, const std::vector<CVec>& W, int deg) {
    const int D = cs.dim();
    std::vector<CVec> out(static_cast<size_t>(deg + 1), CVec::Zero(D));
    const auto polys = substitution_polys(cs, W, deg - 1, deg);
    for (const auto& t : cs.terms()) {
        BiPoly prod(deg);
        prod.at(0, 0) = t.coeff;
        for (const auto& [var, power] : t.factors)
            for (int p = 0; p < power; ++p) prod = multiply(prod, polys.at(var), deg);
        for (int k = 0; k <= deg; ++k) out[static_cast<size_t>(k)][t.row] += prod.at(k, deg - k);
    }
    return out;
}

void check_order(int order) {
    if (order < 3 || order % 2 == 0)
        throw ConfigError("SSM expansion order must be odd and >= 3");
}

}  // namespace

SsmExpansion SsmExpansion::truncated(int new_order) const {
    check_order(new_order);
    if (new_order > order) throw ConfigError("cannot truncate an expansion to a higher order");
    SsmExpansion r = *this;
    r.order = new_order;
    r.W.resize(static_cast<size_t>(monomial_index(0, new_order) + 1));
    r.gamma.resize(static_cast<size_t>((new_order - 1) / 2));
    return r;
}

SsmExpansion compute_ssm(const ChainSystem& cs, const MasterMode& master, int order,
                         const SsmOptions& opts) {
    check_order(order);
    const int D = cs.dim();
    if (master.v.size() != D || master.u.size() != D)
        throw ConfigError("master mode dimension does not match the chain");
    const std::vector<cplx> spectrum =
        opts.spectrum.empty() ? chain_eigenvalues(cs) : opts.spectrum;

    SsmExpansion ssm;
    ssm.order = order;
    ssm.master = master;
    ssm.W.assign(static_cast<size_t>(monomial_index(0, order) + 1), CVec::Zero(D));
    ssm.gamma.assign(static_cast<size_t>((order - 1) / 2), 0.0);
    ssm.W[monomial_index(1, 0)] = master.v;
    ssm.W[monomial_index(0, 1)] = master.v.conjugate();

    const cplx lam = master.lambda;
    const SpMat& A = cs.A();

    for (int m = 2; m <= order; ++m) {
        const std::vector<CVec> F = cs.terms().empty()
                                        ? std::vector<CVec>(static_cast<size_t>(m + 1), CVec::Zero(D))
                                        : compose_degree(cs, ssm.W, m);
        for (int l = 0; 2 * l <= m; ++l) {
            const int k = m - l;  // k >= l
            const cplx sigma = static_cast<double>(k) * lam + static_cast<double>(l) * std::conj(lam);
            const bool inner = (k == l + 1);

            CVec rhs = -F[static_cast<size_t>(k)];
            for (int j = 1; j <= l; ++j) {
                if (inner && j == l) continue;  // the unknown gamma_l v term
                const cplx g = ssm.gamma[static_cast<size_t>(j - 1)];
                const cplx c = static_cast<double>(k - j) * g + static_cast<double>(l - j) * std::conj(g);
                if (c != 0.0) rhs += c * ssm.W[monomial_index(k - j, l - j)];
            }

            CVec Wkl;
            if (inner) {
                auto [x, s] = bordered_solve(A, sigma, master.v, master.u, rhs);
                Wkl = std::move(x);
                ssm.gamma[static_cast<size_t>(l - 1)] = s;
            } else {
                double dist = std::numeric_limits<double>::infinity();
                cplx nearest = 0.0;
                for (const auto& mu : spectrum)
                    if (std::abs(sigma - mu) < dist) {
                        dist = std::abs(sigma - mu);
                        nearest = mu;
                    }
                if (dist < opts.resonance_tol) {
                    std::ostringstream os;
                    os << "near outer resonance at monomial " << monomial_name(k, l) << ": "
                       << k << "*lambda + " << l << "*conj(lambda) = " << sigma
                       << " is within " << dist << " of eigenvalue " << nearest
                       << "; a higher-dimensional reduction is required";
                    throw ResonanceError(os.str(), k, l);
                }
                if (rhs.squaredNorm() == 0.0) {
                    Wkl = CVec::Zero(D);
                } else {
                    Eigen::SparseLU<CSpMat> lu;
                    lu.compute(complex_shifted(A, sigma, nullptr, nullptr));
                    if (lu.info() != Eigen::Success)
                        throw ResonanceError("singular homological matrix at monomial " +
                                                 monomial_name(k, l),
                                             k, l);
                    Wkl = lu.solve(rhs);
                }
            }
            if (k == l) Wkl = Wkl.real().cast<cplx>();
            ssm.W[monomial_index(l, k)] = Wkl.conjugate();
            ssm.W[monomial_index(k, l)] = std::move(Wkl);
        }
    }
    return ssm;
}

SsmExpansion nonauto_correction(const SsmExpansion& ssm, const ChainSystem& cs, double Omega) {
    if (!(Omega > 0.0)) throw ConfigError("forcing frequency Omega must be positive");
    if (cs.dim() != ssm.dim()) throw ConfigError("SSM dimension does not match the chain");
    SsmExpansion r = ssm;
    const CVec Fplus = cs.forcing_positive(Omega);
    r.Omega = Omega;
    r.epsilon = cs.epsilon();
    if (Fplus.squaredNorm() == 0.0) {
        r.x0_nonauto = CVec::Zero(cs.dim());
        r.modal_force = cplx(0.0, 0.0);
        return r;
    }
    // (A - i Omega) x0 - f v = -F+, u^H x0 = 0; the border unknown is f = u^H F+.
    auto [x, f] = bordered_solve(cs.A(), cplx(0.0, Omega), ssm.master.v, ssm.master.u, -Fplus);
    r.x0_nonauto = std::move(x);
    r.modal_force = f;
    return r;
}

double Rom::a(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (auto it = a_odd.rbegin(); it != a_odd.rend(); ++it) s = s * r2 + *it;
    return s * rho;
}

double Rom::a_over_rho(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (auto it = a_odd.rbegin(); it != a_odd.rend(); ++it) s = s * r2 + *it;
    return s;
}

double Rom::da(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (int j = static_cast<int>(a_odd.size()) - 1; j >= 0; --j)
        s = s * r2 + (2.0 * j + 1.0) * a_odd[static_cast<size_t>(j)];
    return s;
}

double Rom::b(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (auto it = b_even.rbegin(); it != b_even.rend(); ++it) s = s * r2 + *it;
    return s;
}

double Rom::db(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (int j = static_cast<int>(b_even.size()) - 1; j >= 1; --j)
        s = s * r2 + 2.0 * j * b_even[static_cast<size_t>(j)];
    return s * rho;
}

double Rom::d2a(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (int j = static_cast<int>(a_odd.size()) - 1; j >= 1; --j)
        s = s * r2 + (2.0 * j + 1.0) * (2.0 * j) * a_odd[static_cast<size_t>(j)];
    return s * rho;
}

double Rom::d2b(double rho) const {
    const double r2 = rho * rho;
    double s = 0.0;
    for (int j = static_cast<int>(b_even.size()) - 1; j >= 1; --j)
        s = s * r2 + 2.0 * j * (2.0 * j - 1.0) * b_even[static_cast<size_t>(j)];
    return s;
}

cplx Rom::effective_force(double Om) const {
    const double s = forcing_scaling == ForcingScaling::omega_squared ? Om * Om : 1.0;
    return modal_force * s;
}

Rom Rom::truncated(int new_order) const {
    check_order(new_order);
    if (new_order > order()) throw ConfigError("cannot truncate a ROM to a higher order");
    Rom r = *this;
    const auto n = static_cast<size_t>((new_order + 1) / 2);
    r.a_odd.resize(n);
    r.b_even.resize(n);
    return r;
}

Rom Rom::with_forcing(double eps, double Om) const {
    Rom r = *this;
    r.epsilon = eps;
    r.Omega = Om;
    return r;
}

Rom Rom::from_polynomials(std::vector<double> a_odd, std::vector<double> b_even) {
    if (a_odd.empty() || a_odd.size() != b_even.size())
        throw ConfigError("a and b coefficient lists must be non-empty and of equal length");
    Rom r;
    r.a_odd = std::move(a_odd);
    r.b_even = std::move(b_even);
    return r;
}

Rom make_rom(const SsmExpansion& ssm, const ChainSystem& cs) {
    Rom r;
    r.a_odd.push_back(ssm.master.lambda.real());
    r.b_even.push_back(ssm.master.lambda.imag());
    for (const auto& g : ssm.gamma) {
        r.a_odd.push_back(g.real());
        r.b_even.push_back(g.imag());
    }
    r.forcing_scaling = cs.forcing_scaling();
    r.modal_force = ssm.master.u.dot(cs.forcing_template() * 0.5);  // dot conjugates u
    r.epsilon = cs.epsilon();
    r.Omega = cs.Omega();
    return r;
}

Vec lift(const SsmExpansion& ssm, cplx p) {
    const int D = ssm.dim();
    CVec acc = CVec::Zero(D);
    Vec diag = Vec::Zero(D);
    const cplx pc = std::conj(p);
    for (int m = 1; m <= ssm.order; ++m)
        for (int l = 0; 2 * l <= m; ++l) {
            const int k = m - l;
            const cplx mon = std::pow(p, k) * std::pow(pc, l);
            if (k == l)
                diag += ssm.coeff(k, l).real() * mon.real();
            else
                acc += ssm.coeff(k, l) * mon;
        }
    return 2.0 * acc.real() + diag;
}

Vec lift(const SsmExpansion& ssm, cplx p, double t) {
    Vec z = lift(ssm, p);
    if (ssm.x0_nonauto && ssm.epsilon > 0.0) {
        const cplx ph = std::polar(1.0, ssm.Omega * t);
        z += 2.0 * ssm.epsilon * (*ssm.x0_nonauto * ph).real();
    }
    return z;
}

double lift_coordinate(const SsmExpansion& ssm, cplx p, int index) {
    if (index < 0 || index >= ssm.dim()) throw std::out_of_range("lift_coordinate: bad index");
    double out = 0.0;
    const cplx pc = std::conj(p);
    for (int m = 1; m <= ssm.order; ++m)
        for (int l = 0; 2 * l <= m; ++l) {
            const int k = m - l;
            const cplx term = ssm.coeff(k, l)[index] * std::pow(p, k) * std::pow(pc, l);
            out += k == l ? term.real() : 2.0 * term.real();
        }
    return out;
}

namespace {

// W(p), dW/dp and dW/dconj(p) as complex vectors.
void evaluate_with_derivatives(const SsmExpansion& ssm, cplx p, CVec& Wp, CVec& Wd, CVec& Wdc) {
    const int D = ssm.dim();
    Wp = CVec::Zero(D);
    Wd = CVec::Zero(D);
    Wdc = CVec::Zero(D);
    const cplx pc = std::conj(p);
    for (int m = 1; m <= ssm.order; ++m)
        for (int k = 0; k <= m; ++k) {
            const int l = m - k;
            const CVec& c = ssm.coeff(k, l);
            Wp += c * (std::pow(p, k) * std::pow(pc, l));
            if (k > 0) Wd += c * (static_cast<double>(k) * std::pow(p, k - 1) * std::pow(pc, l));
            if (l > 0) Wdc += c * (static_cast<double>(l) * std::pow(p, k) * std::pow(pc, l - 1));
        }
}

}  // namespace

double invariance_residual(const SsmExpansion& ssm, const ChainSystem& cs, cplx p) {
    CVec Wp, Wd, Wdc;
    evaluate_with_derivatives(ssm, p, Wp, Wd, Wdc);
    const cplx pc = std::conj(p);
    cplx R = ssm.master.lambda * p;
    for (size_t j = 0; j < ssm.gamma.size(); ++j) {
        const int jj = static_cast<int>(j) + 1;
        R += ssm.gamma[j] * std::pow(p, jj + 1) * std::pow(pc, jj);
    }
    const Vec z = Wp.real();
    const Vec lhs = cs.A() * z + eval_nonlinear(cs, z);
    const Vec rhs = (Wd * R + Wdc * std::conj(R)).real();
    const double nz = z.norm();
    if (nz == 0.0) return 0.0;
    return (lhs - rhs).norm() / nz;
}

Vec history_to_chain_state(const ChainSystem& cs, const InitialHistory& hist) {
    if (!hist.value) throw ConfigError("initial history has no value function");
    const int n = cs.n();
    const int N = cs.N();
    const double tau = cs.tau();
    Vec z(cs.dim());
    for (int i = 0; i <= N; ++i) {
        const double s = -static_cast<double>(i) * tau / N;
        const Vec x = hist.value(s);
        if (x.size() != n) throw ConfigError("initial history does not cover [-tau, 0] with the state dimension");
        if (!x.allFinite()) throw ConfigError("initial history is not finite on [-tau, 0]");
        z.segment(cs.u_index(i, 0), n) = x;
        if (i >= 1) {
            const Vec dx = hist.derivative_at(s, tau);
            if (dx.size() != n || !dx.allFinite())
                throw ConfigError("initial history derivative invalid on [-tau, 0]");
            z.segment(cs.w_index(i, 0), n) = dx;
        }
    }
    return z;
}

cplx project_state(const SsmExpansion& ssm, const Vec& z0, ProjectionMethod method) {
    if (z0.size() != ssm.dim()) throw ConfigError("state dimension does not match the SSM");
    const CVec zc = z0.cast<cplx>();
    switch (method) {
        case ProjectionMethod::transpose:
            return (ssm.master.v.transpose() * zc)(0);
        case ProjectionMethod::adjoint:
            return ssm.master.u.dot(zc);
        case ProjectionMethod::min_distance: break;
    }
    // Gauss-Newton on (Re p, Im p) for min ||z0 - W(p)||
    cplx p = ssm.master.u.dot(zc);
    for (int it = 0; it < 50; ++it) {
        CVec Wp, Wd, Wdc;
        evaluate_with_derivatives(ssm, p, Wp, Wd, Wdc);
        const Vec r = z0 - Wp.real();
        Eigen::MatrixX2d J(z0.size(), 2);
        J.col(0) = (Wd + Wdc).real();
        J.col(1) = (cplx(0.0, 1.0) * (Wd - Wdc)).real();
        const Eigen::Vector2d step = J.colPivHouseholderQr().solve(r);
        if (!step.allFinite()) break;
        p += cplx(step[0], step[1]);
        if (step.norm() < 1e-14 * std::max(1.0, std::abs(p))) break;
    }
    return p;
}

cplx project_initial(const SsmExpansion& ssm, const InitialHistory& hist, const ChainSystem& cs,
                     ProjectionMethod method) {
    return project_state(ssm, history_to_chain_state(cs, hist), method);
}

// ---- serialization ----

namespace {

nlohmann::json cvec_json(const CVec& v) {
    std::vector<double> re(static_cast<size_t>(v.size())), im(static_cast<size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        re[static_cast<size_t>(i)] = v[i].real();
        im[static_cast<size_t>(i)] = v[i].imag();
    }
    return {{"re", re}, {"im", im}};
}

CVec cvec_from(const nlohmann::json& j) {
    const auto re = j.at("re").get<std::vector<double>>();
    const auto im = j.at("im").get<std::vector<double>>();
    if (re.size() != im.size()) throw ConfigError("SSM document: re/im length mismatch");
    CVec v(static_cast<Eigen::Index>(re.size()));
    for (size_t i = 0; i < re.size(); ++i) v[static_cast<Eigen::Index>(i)] = cplx(re[i], im[i]);
    return v;
}

nlohmann::json cplx_json(cplx c) { return nlohmann::json::array({c.real(), c.imag()}); }

cplx cplx_from(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

nlohmann::json ssm_to_json(const SsmExpansion& ssm) {
    nlohmann::json j;
    j["format"] = "ddessm-ssm";
    j["version"] = 1;
    j["order"] = ssm.order;
    j["dim"] = ssm.dim();
    j["master"] = {{"lambda", cplx_json(ssm.master.lambda)},
                   {"index", ssm.master.index},
                   {"v", cvec_json(ssm.master.v)},
                   {"u", cvec_json(ssm.master.u)},
                   {"warnings", ssm.master.warnings}};
    auto& g = j["gamma"] = nlohmann::json::array();
    for (const auto& x : ssm.gamma) g.push_back(cplx_json(x));
    auto& w = j["W"] = nlohmann::json::array();
    for (int m = 1; m <= ssm.order; ++m)
        for (int l = 0; 2 * l <= m; ++l) {
            const int k = m - l;
            nlohmann::json e = cvec_json(ssm.coeff(k, l));
            e["k"] = k;
            e["l"] = l;
            w.push_back(std::move(e));
        }
    if (ssm.x0_nonauto) j["x0_nonauto"] = cvec_json(*ssm.x0_nonauto);
    if (ssm.modal_force) j["modal_force"] = cplx_json(*ssm.modal_force);
    j["epsilon"] = ssm.epsilon;
    j["Omega"] = ssm.Omega;
    return j;
}

SsmExpansion ssm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "ddessm-ssm")
            throw ConfigError("not an SSM document");
        if (j.at("version").get<int>() != 1) throw ConfigError("unsupported SSM document version");
        SsmExpansion s;
        s.order = j.at("order").get<int>();
        check_order(s.order);
        const int D = j.at("dim").get<int>();
        const auto& m = j.at("master");
        s.master.lambda = cplx_from(m.at("lambda"));
        s.master.index = m.at("index").get<int>();
        s.master.v = cvec_from(m.at("v"));
        s.master.u = cvec_from(m.at("u"));
        s.master.warnings = m.at("warnings").get<std::vector<std::string>>();
        for (const auto& g : j.at("gamma")) s.gamma.push_back(cplx_from(g));
        if (static_cast<int>(s.gamma.size()) != (s.order - 1) / 2)
            throw ConfigError("SSM document: wrong number of gamma coefficients");
        s.W.assign(static_cast<size_t>(monomial_index(0, s.order) + 1), CVec());
        for (const auto& e : j.at("W")) {
            const int k = e.at("k").get<int>();
            const int l = e.at("l").get<int>();
            if (k < l || k + l < 1 || k + l > s.order)
                throw ConfigError("SSM document: bad monomial index");
            CVec c = cvec_from(e);
            if (c.size() != D) throw ConfigError("SSM document: coefficient length mismatch");
            s.W[monomial_index(l, k)] = c.conjugate();
            s.W[monomial_index(k, l)] = std::move(c);
        }
        s.W[0] = CVec::Zero(D);
        for (size_t i = 0; i < s.W.size(); ++i)
            if (s.W[i].size() != D) throw ConfigError("SSM document: missing coefficients");
        if (s.master.v.size() != D || s.master.u.size() != D)
            throw ConfigError("SSM document: master vector length mismatch");
        if (j.contains("x0_nonauto")) s.x0_nonauto = cvec_from(j.at("x0_nonauto"));
        if (j.contains("modal_force")) s.modal_force = cplx_from(j.at("modal_force"));
        s.epsilon = j.value("epsilon", 0.0);
        s.Omega = j.value("Omega", 0.0);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed SSM document: ") + e.what());
    }
}

void save_ssm(const SsmExpansion& ssm, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os << ssm_to_json(ssm).dump();
}

SsmExpansion load_ssm(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    }
    return ssm_from_json(j);
}

}  // namespace ddessm
