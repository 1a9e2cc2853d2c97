#include "ddessm/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include "ddessm/error.hpp"

namespace ddessm {

bool spectral_order(const cplx& a, const cplx& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    if (std::abs(a.imag()) != std::abs(b.imag())) return std::abs(a.imag()) > std::abs(b.imag());
    return a.imag() > b.imag();
}

std::vector<cplx> chain_eigenvalues(const ChainSystem& cs) {
    const Mat dense = Mat(cs.A());
    Eigen::EigenSolver<Mat> es(dense, false);
    if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed to converge");
    std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end(), spectral_order);
    return ev;
}

cplx leading_eigenvalue(const ChainSystem& cs) { return chain_eigenvalues(cs).front(); }

namespace {

CSpMat shifted(const SpMat& M, cplx shift) {
    CSpMat S = M.cast<cplx>();
    CSpMat I(M.rows(), M.cols());
    I.setIdentity();
    S -= shift * I;
    S.makeCompressed();
    return S;
}

void normalize_phase(CVec& v) {
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    const cplx p = v[imax] / std::abs(v[imax]);
    v /= p;
    v /= v.norm();
}

}  // namespace

CVec inverse_iteration(const SpMat& M, cplx lambda) {
    // a tiny offset keeps the factorization nonsingular when lambda is exact
    const double scale = std::max(1.0, std::abs(lambda));
    const cplx shift = lambda + cplx(1e-11 * scale, 1e-11 * scale);
    Eigen::SparseLU<CSpMat> lu;
    CSpMat S = shifted(M, shift);
    lu.analyzePattern(S);
    lu.factorize(S);
    if (lu.info() != Eigen::Success) throw NumericalError("inverse iteration: factorization failed");
    std::mt19937 rng(12345);
    std::normal_distribution<double> nd;
    CVec x(M.rows());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = cplx(nd(rng), nd(rng));
    x.normalize();
    for (int it = 0; it < 4; ++it) {
        x = lu.solve(x);
        x.normalize();
    }
    return x;
}

Spectrum compute_spectrum(const ChainSystem& cs, std::optional<int> k) {
    Spectrum spec;
    spec.N_used = cs.N();
    spec.eigenvalues = chain_eigenvalues(cs);
    const int nvec = std::min<int>(k.value_or(static_cast<int>(spec.eigenvalues.size())),
                                   static_cast<int>(spec.eigenvalues.size()));
    spec.right_vectors.resize(cs.dim(), nvec);
    for (int j = 0; j < nvec; ++j) {
        const cplx lam = spec.eigenvalues[j];
        // reuse the conjugate partner's vector when available
        if (j > 0 && std::abs(lam - std::conj(spec.eigenvalues[j - 1])) < 1e-12 * std::abs(lam) &&
            lam.imag() != 0.0) {
            spec.right_vectors.col(j) = spec.right_vectors.col(j - 1).conjugate();
            continue;
        }
        CVec v = inverse_iteration(cs.A(), lam);
        normalize_phase(v);
        spec.right_vectors.col(j) = v;
    }
    return spec;
}

double eigen_residual(const ChainSystem& cs, const Spectrum& spec) {
    const CSpMat Ac = cs.A().cast<cplx>();
    double normA = 0.0;  // max column sum (1-norm) as the matrix norm scale
    for (int c = 0; c < cs.A().outerSize(); ++c) {
        double s = 0.0;
        for (SpMat::InnerIterator it(cs.A(), c); it; ++it) s += std::abs(it.value());
        normA = std::max(normA, s);
    }
    double worst = 0.0;
    for (Eigen::Index j = 0; j < spec.right_vectors.cols(); ++j) {
        const CVec v = spec.right_vectors.col(j);
        const CVec r = Ac * v - spec.eigenvalues[j] * v;
        worst = std::max(worst, r.norm() / (normA * v.norm()));
    }
    return worst;
}

MasterMode select_master(const ChainSystem& cs, const Spectrum& spec) {
    if (spec.eigenvalues.empty()) throw NumericalError("empty spectrum");
    const cplx lead = spec.eigenvalues.front();
    const double imag_tol = 1e-10 * std::max(1.0, std::abs(lead));
    if (std::abs(lead.imag()) <= imag_tol)
        throw NumericalError(
            "leading eigenvalue is real: one-dimensional master subspace, two-dimensional "
            "reduction not applicable");

    MasterMode m;
    int best = -1;
    for (int j = 0; j < static_cast<int>(spec.eigenvalues.size()); ++j) {
        const cplx lam = spec.eigenvalues[j];
        if (lam.imag() <= imag_tol) continue;
        if (best < 0) {
            best = j;
            continue;
        }
        const cplx cur = spec.eigenvalues[best];
        if (std::abs(lam.real() - cur.real()) <= 1e-8) {
            m.warnings.push_back("near-coincident real parts in master selection; choosing larger |Im|");
            if (std::abs(lam.imag()) > std::abs(cur.imag())) best = j;
        } else {
            break;
        }
    }
    m.index = best;
    m.lambda = spec.eigenvalues[best];

    if (best < spec.right_vectors.cols()) {
        m.v = spec.right_vectors.col(best);
    } else {
        m.v = inverse_iteration(cs.A(), m.lambda);
    }
    normalize_phase(m.v);

    const SpMat At = SpMat(cs.A().transpose());
    CVec u = inverse_iteration(At, std::conj(m.lambda));
    const cplx uv = u.dot(m.v);
    if (std::abs(uv) < 1e-14) throw NumericalError("left and right master vectors are orthogonal");
    m.u = u / std::conj(uv);
    return m;
}

MasterMode rescale_master(const MasterMode& m, cplx c) {
    MasterMode r = m;
    r.v = m.v * c;
    r.u = m.u / std::conj(c);
    return r;
}

// ---------------------------------------------------------------------------
// Characteristic function of the linearized DDE

namespace {

struct CharEval {
    cplx det;
    cplx log_derivative;  // det'/det
};

CharEval char_eval(const DelaySystem& sys, cplx lambda) {
    const int n = sys.n();
    const cplx e = std::exp(-lambda * sys.tau());
    CMat M = lambda * CMat::Identity(n, n) - sys.A_now().cast<cplx>() - e * sys.A_delayed().cast<cplx>();
    CMat dM = CMat::Identity(n, n) + (sys.tau() * e) * sys.A_delayed().cast<cplx>();
    Eigen::PartialPivLU<CMat> lu(M);
    CharEval out;
    out.det = lu.determinant();
    out.log_derivative = lu.solve(dM).trace();
    return out;
}

// Accumulated argument change of f along the segment a -> b.
// Returns false when the path passes too close to a zero.
bool arg_change(const DelaySystem& sys, cplx a, cplx b, cplx fa, cplx fb, int depth, double& acc) {
    const double d = std::arg(fb / fa);
    if (std::abs(d) < std::numbers::pi / 8.0) {
        acc += d;
        return true;
    }
    if (depth > 40) return false;
    const cplx m = 0.5 * (a + b);
    const cplx fm = char_eval(sys, m).det;
    if (std::abs(fm) == 0.0) return false;
    return arg_change(sys, a, m, fa, fm, depth + 1, acc) && arg_change(sys, m, b, fm, fb, depth + 1, acc);
}

// Winding number of the characteristic function around the box; -1 on failure.
int winding(const DelaySystem& sys, const ComplexBox& b) {
    const cplx corners[4] = {{b.re_min, b.im_min}, {b.re_max, b.im_min}, {b.re_max, b.im_max},
                             {b.re_min, b.im_max}};
    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const cplx a = corners[e];
        const cplx c = corners[(e + 1) % 4];
        // pre-split each edge so the adaptive walk starts from a reasonable mesh
        const int pieces = 16;
        for (int p = 0; p < pieces; ++p) {
            const cplx s0 = a + (c - a) * (double(p) / pieces);
            const cplx s1 = a + (c - a) * (double(p + 1) / pieces);
            const cplx f0 = char_eval(sys, s0).det;
            const cplx f1 = char_eval(sys, s1).det;
            if (std::abs(f0) == 0.0 || std::abs(f1) == 0.0) return -1;
            if (!arg_change(sys, s0, s1, f0, f1, 0, total)) return -1;
        }
    }
    return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

ComplexBox inflate(const ComplexBox& b, double amount) {
    return {b.re_min - amount, b.re_max + amount * 0.7, b.im_min - amount * 1.3, b.im_max + amount * 0.9};
}

void locate(const DelaySystem& sys, const ComplexBox& box, int count, int depth,
            std::vector<CharacteristicRoot>& out) {
    if (count <= 0) return;
    const double w = box.re_max - box.re_min;
    const double h = box.im_max - box.im_min;
    if (count == 1 || depth > 40 || std::max(w, h) < 1e-9) {
        const cplx centre(0.5 * (box.re_min + box.re_max), 0.5 * (box.im_min + box.im_max));
        auto r = refine_characteristic_root(sys, centre);
        const double slack = 1e-6 * (1.0 + std::max(w, h));
        const bool inside = r.lambda.real() >= box.re_min - slack && r.lambda.real() <= box.re_max + slack &&
                            r.lambda.imag() >= box.im_min - slack && r.lambda.imag() <= box.im_max + slack;
        if ((r.converged && inside) || depth > 40 || std::max(w, h) < 1e-9) {
            if (r.converged) out.push_back(r);
            return;
        }
    }
    // off-centre split avoids landing exactly on symmetric root locations
    const double f = 0.5 + 0.0123;
    ComplexBox b1 = box, b2 = box;
    if (w >= h) {
        b1.re_max = b2.re_min = box.re_min + f * w;
    } else {
        b1.im_max = b2.im_min = box.im_min + f * h;
    }
    int c1 = winding(sys, b1);
    for (int retry = 1; c1 < 0 && retry < 6; ++retry) {
        const double shift = 1e-7 * retry * std::max(w, h);
        if (w >= h) b1.re_max = b2.re_min = box.re_min + f * w + shift;
        else b1.im_max = b2.im_min = box.im_min + f * h + shift;
        c1 = winding(sys, b1);
    }
    if (c1 < 0) throw NumericalError("argument principle failed: root on subdivision line");
    locate(sys, b1, c1, depth + 1, out);
    locate(sys, b2, count - c1, depth + 1, out);
}

}  // namespace

cplx characteristic_function(const DelaySystem& sys, cplx lambda) { return char_eval(sys, lambda).det; }

CharacteristicRoot refine_characteristic_root(const DelaySystem& sys, cplx guess) {
    CharacteristicRoot r;
    cplx lam = guess;
    for (int it = 0; it < 200; ++it) {
        const CharEval e = char_eval(sys, lam);
        if (e.det == cplx(0.0)) break;
        cplx step = 1.0 / e.log_derivative;
        // damp wild steps far from a root
        const double cap = 2.0 + std::abs(lam);
        if (std::abs(step) > cap) step *= cap / std::abs(step);
        lam -= step;
        if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(lam))) break;
    }
    r.lambda = lam;
    r.residual = std::abs(characteristic_function(sys, lam));
    r.converged = std::isfinite(r.residual) && r.residual < 1e-10;
    return r;
}

int count_characteristic_roots(const DelaySystem& sys, const ComplexBox& box) {
    for (int retry = 0; retry < 6; ++retry) {
        const int w = winding(sys, inflate(box, 1e-6 * (1 + retry)));
        if (w >= 0) return w;
    }
    throw NumericalError("argument principle failed on the search box boundary");
}

std::vector<CharacteristicRoot> exact_characteristic_roots(const DelaySystem& sys, int n_roots,
                                                           const ComplexBox& box) {
    ComplexBox b = box;
    int count = -1;
    for (int retry = 0; retry < 6 && count < 0; ++retry) {
        b = inflate(box, 1e-6 * (1 + retry));
        count = winding(sys, b);
    }
    if (count < 0) throw NumericalError("argument principle failed on the search box boundary");
    std::vector<CharacteristicRoot> found;
    locate(sys, b, count, 0, found);
    std::vector<CharacteristicRoot> unique;
    for (const auto& r : found) {
        const bool dup = std::any_of(unique.begin(), unique.end(), [&](const CharacteristicRoot& q) {
            return std::abs(q.lambda - r.lambda) < 1e-8 * std::max(1.0, std::abs(r.lambda));
        });
        if (!dup) unique.push_back(r);
    }
    if (static_cast<int>(unique.size()) < count)
        throw NumericalError("characteristic root search: Newton failed to converge for some roots");
    std::sort(unique.begin(), unique.end(),
              [](const auto& a, const auto& b) { return spectral_order(a.lambda, b.lambda); });
    if (n_roots >= 0 && static_cast<int>(unique.size()) > n_roots) unique.resize(n_roots);
    return unique;
}

// ---------------------------------------------------------------------------

HopfLocus hopf_locus(const SystemFamily& family, double lo, double hi, int N, double tol) {
    HopfLocus out;
    auto eval = [&](double p) {
        const cplx lam = leading_eigenvalue(build_chain(family(p), N));
        out.samples.push_back({p, lam});
        return lam.real();
    };
    double flo = eval(lo);
    double fhi = eval(hi);
    if (flo * fhi > 0.0)
        throw NumericalError("hopf_locus: leading real part does not change sign over the range");
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = eval(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    out.lo = lo;
    out.hi = hi;
    out.critical = (flo == fhi) ? 0.5 * (lo + hi) : lo - flo * (hi - lo) / (fhi - flo);
    return out;
}

std::vector<LocusPoint> leading_eigenvalue_sweep(const SystemFamily& family, double lo, double hi,
                                                 int n_points, int N) {
    std::vector<LocusPoint> pts;
    for (int i = 0; i < n_points; ++i) {
        const double p = n_points == 1 ? lo : lo + (hi - lo) * i / (n_points - 1);
        pts.push_back({p, leading_eigenvalue(build_chain(family(p), N))});
    }
    return pts;
}

ConvergenceStudy convergence_study(const DelaySystem& sys, const std::vector<int>& N_list) {
    if (N_list.empty()) throw ConfigError("convergence_study: empty N list");
    ConvergenceStudy st;
    std::vector<cplx> lams;
    for (int N : N_list) {
        cplx lam = leading_eigenvalue(build_chain(sys, N));
        if (lam.imag() < 0.0) lam = std::conj(lam);
        lams.push_back(lam);
    }
    const auto finest = std::max_element(N_list.begin(), N_list.end()) - N_list.begin();
    const auto root = refine_characteristic_root(sys, lams[finest]);
    if (!root.converged) throw NumericalError("convergence_study: characteristic root did not converge");
    st.exact = root.lambda;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < N_list.size(); ++i) {
        const double err = std::abs(lams[i] - st.exact);
        st.rows.push_back({N_list[i], lams[i], err});
        const double x = std::log(static_cast<double>(N_list[i]));
        const double y = std::log(err);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(N_list.size());
    if (N_list.size() >= 2) st.fitted_order = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
    return st;
}

}  // namespace ddessm
