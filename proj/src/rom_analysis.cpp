#include "ddessm/rom_analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "ddessm/error.hpp"
#include "ddessm/parallel.hpp"

namespace ddessm {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double wrap_angle(double x) {
    x = std::fmod(x, two_pi);
    return x < 0.0 ? x + two_pi : x;
}

template <typename F>
double bracket_root(F&& f, double lo, double hi, double flo, double fhi) {
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    boost::uintmax_t it = 200;
    const auto r = boost::math::tools::toms748_solve(
        f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), it);
    return 0.5 * (r.first + r.second);
}

// H(rho) = a^2 + rho^2 (b - Omega)^2 - eps^2 |f|^2
double frc_H(const Rom& rom, double eps, double Omega, double f2, double rho) {
    const double a = rom.a(rho);
    const double d = rom.b(rho) - Omega;
    return a * a + rho * rho * d * d - eps * eps * f2;
}

}  // namespace

// ---- observable ----

ObservableHarmonics::ObservableHarmonics(const SsmExpansion& ssm, double rho, int index,
                                         double theta, cplx forced)
    : order_(ssm.order), c_(static_cast<size_t>(2 * ssm.order + 1), 0.0) {
    if (index < 0 || index >= ssm.dim()) throw ConfigError("observable index out of range");
    for (int m = 1; m <= ssm.order; ++m) {
        const double rm = std::pow(rho, m);
        for (int k = 0; k <= m; ++k) {
            const int l = m - k;
            const int h = k - l;
            c_[static_cast<size_t>(h + order_)] += ssm.coeff(k, l)[index] * rm * std::polar(1.0, h * theta);
        }
    }
    c_[static_cast<size_t>(order_ + 1)] += forced;
    c_[static_cast<size_t>(order_ - 1)] += std::conj(forced);
}

double ObservableHarmonics::eval(double phi) const {
    double s = c_[static_cast<size_t>(order_)].real();
    for (int h = 1; h <= order_; ++h) s += 2.0 * (c_[static_cast<size_t>(order_ + h)] * std::polar(1.0, h * phi)).real();
    return s;
}

double ObservableHarmonics::max(int n_theta) const {
    n_theta = std::max(n_theta, 8);
    int best = 0;
    double bv = -std::numeric_limits<double>::infinity();
    const double h = two_pi / n_theta;
    for (int i = 0; i < n_theta; ++i) {
        const double v = eval(i * h);
        if (v > bv) {
            bv = v;
            best = i;
        }
    }
    const auto r = boost::math::tools::brent_find_minima([this](double x) { return -eval(x); },
                                                         (best - 1) * h, (best + 1) * h, 52);
    return std::max(bv, -r.second);
}

double ObservableHarmonics::min(int n_theta) const {
    ObservableHarmonics neg = *this;
    for (auto& c : neg.c_) c = -c;
    return -neg.max(n_theta);
}

double orbit_amplitude(const SsmExpansion& ssm, double rho, const Observable& obs) {
    return ObservableHarmonics(ssm, rho, obs.index).max(obs.n_theta);
}

// ---- backbone ----

std::vector<BackbonePoint> backbone(const Rom& rom, double rho_max, int n_points,
                                    const SsmExpansion* ssm, const Observable& obs) {
    if (!(rho_max > 0.0)) throw ConfigError("backbone rho_max must be positive");
    if (n_points < 2) throw ConfigError("backbone needs at least two points");
    std::vector<BackbonePoint> out;
    out.reserve(static_cast<size_t>(n_points));
    for (int i = 0; i < n_points; ++i) {
        BackbonePoint p;
        p.rho = rho_max * i / (n_points - 1);
        p.omega = rom.b(p.rho);
        p.phys_amp = ssm ? orbit_amplitude(*ssm, p.rho, obs) : std::numeric_limits<double>::quiet_NaN();
        out.push_back(p);
    }
    return out;
}

// ---- limit-cycle roots ----

std::vector<double> positive_roots(const std::vector<double>& a_odd) {
    // a(rho)/rho = sum c_j x^j with x = rho^2
    int deg = static_cast<int>(a_odd.size()) - 1;
    while (deg >= 0 && a_odd[static_cast<size_t>(deg)] == 0.0) --deg;
    if (deg < 1) return {};
    const double lead = a_odd[static_cast<size_t>(deg)];
    Mat C = Mat::Zero(deg, deg);
    for (int i = 1; i < deg; ++i) C(i, i - 1) = 1.0;
    for (int i = 0; i < deg; ++i) C(i, deg - 1) = -a_odd[static_cast<size_t>(i)] / lead;
    Eigen::EigenSolver<Mat> es(C, false);
    auto P = [&](double x, double& dP) {
        double p = 0.0;
        dP = 0.0;
        for (int j = deg; j >= 0; --j) {
            dP = dP * x + p;
            p = p * x + a_odd[static_cast<size_t>(j)];
        }
        return p;
    };
    std::vector<double> out;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const cplx x = es.eigenvalues()[i];
        if (x.real() <= 0.0 || std::abs(x.imag()) > 1e-8 * std::max(1.0, std::abs(x))) continue;
        double xr = x.real();
        for (int it = 0; it < 20; ++it) {
            double dP = 0.0;
            const double p = P(xr, dP);
            if (dP == 0.0) break;
            const double step = p / dP;
            xr -= step;
            if (std::abs(step) <= 1e-15 * xr) break;
        }
        if (xr > 0.0) out.push_back(std::sqrt(xr));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(),
                          [](double u, double v) { return std::abs(u - v) <= 1e-12 * std::max(u, v); }),
              out.end());
    return out;
}

std::optional<double> LimitCycleRoots::converged_root() const {
    for (const auto& t : tracks)
        if (t.cls == RootClass::converged) return t.rho;
    return std::nullopt;
}

LimitCycleRoots limit_cycle_roots(const std::map<int, std::vector<double>>& a_by_order,
                                  std::optional<double> conv_radius, const RootOptions& opts) {
    if (a_by_order.size() < 3) throw ConfigError("limit-cycle root classification needs at least three orders");
    LimitCycleRoots res;
    for (const auto& [order, coeffs] : a_by_order) res.roots_by_order[order] = positive_roots(coeffs);
    auto it = res.roots_by_order.rbegin();
    res.top_order = it->first;
    const auto& top = it->second;
    std::vector<int> lower;
    for (auto jt = std::next(it); jt != res.roots_by_order.rend() && lower.size() < 2; ++jt)
        lower.push_back(jt->first);

    for (double r : top) {
        RootTrack tr;
        tr.rho = r;
        bool persistent = true;
        for (int o : lower) {
            const auto& roots = res.roots_by_order.at(o);
            if (roots.empty()) {
                persistent = false;
                continue;
            }
            const double near = *std::min_element(roots.begin(), roots.end(), [r](double u, double v) {
                return std::abs(u - r) < std::abs(v - r);
            });
            tr.by_order[o] = near;
            if (std::abs(near - r) > opts.agreement * r) persistent = false;
        }
        std::ostringstream why;
        if (!persistent) {
            why << "not persistent across orders";
            for (const auto& [o, v] : tr.by_order) why << " O" << o << "=" << v;
            why << " O" << res.top_order << "=" << r;
            tr.cls = RootClass::spurious;
        } else if (conv_radius && r >= (1.0 - opts.boundary_margin) * *conv_radius) {
            why << "at the boundary of the convergence domain (" << *conv_radius << ")";
            tr.cls = RootClass::spurious;
        } else {
            why << "persistent within " << opts.agreement * 100.0 << "% over the top three orders";
            tr.cls = RootClass::converged;
        }
        tr.reason = why.str();
        res.tracks.push_back(std::move(tr));
    }
    return res;
}

std::map<int, std::vector<double>> a_polynomials_by_order(const Rom& rom) {
    std::map<int, std::vector<double>> out;
    for (int O = 3; O <= rom.order(); O += 2)
        out[O] = std::vector<double>(rom.a_odd.begin(), rom.a_odd.begin() + (O + 1) / 2);
    return out;
}

LimitCyclePrediction limit_cycle_predict(const Rom& rom, const SsmExpansion& ssm, double rho_star,
                                         int n_samples, const Observable& obs) {
    LimitCyclePrediction p;
    p.rho = rho_star;
    p.frequency = rom.b(rho_star);
    if (!(p.frequency > 0.0)) throw NumericalError("limit cycle frequency b(rho*) is not positive");
    p.period = two_pi / p.frequency;
    p.phys_amp = orbit_amplitude(ssm, rho_star, obs);
    for (int i = 0; i < n_samples; ++i) {
        const double th = two_pi * i / n_samples;
        p.theta.push_back(th);
        p.states.push_back(lift(ssm, std::polar(rho_star, th)));
    }
    return p;
}

// ---- forced response ----

const char* to_string(BifFlag f) {
    switch (f) {
        case BifFlag::SN: return "SN";
        case BifFlag::HB: return "HB";
        case BifFlag::none: break;
    }
    return "none";
}

std::vector<FrcPoint> FrcResult::flagged(BifFlag f) const {
    std::vector<FrcPoint> out;
    for (const auto& p : points)
        if (p.bif_flag == f) out.push_back(p);
    return out;
}

int FrcResult::isola_count() const {
    return static_cast<int>(std::count_if(branches.begin(), branches.end(),
                                          [](const FrcBranch& b) { return b.isola; }));
}

FrcPoint make_frc_point(const Rom& rom, double eps, double Omega, double rho) {
    FrcPoint p;
    p.Omega = Omega;
    p.rho = rho;
    const double a = rom.a(rho);
    const double d = rom.b(rho) - Omega;
    const cplx ef = eps * rom.effective_force(Omega);
    const cplx lin(a, rho * d);
    p.theta = wrap_angle(std::arg(ef) - std::arg(-lin));
    p.residual = std::abs(lin + ef * std::polar(1.0, -p.theta));
    const double da = rom.da(rho);
    p.trace = da + a / rho;
    p.det = da * a / rho + d * (rho * rom.db(rho) + d);
    p.stable = p.trace < 0.0 && p.det > 0.0;
    return p;
}

std::vector<FrcPoint> frc_column(const Rom& rom, double eps, double Omega, double rho_max, int n_rho) {
    if (!(rho_max > 0.0)) throw ConfigError("FRC rho_max must be positive");
    if (n_rho < 10) throw ConfigError("FRC rho grid too coarse");
    const double f2 = std::norm(rom.effective_force(Omega));
    auto H = [&](double r) { return frc_H(rom, eps, Omega, f2, r); };
    std::vector<FrcPoint> out;
    double r0 = 0.0;
    double h0 = H(r0);
    for (int i = 1; i <= n_rho; ++i) {
        const double r1 = rho_max * i / n_rho;
        const double h1 = H(r1);
        if (h1 == 0.0 || (h0 < 0.0) != (h1 < 0.0)) {
            if (h0 != 0.0) {
                const double r = bracket_root(H, r0, r1, h0, h1);
                if (r > 0.0) out.push_back(make_frc_point(rom, eps, Omega, r));
            }
        }
        r0 = r1;
        h0 = h1;
    }
    return out;
}

namespace {

struct Node {
    int col;
    int idx;
};

// adjacent pair (j, j+1) of `big` left unmatched when matching `small` in order
int best_pair(const std::vector<FrcPoint>& small, const std::vector<FrcPoint>& big, bool* tie) {
    const int n = static_cast<int>(big.size());
    double best = std::numeric_limits<double>::infinity();
    double second = best;
    int bj = 0;
    for (int j = 0; j + 1 < n; ++j) {
        double c = std::abs(big[static_cast<size_t>(j + 1)].rho - big[static_cast<size_t>(j)].rho);
        for (int i = 0; i < static_cast<int>(small.size()); ++i) {
            const int m = i < j ? i : i + 2;
            c += std::abs(small[static_cast<size_t>(i)].rho - big[static_cast<size_t>(m)].rho);
        }
        if (c < best) {
            second = best;
            best = c;
            bj = j;
        } else if (c < second) {
            second = c;
        }
    }
    if (tie) *tie = std::isfinite(second) && std::abs(second - best) <= 1e-12 * std::max(1.0, best);
    return bj;
}

}  // namespace

std::vector<FrcBranch> branch_connect(const std::vector<FrcPoint>& points,
                                      std::vector<std::string>* warnings) {
    // columns by exact Omega
    std::vector<double> omegas;
    for (const auto& p : points) omegas.push_back(p.Omega);
    std::sort(omegas.begin(), omegas.end());
    omegas.erase(std::unique(omegas.begin(), omegas.end()), omegas.end());
    const int nc = static_cast<int>(omegas.size());
    std::vector<std::vector<FrcPoint>> cols(static_cast<size_t>(nc));
    for (const auto& p : points) {
        const auto c = std::lower_bound(omegas.begin(), omegas.end(), p.Omega) - omegas.begin();
        cols[static_cast<size_t>(c)].push_back(p);
    }
    for (auto& c : cols)
        std::sort(c.begin(), c.end(), [](const FrcPoint& a, const FrcPoint& b) { return a.rho < b.rho; });

    std::vector<int> offset(static_cast<size_t>(nc + 1), 0);
    for (int c = 0; c < nc; ++c) offset[static_cast<size_t>(c + 1)] = offset[static_cast<size_t>(c)] + static_cast<int>(cols[static_cast<size_t>(c)].size());
    const int total = offset[static_cast<size_t>(nc)];
    auto id = [&](int c, int i) { return offset[static_cast<size_t>(c)] + i; };
    std::vector<std::array<int, 2>> edges;

    for (int c = 0; c + 1 < nc; ++c) {
        const auto& L = cols[static_cast<size_t>(c)];
        const auto& R = cols[static_cast<size_t>(c + 1)];
        const int n1 = static_cast<int>(L.size());
        const int n2 = static_cast<int>(R.size());
        if (n1 == n2) {
            for (int i = 0; i < n1; ++i) edges.push_back({id(c, i), id(c + 1, i)});
        } else if (std::abs(n1 - n2) == 2) {
            const bool born = n2 > n1;
            bool tie = false;
            const int j = born ? best_pair(L, R, &tie) : best_pair(R, L, &tie);
            if (tie && warnings) {
                std::ostringstream os;
                os << "ambiguous fold between Omega=" << omegas[static_cast<size_t>(c)] << " and "
                   << omegas[static_cast<size_t>(c + 1)];
                warnings->push_back(os.str());
            }
            const int small_n = born ? n1 : n2;
            for (int i = 0; i < small_n; ++i) {
                const int m = i < j ? i : i + 2;
                if (born)
                    edges.push_back({id(c, i), id(c + 1, m)});
                else
                    edges.push_back({id(c, m), id(c + 1, i)});
            }
            const int pc = born ? c + 1 : c;
            edges.push_back({id(pc, j), id(pc, j + 1)});
        } else if (warnings) {
            std::ostringstream os;
            os << "cannot chain " << n1 << " -> " << n2 << " solutions between Omega="
               << omegas[static_cast<size_t>(c)] << " and " << omegas[static_cast<size_t>(c + 1)];
            warnings->push_back(os.str());
        }
    }

    std::vector<std::vector<int>> adj(static_cast<size_t>(total));  // edge ids
    for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
        adj[static_cast<size_t>(edges[static_cast<size_t>(e)][0])].push_back(e);
        adj[static_cast<size_t>(edges[static_cast<size_t>(e)][1])].push_back(e);
    }
    std::vector<Node> nodes(static_cast<size_t>(total));
    for (int c = 0; c < nc; ++c)
        for (int i = 0; i < static_cast<int>(cols[static_cast<size_t>(c)].size()); ++i) nodes[static_cast<size_t>(id(c, i))] = {c, i};
    for (int v = 0; v < total; ++v)
        if (adj[static_cast<size_t>(v)].size() > 2 && warnings)
            warnings->push_back("branch node with more than two neighbours");

    std::vector<char> seen_node(static_cast<size_t>(total), 0);
    std::vector<char> seen_edge(edges.size(), 0);
    std::vector<FrcBranch> out;
    auto walk = [&](int start, bool closed) {
        FrcBranch br;
        br.closed = closed;
        int v = start;
        bool touches_edge_col = false;
        while (true) {
            seen_node[static_cast<size_t>(v)] = 1;
            const Node& nd = nodes[static_cast<size_t>(v)];
            br.points.push_back(cols[static_cast<size_t>(nd.col)][static_cast<size_t>(nd.idx)]);
            if (nd.col == 0 || nd.col == nc - 1) touches_edge_col = true;
            int next = -1;
            for (int e : adj[static_cast<size_t>(v)]) {
                if (seen_edge[static_cast<size_t>(e)]) continue;
                seen_edge[static_cast<size_t>(e)] = 1;
                const auto& ed = edges[static_cast<size_t>(e)];
                next = ed[0] == v ? ed[1] : ed[0];
                break;
            }
            if (next < 0 || seen_node[static_cast<size_t>(next)]) {
                if (closed && next >= 0) br.points.push_back(br.points.front());
                break;
            }
            v = next;
        }
        br.isola = closed && !touches_edge_col;
        out.push_back(std::move(br));
    };
    // open branches start at an endpoint; iterate in id order (Omega, then rho) for determinism
    for (int v = 0; v < total; ++v)
        if (!seen_node[static_cast<size_t>(v)] && adj[static_cast<size_t>(v)].size() <= 1) walk(v, false);
    for (int v = 0; v < total; ++v)
        if (!seen_node[static_cast<size_t>(v)]) walk(v, true);
    return out;
}

namespace {

// Saddle-node point: H = 0 and dH/drho = 0, Newton in (rho, Omega).
// `window` bounds how far the fold may sit from the pair (turning pairs share one column).
std::optional<FrcPoint> locate_sn(const Rom& rom, double eps, const FrcPoint& p1, const FrcPoint& p2,
                                  double window) {
    double rho = 0.5 * (p1.rho + p2.rho);
    double Om = 0.5 * (p1.Omega + p2.Omega);
    const double Olo = std::min(p1.Omega, p2.Omega);
    const double Ohi = std::max(p1.Omega, p2.Omega);
    const double span = std::max(Ohi - Olo, window);
    const double f0 = std::norm(rom.modal_force);
    auto scale = [&](double O) { return rom.forcing_scaling == ForcingScaling::omega_squared ? O * O : 1.0; };
    auto dscale = [&](double O) { return rom.forcing_scaling == ForcingScaling::omega_squared ? 2.0 * O : 0.0; };
    for (int it = 0; it < 60; ++it) {
        const double a = rom.a(rho), da = rom.da(rho), d2a = rom.d2a(rho);
        const double b = rom.b(rho), db = rom.db(rho), d2b = rom.d2b(rho);
        const double d = b - Om;
        const double s = scale(Om);
        const double H = a * a + rho * rho * d * d - eps * eps * s * s * f0;
        const double Hr = 2.0 * a * da + 2.0 * rho * d * d + 2.0 * rho * rho * d * db;
        const double HO = -2.0 * rho * rho * d - eps * eps * f0 * 2.0 * s * dscale(Om);
        const double Hrr = 2.0 * da * da + 2.0 * a * d2a + 2.0 * d * d + 8.0 * rho * d * db +
                           2.0 * rho * rho * db * db + 2.0 * rho * rho * d * d2b;
        const double HrO = -4.0 * rho * d - 2.0 * rho * rho * db;
        const double det = Hr * HrO - HO * Hrr;
        if (det == 0.0) return std::nullopt;
        const double dr = (H * HrO - HO * Hr) / det;
        const double dO = (Hr * Hr - H * Hrr) / det;
        rho -= dr;
        Om -= dO;
        if (!(rho > 0.0) || !std::isfinite(Om)) return std::nullopt;
        if (std::abs(dr) <= 1e-14 * rho && std::abs(dO) <= 1e-14 * std::max(1.0, std::abs(Om))) break;
    }
    if (Om < Olo - span || Om > Ohi + span) return std::nullopt;
    FrcPoint p = make_frc_point(rom, eps, Om, rho);
    p.bif_flag = BifFlag::SN;
    p.stable = false;
    return p;
}

// Hopf point between two connected points: trace(rho) = 0, then H(rho_HB, Omega) = 0.
std::optional<FrcPoint> locate_hb(const Rom& rom, double eps, const FrcPoint& p1, const FrcPoint& p2) {
    auto tr = [&](double r) { return rom.da(r) + rom.a(r) / r; };
    const double rlo = std::min(p1.rho, p2.rho);
    const double rhi = std::max(p1.rho, p2.rho);
    const double tlo = tr(rlo), thi = tr(rhi);
    if ((tlo < 0.0) == (thi < 0.0)) return std::nullopt;
    const double rho = bracket_root(tr, rlo, rhi, tlo, thi);
    double Om;
    if (p1.Omega == p2.Omega) {
        Om = p1.Omega;
    } else {
        auto H = [&](double O) {
            return frc_H(rom, eps, O, std::norm(rom.effective_force(O)), rho);
        };
        const double Olo = std::min(p1.Omega, p2.Omega), Ohi = std::max(p1.Omega, p2.Omega);
        const double hlo = H(Olo), hhi = H(Ohi);
        if ((hlo < 0.0) != (hhi < 0.0))
            Om = bracket_root(H, Olo, Ohi, hlo, hhi);
        else
            Om = p1.Omega + (p2.Omega - p1.Omega) * (rho - p1.rho) / (p2.rho - p1.rho);
    }
    FrcPoint p = make_frc_point(rom, eps, Om, rho);
    if (!(p.det > 0.0)) return std::nullopt;  // neutral saddle, not a Hopf point
    p.bif_flag = BifFlag::HB;
    p.stable = false;
    return p;
}

void refine_columns(const Rom& rom, double eps, const FrcOptions& opts, double O1,
                    const std::vector<FrcPoint>& c1, double O2, const std::vector<FrcPoint>& c2,
                    int depth, std::vector<std::pair<double, std::vector<FrcPoint>>>& out) {
    const int n1 = static_cast<int>(c1.size()), n2 = static_cast<int>(c2.size());
    const int dn = std::abs(n1 - n2);
    if (depth >= opts.max_refine || dn == 0 || dn == 2) return;
    const double Om = 0.5 * (O1 + O2);
    auto cm = frc_column(rom, eps, Om, opts.rho_max, opts.n_rho);
    refine_columns(rom, eps, opts, O1, c1, Om, cm, depth + 1, out);
    out.emplace_back(Om, cm);
    refine_columns(rom, eps, opts, Om, cm, O2, c2, depth + 1, out);
}

}  // namespace

FrcResult frc_periodic(const Rom& rom, double eps, double Omega_lo, double Omega_hi,
                       const FrcOptions& opts) {
    if (!(eps > 0.0)) throw ConfigError("FRC requires eps > 0");
    if (!(Omega_hi > Omega_lo) || !(Omega_lo > 0.0)) throw ConfigError("FRC Omega range must satisfy 0 < lo < hi");
    if (opts.n_grid < 2) throw ConfigError("FRC needs at least two Omega columns");
    FrcResult res;
    res.epsilon = eps;
    res.Omega_lo = Omega_lo;
    res.Omega_hi = Omega_hi;

    const int G = opts.n_grid;
    std::vector<double> Om(static_cast<size_t>(G));
    for (int c = 0; c < G; ++c) Om[static_cast<size_t>(c)] = Omega_lo + (Omega_hi - Omega_lo) * c / (G - 1);
    std::vector<std::vector<FrcPoint>> cols(static_cast<size_t>(G));
    parallel_for(G, opts.threads, [&](int c) {
        cols[static_cast<size_t>(c)] = frc_column(rom, eps, Om[static_cast<size_t>(c)], opts.rho_max, opts.n_rho);
    });

    std::vector<FrcPoint> grid;
    for (int c = 0; c < G; ++c) {
        for (const auto& p : cols[static_cast<size_t>(c)]) grid.push_back(p);
        if (c + 1 < G) {
            std::vector<std::pair<double, std::vector<FrcPoint>>> extra;
            refine_columns(rom, eps, opts, Om[static_cast<size_t>(c)], cols[static_cast<size_t>(c)],
                           Om[static_cast<size_t>(c + 1)], cols[static_cast<size_t>(c + 1)], 0, extra);
            for (const auto& [o, pts] : extra)
                for (const auto& p : pts) grid.push_back(p);
        }
    }
    for (const auto& p : grid)
        if (p.residual > 1e-10) {
            std::ostringstream os;
            os << "fixed-point residual " << p.residual << " at Omega=" << p.Omega << " rho=" << p.rho;
            res.warnings.push_back(os.str());
        }

    res.branches = branch_connect(grid, &res.warnings);

    // insert bifurcation points along each branch
    const double h = (Omega_hi - Omega_lo) / (G - 1);
    for (size_t bi = 0; bi < res.branches.size(); ++bi) {
        auto& br = res.branches[bi];
        std::vector<FrcPoint> pts;
        for (size_t i = 0; i < br.points.size(); ++i) {
            pts.push_back(br.points[i]);
            if (i + 1 == br.points.size()) break;
            const FrcPoint& p1 = br.points[i];
            const FrcPoint& p2 = br.points[i + 1];
            std::vector<FrcPoint> found;
            if ((p1.det > 0.0) != (p2.det > 0.0)) {
                if (auto sn = locate_sn(rom, eps, p1, p2, h)) {
                    found.push_back(*sn);
                } else {
                    std::ostringstream os;
                    os << "saddle-node between Omega=" << p1.Omega << " and " << p2.Omega
                       << " could not be refined; flagged at the midpoint";
                    res.warnings.push_back(os.str());
                    FrcPoint mid = make_frc_point(rom, eps, 0.5 * (p1.Omega + p2.Omega), 0.5 * (p1.rho + p2.rho));
                    mid.bif_flag = BifFlag::SN;
                    mid.stable = false;
                    found.push_back(mid);
                }
            }
            if ((p1.trace < 0.0) != (p2.trace < 0.0))
                if (auto hb = locate_hb(rom, eps, p1, p2)) found.push_back(*hb);
            // order the inserted points by distance from p1 along rho
            std::sort(found.begin(), found.end(), [&](const FrcPoint& x, const FrcPoint& y) {
                return std::abs(x.rho - p1.rho) < std::abs(y.rho - p1.rho);
            });
            for (const auto& f : found) pts.push_back(f);
        }
        br.points = std::move(pts);
        for (auto& p : br.points) p.branch = static_cast<int>(bi);
        for (const auto& p : br.points) res.points.push_back(p);
    }
    return res;
}

void frc_physical_amplitudes(FrcResult& frc, const SsmExpansion& ssm, const ChainSystem& cs,
                             const Observable& obs, int threads) {
    std::vector<double> omegas;
    for (const auto& p : frc.points) omegas.push_back(p.Omega);
    std::sort(omegas.begin(), omegas.end());
    omegas.erase(std::unique(omegas.begin(), omegas.end()), omegas.end());
    std::vector<cplx> x0(omegas.size());
    parallel_for(static_cast<int>(omegas.size()), threads, [&](int i) {
        const auto s = nonauto_correction(ssm, cs, omegas[static_cast<size_t>(i)]);
        x0[static_cast<size_t>(i)] = (*s.x0_nonauto)[obs.index];
    });
    auto amp = [&](FrcPoint& p) {
        const auto i = std::lower_bound(omegas.begin(), omegas.end(), p.Omega) - omegas.begin();
        p.phys_amp = ObservableHarmonics(ssm, p.rho, obs.index, p.theta, frc.epsilon * x0[static_cast<size_t>(i)])
                         .max(obs.n_theta);
    };
    parallel_for(static_cast<int>(frc.points.size()), threads,
                 [&](int i) { amp(frc.points[static_cast<size_t>(i)]); });
    for (auto& br : frc.branches)
        for (auto& p : br.points) amp(p);
}

// ---- ROM limit cycles ----

namespace {

using State3 = std::array<double, 3>;  // Re q, Im q, accumulated divergence

struct ForcedFlow {
    const Rom* rom;
    double eps;
    double Omega;
    cplx ef;
    void operator()(const State3& s, State3& ds, double) const {
        const cplx q(s[0], s[1]);
        const double r = std::abs(q);
        const cplx g(rom->a_over_rho(r), rom->b(r) - Omega);
        const cplx dq = q * g + ef;
        ds[0] = dq.real();
        ds[1] = dq.imag();
        ds[2] = rom->da(r) + rom->a_over_rho(r);
    }
};

}  // namespace

RomCycle rom_cycle(const Rom& rom, double eps, double Omega, const CycleOptions& opts) {
    namespace odeint = boost::numeric::odeint;
    RomCycle cyc;
    cyc.Omega = Omega;
    cyc.epsilon = eps;

    // repelling fixed point to start from
    cplx q_fp = 0.0;
    double r_scale = 1.0;
    bool have_repeller = false;
    bool have_stable = false;
    if (eps > 0.0) {
        double rho_max = 1.0;
        // search radius: grow until H > 0 at the end of the grid
        const double f2 = std::norm(rom.effective_force(Omega));
        while (frc_H(rom, eps, Omega, f2, rho_max) <= 0.0 && rho_max < 1e3) rho_max *= 2.0;
        for (const auto& p : frc_column(rom, eps, Omega, rho_max * 2.0, 4000)) {
            if (p.trace > 0.0 && p.det > 0.0 && !have_repeller) {
                have_repeller = true;
                q_fp = std::polar(p.rho, p.theta);
                r_scale = p.rho;
            }
            if (p.stable) have_stable = true;
        }
    } else if (rom.a_odd.front() > 0.0) {
        have_repeller = true;
    }
    if (!have_repeller) {
        cyc.status = have_stable ? "stable fixed point" : "no cycle";
        return cyc;
    }

    ForcedFlow flow{&rom, eps, Omega, eps * rom.effective_force(Omega)};
    auto stepper = odeint::make_dense_output(opts.abs_tol, opts.rel_tol, odeint::runge_kutta_dopri5<State3>());
    const double pert = 1e-3 * std::max(r_scale, 1e-3);
    State3 s0{q_fp.real() + pert, q_fp.imag(), 0.0};
    const double dt0 = 1e-2;
    stepper.initialize(s0, 0.0, dt0);

    // section: ray from q_fp along +real axis; s = signed distance along the ray
    auto side = [&](const State3& s) { return s[1] - q_fp.imag(); };
    std::vector<double> t_ret, s_ret, div_ret;
    int direction = 0;
    State3 prev = s0;
    double t_prev = 0.0;
    bool converged = false;
    while (stepper.current_time() < opts.t_max) {
        stepper.do_step(flow);
        const State3 cur = stepper.current_state();
        const double t_cur = stepper.current_time();
        const double g0 = side(prev), g1 = side(cur);
        if ((g0 < 0.0) != (g1 < 0.0)) {
            const int dir = g1 > g0 ? 1 : -1;
            // locate crossing time by bisection on the dense output
            double lo = t_prev, hi = t_cur;
            State3 x;
            for (int k = 0; k < 80; ++k) {
                const double mid = 0.5 * (lo + hi);
                stepper.calc_state(mid, x);
                if ((side(x) < 0.0) == (g0 < 0.0)) lo = mid; else hi = mid;
            }
            stepper.calc_state(0.5 * (lo + hi), x);
            const double sdist = x[0] - q_fp.real();
            if (sdist > 0.0) {
                if (direction == 0) direction = dir;
                if (dir == direction) {
                    t_ret.push_back(0.5 * (lo + hi));
                    s_ret.push_back(sdist);
                    div_ret.push_back(x[2]);
                    const size_t n = s_ret.size();
                    if (n >= 3 && std::abs(s_ret[n - 1] - s_ret[n - 2]) <= opts.return_tol * std::max(1.0, s_ret[n - 1]) &&
                        std::abs(s_ret[n - 2] - s_ret[n - 3]) <= 10.0 * opts.return_tol * std::max(1.0, s_ret[n - 1])) {
                        converged = true;
                        break;
                    }
                }
            }
        }
        prev = cur;
        t_prev = t_cur;
        if (std::abs(cur[0]) + std::abs(cur[1]) > 1e8) break;
    }
    if (!converged) {
        // settled on a fixed point rather than a cycle
        State3 ds;
        flow(prev, ds, t_prev);
        const bool at_rest = std::hypot(ds[0], ds[1]) <= 1e-8 * std::max(1.0, std::hypot(prev[0], prev[1]));
        cyc.status = at_rest ? "stable fixed point" : "no cycle";
        return cyc;
    }
    const size_t n = t_ret.size();
    cyc.found = true;
    cyc.status = "cycle";
    cyc.period = t_ret[n - 1] - t_ret[n - 2];
    cyc.multiplier = std::exp(div_ret[n - 1] - div_ret[n - 2]);
    cyc.stable = cyc.multiplier < 1.0;

    // one more period sampled from the last crossing
    State3 x;
    stepper.calc_state(t_ret[n - 1], x);
    const double t0 = t_ret[n - 1];
    auto st2 = odeint::make_dense_output(opts.abs_tol, opts.rel_tol, odeint::runge_kutta_dopri5<State3>());
    st2.initialize(x, t0, dt0);
    State3 y;
    for (int i = 0; i <= opts.n_samples; ++i) {
        const double t = t0 + cyc.period * i / opts.n_samples;
        while (st2.current_time() < t) st2.do_step(flow);
        if (i == 0)
            y = x;  // dense output is undefined before the first step
        else
            st2.calc_state(t, y);
        if (i == opts.n_samples) {
            cyc.closure = std::hypot(y[0] - x[0], y[1] - x[1]);
            break;
        }
        cyc.t.push_back(t - t0);
        const cplx q(y[0], y[1]);
        cyc.rho.push_back(std::abs(q));
        cyc.theta.push_back(wrap_angle(std::arg(q)));
    }
    return cyc;
}

RomCycleResult rom_limit_cycles(const Rom& rom, double eps, const std::vector<double>& Omegas,
                                const SsmExpansion* ssm, const ChainSystem* cs,
                                const Observable& obs, int n_phase2, const CycleOptions& opts) {
    RomCycleResult res;
    res.cycles.resize(Omegas.size());
    for (size_t i = 0; i < Omegas.size(); ++i) res.cycles[i] = rom_cycle(rom, eps, Omegas[i], opts);
    if (!ssm || !cs) return res;
    for (const auto& cyc : res.cycles) {
        if (!cyc.found) continue;
        const auto sf = nonauto_correction(*ssm, *cs, cyc.Omega);
        const cplx forced = eps * (*sf.x0_nonauto)[obs.index];
        for (size_t j = 0; j < cyc.rho.size(); ++j) {
            const ObservableHarmonics h(*ssm, cyc.rho[j], obs.index, cyc.theta[j], forced);
            for (int m = 0; m < n_phase2; ++m) {
                const double phi = two_pi * m / n_phase2;
                res.torus.push_back({cyc.Omega, static_cast<double>(j) / cyc.rho.size(), phi, h.eval(phi)});
            }
        }
    }
    return res;
}

std::vector<Vec> torus_section(const RomCycle& cyc, const SsmExpansion& ssm_forced, double phi0,
                               int n_block) {
    std::vector<Vec> out;
    const double t = cyc.Omega > 0.0 ? phi0 / cyc.Omega : 0.0;
    for (size_t j = 0; j < cyc.rho.size(); ++j) {
        const Vec z = lift(ssm_forced, std::polar(cyc.rho[j], cyc.theta[j] + phi0), t);
        out.push_back(z.head(n_block));
    }
    return out;
}

std::pair<double, double> torus_amplitude_band(const RomCycle& cyc, const SsmExpansion& ssm_forced,
                                               const Observable& obs) {
    const cplx forced = ssm_forced.x0_nonauto ? ssm_forced.epsilon * (*ssm_forced.x0_nonauto)[obs.index] : 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (size_t j = 0; j < cyc.rho.size(); ++j) {
        const double m = ObservableHarmonics(ssm_forced, cyc.rho[j], obs.index, cyc.theta[j], forced).max(obs.n_theta);
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    return {lo, hi};
}

// ---- convergence ----

std::vector<ConvergenceEstimate> convergence_domain(
    const std::map<int, std::vector<BackbonePoint>>& backbones_by_order, double tol) {
    if (backbones_by_order.size() < 2) throw ConfigError("convergence domain needs at least two orders");
    std::vector<ConvergenceEstimate> out;
    for (const auto& [O, bb] : backbones_by_order) {
        const auto it = backbones_by_order.find(O - 2);
        if (it == backbones_by_order.end()) continue;
        const auto& lower = it->second;
        if (lower.size() != bb.size()) throw ConfigError("backbones must share one rho grid");
        ConvergenceEstimate e{O, bb.empty() ? 0.0 : bb.back().rho};
        for (size_t i = 0; i < bb.size(); ++i) {
            const double rel = std::abs(bb[i].omega - lower[i].omega) / std::abs(lower[i].omega);
            if (!(rel <= tol)) {
                e.rho_max = i == 0 ? 0.0 : bb[i - 1].rho;
                break;
            }
        }
        out.push_back(e);
    }
    return out;
}

FrcConvergence frc_order_convergence(const Rom& rom, double eps, double Omega_lo, double Omega_hi,
                                     double rho_max, int n_grid, double tol) {
    if (rom.order() < 5) throw ConfigError("FRC order comparison needs order >= 5");
    const Rom lower = rom.truncated(rom.order() - 2);
    FrcConvergence out;
    for (int c = 0; c < n_grid; ++c) {
        const double Om = Omega_lo + (Omega_hi - Omega_lo) * c / std::max(1, n_grid - 1);
        const auto top = frc_column(rom, eps, Om, rho_max, 2000);
        const auto low = frc_column(lower, eps, Om, rho_max, 2000);
        double diff = 0.0;
        double where = 0.0;
        if (top.size() != low.size()) {
            diff = 1.0;
            where = top.empty() ? (low.empty() ? 0.0 : low.back().rho) : top.back().rho;
        } else {
            for (size_t i = 0; i < top.size(); ++i) {
                const double d = std::abs(top[i].rho - low[i].rho) / top[i].rho;
                if (d > diff) {
                    diff = d;
                    where = top[i].rho;
                }
            }
        }
        if (diff > out.max_rel_diff) {
            out.max_rel_diff = diff;
            out.worst_Omega = Om;
            out.worst_rho = where;
        }
    }
    out.converged = out.max_rel_diff <= tol;
    return out;
}

// ---- reduced trajectories ----

std::vector<cplx> integrate_rom(const Rom& rom, cplx p0, const std::vector<double>& times, double tol) {
    namespace odeint = boost::numeric::odeint;
    using State2 = std::array<double, 2>;
    const cplx ef = rom.epsilon > 0.0 ? rom.epsilon * rom.effective_force(rom.Omega) : cplx(0.0);
    const double Om = rom.Omega;
    auto flow = [&](const State2& s, State2& ds, double t) {
        const cplx p(s[0], s[1]);
        const double r = std::abs(p);
        cplx dp = p * cplx(rom.a_over_rho(r), rom.b(r));
        if (ef != 0.0) dp += ef * std::polar(1.0, Om * t);
        ds[0] = dp.real();
        ds[1] = dp.imag();
    };
    std::vector<cplx> out;
    out.reserve(times.size());
    if (times.empty()) return out;
    if (times.front() < 0.0) throw ConfigError("integrate_rom: times must be non-negative");
    State2 s{p0.real(), p0.imag()};
    auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<State2>());
    stepper.initialize(s, 0.0, 1e-2);
    State2 y;
    for (double t : times) {
        while (stepper.current_time() < t) stepper.do_step(flow);
        if (t == 0.0 && stepper.current_time() == 0.0)
            y = s;
        else
            stepper.calc_state(t, y);
        out.emplace_back(y[0], y[1]);
    }
    return out;
}

// ---- simulation seeds ----

InitialHistory orbit_history(const SsmExpansion& ssm, const ChainSystem& cs, double rho, double theta,
                             double Omega) {
    const int n = cs.n();
    InitialHistory h;
    h.value = [ssm, n, rho, theta, Omega](double s) -> Vec {
        const cplx p = std::polar(rho, theta + Omega * s);
        return lift(ssm, p, s).head(n);
    };
    return h;
}

Vec orbit_chain_state(const SsmExpansion& ssm, double rho, double theta) {
    return lift(ssm, std::polar(rho, theta), 0.0);
}

}  // namespace ddessm
