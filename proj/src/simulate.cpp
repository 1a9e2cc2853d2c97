#include "ddessm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/numeric/odeint.hpp>
#include <Eigen/SparseLU>

#include "ddessm/error.hpp"

namespace ddessm {

const char* to_string(TrajectorySource s) {
    switch (s) {
        case TrajectorySource::dde: return "DDE";
        case TrajectorySource::chain: return "chain-ODE";
        case TrajectorySource::rom: return "ROM";
    }
    return "?";
}

const char* to_string(ResponseKind k) {
    switch (k) {
        case ResponseKind::decay: return "decay";
        case ResponseKind::periodic: return "periodic";
        case ResponseKind::quasi_periodic: return "quasi-periodic";
        case ResponseKind::inconclusive: return "inconclusive";
    }
    return "?";
}

// ---- Trajectory ----

namespace {

struct Hermite {
    double h00, h10, h01, h11;
    explicit Hermite(double s) {
        const double s2 = s * s, s3 = s2 * s;
        h00 = 2 * s3 - 3 * s2 + 1;
        h10 = s3 - 2 * s2 + s;
        h01 = -2 * s3 + 3 * s2;
        h11 = s3 - s2;
    }
};

struct HermiteD {
    double d00, d10, d01, d11;  // derivative w.r.t. s
    explicit HermiteD(double s) {
        const double s2 = s * s;
        d00 = 6 * s2 - 6 * s;
        d10 = 3 * s2 - 4 * s + 1;
        d01 = -6 * s2 + 6 * s;
        d11 = 3 * s2 - 2 * s;
    }
};

size_t segment_of(const std::vector<double>& times, double t) {
    if (t <= times.front()) return 0;
    if (t >= times.back()) return times.size() - 2;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    return static_cast<size_t>(it - times.begin()) - 1;
}

}  // namespace

int Trajectory::column(int index) const {
    if (coordinates.empty()) return index;
    for (size_t i = 0; i < coordinates.size(); ++i)
        if (coordinates[i] == index) return static_cast<int>(i);
    return -1;
}

Vec Trajectory::at(double t) const {
    if (times.size() == 1) return states.front();
    const size_t i = segment_of(times, t);
    const double h = times[i + 1] - times[i];
    const Hermite H((t - times[i]) / h);
    return H.h00 * states[i] + H.h10 * h * derivatives[i] + H.h01 * states[i + 1] +
           H.h11 * h * derivatives[i + 1];
}

double Trajectory::at(double t, int col) const {
    if (times.size() == 1) return states.front()[col];
    const size_t i = segment_of(times, t);
    const double h = times[i + 1] - times[i];
    const Hermite H((t - times[i]) / h);
    return H.h00 * states[i][col] + H.h10 * h * derivatives[i][col] + H.h01 * states[i + 1][col] +
           H.h11 * h * derivatives[i + 1][col];
}

double Trajectory::derivative_at(double t, int col) const {
    if (times.size() == 1) return derivatives.front()[col];
    const size_t i = segment_of(times, t);
    const double h = times[i + 1] - times[i];
    const HermiteD D((t - times[i]) / h);
    return (D.d00 * states[i][col] + D.d10 * h * derivatives[i][col] + D.d01 * states[i + 1][col] +
            D.d11 * h * derivatives[i + 1][col]) /
           h;
}

namespace {

class Recorder {
public:
    Recorder(Trajectory& tr, const std::vector<int>& record, double from)
        : tr_(tr), record_(record), from_(from) {
        tr_.coordinates = record;
    }
    void push(double t, const Vec& x, const Vec& dx) {
        if (t < from_) return;
        if (record_.empty()) {
            tr_.times.push_back(t);
            tr_.states.push_back(x);
            tr_.derivatives.push_back(dx);
            return;
        }
        Vec s(static_cast<Eigen::Index>(record_.size())), d(s.size());
        for (size_t i = 0; i < record_.size(); ++i) {
            s[static_cast<Eigen::Index>(i)] = x[record_[i]];
            d[static_cast<Eigen::Index>(i)] = dx[record_[i]];
        }
        tr_.times.push_back(t);
        tr_.states.push_back(std::move(s));
        tr_.derivatives.push_back(std::move(d));
    }

private:
    Trajectory& tr_;
    std::vector<int> record_;
    double from_;
};

void check_record(const std::vector<int>& record, int dim) {
    for (int r : record)
        if (r < 0 || r >= dim) throw ConfigError("recorded coordinate " + std::to_string(r) + " out of range");
}

[[noreturn]] void blowup_error(const char* what, double t, double norm) {
    std::ostringstream os;
    os << what << ": state norm " << norm << " exceeded the blow-up limit at t = " << t;
    throw NumericalError(os.str());
}

}  // namespace

// ---- method of steps ----

Trajectory integrate_dde(const DelaySystem& sys, const InitialHistory& hist, double t_end, double dt,
                         const DdeOptions& opts) {
    const double tau = sys.tau();
    if (!(dt > 0.0) || !(t_end > 0.0)) throw ConfigError("integrate_dde needs dt > 0 and t_end > 0");
    const double ratio = tau / dt;
    const long m = std::lround(ratio);
    if (m < 20 || std::abs(ratio - static_cast<double>(m)) > 1e-9 * ratio)
        throw ConfigError("integrate_dde: dt must equal tau / m for an integer m >= 20");
    const double h = tau / static_cast<double>(m);
    const int n = sys.n();
    check_record(opts.record, n);

    const long steps = static_cast<long>(std::ceil(t_end / h - 1e-9));
    std::vector<Vec> X, D;  // full nodes, needed for delayed lookups
    X.reserve(static_cast<size_t>(steps) + 1);
    D.reserve(static_cast<size_t>(steps) + 1);

    // x(t_j + c h - tau) with t_j = j h
    auto delayed = [&](long j, double c) -> Vec {
        const long i = j - m;
        if (i < 0) return hist.value(std::clamp((static_cast<double>(i) + c) * h, -tau, 0.0));
        if (c == 0.0) return X[static_cast<size_t>(i)];
        if (c == 1.0) return X[static_cast<size_t>(i + 1)];
        const Hermite H(c);
        const auto a = static_cast<size_t>(i), b = a + 1;
        return H.h00 * X[a] + H.h10 * h * D[a] + H.h01 * X[b] + H.h11 * h * D[b];
    };
    auto rhs = [&](double t, const Vec& x, const Vec& xd) -> Vec {
        Vec r = eval_autonomous(sys, x, xd);
        if (sys.forced()) r += sys.forcing_at(t);
        return r;
    };

    Trajectory tr;
    tr.source = TrajectorySource::dde;
    Recorder rec(tr, opts.record, opts.record_from);

    X.push_back(hist.value(0.0));
    D.push_back(rhs(0.0, X[0], delayed(0, 0.0)));
    for (long j = 0; j < steps; ++j) {
        const double t = static_cast<double>(j) * h;
        const Vec& x = X[static_cast<size_t>(j)];
        const Vec& k1 = D[static_cast<size_t>(j)];
        const Vec xm = delayed(j, 0.5);
        const Vec k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1, xm);
        const Vec k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2, xm);
        const Vec k4 = rhs(t + h, x + h * k3, delayed(j, 1.0));
        Vec xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double nrm = xn.norm();
        if (!(nrm <= opts.blowup)) blowup_error("integrate_dde", t + h, nrm);
        X.push_back(std::move(xn));
        // derivative at the new node (also the next step's first stage)
        D.push_back(rhs(t + h, X.back(), delayed(j + 1, 0.0)));
    }
    for (size_t i = 0; i < X.size(); ++i) rec.push(static_cast<double>(i) * h, X[i], D[i]);
    if (tr.empty()) throw ConfigError("integrate_dde: record_from lies beyond t_end");
    return tr;
}

// ---- chain ODE ----

namespace {

// Hairer-Wanner SDIRK4 (gamma = 1/4), stiffly accurate, embedded order 3.
constexpr int kStages = 5;
constexpr double kGamma = 0.25;
constexpr double kC[kStages] = {0.25, 0.75, 11.0 / 20.0, 0.5, 1.0};
constexpr double kA[kStages][kStages] = {
    {0.25, 0, 0, 0, 0},
    {0.5, 0.25, 0, 0, 0},
    {17.0 / 50.0, -1.0 / 25.0, 0.25, 0, 0},
    {371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.25, 0},
    {25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0, 0.25}};
constexpr double kBhat[kStages] = {59.0 / 48.0, -17.0 / 96.0, 225.0 / 32.0, -85.0 / 12.0, 0.0};

double scaled_norm(const Vec& e, const Vec& y0, const Vec& y1, double tol) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        const double sc = tol + tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
        const double r = e[i] / sc;
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(e.size()));
}

Trajectory chain_sdirk(const ChainSystem& cs, const Vec& z0, double t_end, double tol,
                       const ChainOptions& opts, ChainStats& st) {
    const int D = cs.dim();
    Trajectory tr;
    tr.source = TrajectorySource::chain;
    Recorder rec(tr, opts.record, opts.record_from);

    SpMat I(D, D);
    I.setIdentity();
    Eigen::SparseLU<SpMat> lu;
    bool analyzed = false;

    double t = 0.0;
    Vec y = z0;
    Vec fy = eval_rhs(cs, y, t);
    rec.push(t, y, fy);
    double h = std::min({opts.h0, opts.h_max, t_end});
    bool last_rejected = false;
    std::vector<Vec> F(kStages, Vec(D));
    const double newton_tol = 0.03;

    while (t < t_end) {
        if (st.accepted + st.rejected >= opts.max_steps)
            throw NumericalError("integrate_chain: step limit reached at t = " + std::to_string(t));
        if (h < opts.h_min) throw NumericalError("integrate_chain: step size underflow at t = " + std::to_string(t));
        if (t + h > t_end) h = t_end - t;

        const SpMat J = eval_jacobian(cs, y);
        const SpMat M = I - (h * kGamma) * J;
        if (!analyzed) {
            lu.analyzePattern(M);
            analyzed = true;
        }
        lu.factorize(M);
        ++st.factorizations;
        if (lu.info() != Eigen::Success) {
            ++st.newton_failures;
            h *= 0.5;
            continue;
        }

        bool ok = true;
        Vec Y = y;
        for (int i = 0; i < kStages && ok; ++i) {
            Vec base = y;
            for (int j = 0; j < i; ++j) base += (h * kA[i][j]) * F[static_cast<size_t>(j)];
            Y = base + (h * kGamma) * (i == 0 ? fy : F[static_cast<size_t>(i - 1)]);
            const double ti = t + kC[i] * h;
            double prev = 0.0;
            bool conv = false;
            for (int it = 0; it < 8; ++it) {
                const Vec G = Y - base - (h * kGamma) * eval_rhs(cs, Y, ti);
                const Vec dY = lu.solve(-G);
                Y += dY;
                const double nd = scaled_norm(dY, y, Y, tol);
                if (!std::isfinite(nd)) break;
                if (it > 0 && nd > 0.9 * prev && nd > newton_tol) break;
                prev = nd;
                if (nd <= newton_tol) {
                    conv = true;
                    break;
                }
            }
            if (!conv) {
                ok = false;
                break;
            }
            F[static_cast<size_t>(i)] = (Y - base) / (h * kGamma);
        }
        if (!ok) {
            ++st.newton_failures;
            ++st.rejected;
            h *= 0.5;
            last_rejected = true;
            continue;
        }

        Vec err = Vec::Zero(D);
        for (int i = 0; i < kStages; ++i) err += (h * (kA[4][i] - kBhat[i])) * F[static_cast<size_t>(i)];
        err = lu.solve(err);
        const double en = scaled_norm(err, y, Y, tol);
        double fac = 0.9 * std::pow(std::max(en, 1e-10), -0.25);
        fac = std::clamp(fac, 0.2, last_rejected ? 1.0 : 5.0);
        if (en <= 1.0) {
            t += h;
            y = Y;
            fy = eval_rhs(cs, y, t);
            const double nrm = y.norm();
            if (!(nrm <= opts.blowup)) blowup_error("integrate_chain", t, nrm);
            rec.push(t, y, fy);
            ++st.accepted;
            last_rejected = false;
        } else {
            ++st.rejected;
            last_rejected = true;
        }
        h = std::min(h * fac, opts.h_max);
    }
    return tr;
}

Trajectory chain_dopri(const ChainSystem& cs, const Vec& z0, double t_end, double tol,
                       const ChainOptions& opts, ChainStats& st) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const int D = cs.dim();
    Trajectory tr;
    tr.source = TrajectorySource::chain;
    Recorder rec(tr, opts.record, opts.record_from);

    auto sys = [&](const State& x, State& dx, double t) {
        const Eigen::Map<const Vec> xm(x.data(), D);
        Eigen::Map<Vec>(dx.data(), D) = eval_rhs(cs, xm, t);
    };
    auto observer = [&](const State& x, double t) {
        const Eigen::Map<const Vec> xm(x.data(), D);
        const double nrm = xm.norm();
        if (!(nrm <= opts.blowup)) blowup_error("integrate_chain", t, nrm);
        rec.push(t, xm, eval_rhs(cs, xm, t));
        ++st.accepted;
        if (st.accepted > opts.max_steps)
            throw NumericalError("integrate_chain: step limit reached at t = " + std::to_string(t));
    };
    State x(z0.data(), z0.data() + D);
    auto stepper = odeint::make_controlled(tol, tol, odeint::runge_kutta_dopri5<State>());
    odeint::integrate_adaptive(stepper, sys, x, 0.0, t_end, std::min(opts.h0, opts.h_max), observer);
    return tr;
}

}  // namespace

Trajectory integrate_chain(const ChainSystem& cs, const Vec& z0, double t_end, double tol,
                           const ChainOptions& opts, ChainStats* stats) {
    if (!(tol >= 1e-12 && tol <= 1e-3)) throw ConfigError("integrate_chain: tol must lie in [1e-12, 1e-3]");
    if (z0.size() != cs.dim()) throw ConfigError("integrate_chain: initial state has the wrong dimension");
    if (!(t_end > 0.0)) throw ConfigError("integrate_chain: t_end must be positive");
    check_record(opts.record, cs.dim());
    ChainStats local;
    ChainStats& st = stats ? *stats : local;
    Trajectory tr = opts.method == ChainMethod::sdirk4 ? chain_sdirk(cs, z0, t_end, tol, opts, st)
                                                      : chain_dopri(cs, z0, t_end, tol, opts, st);
    if (tr.empty()) throw ConfigError("integrate_chain: record_from lies beyond t_end");
    return tr;
}

// ---- post-processing ----

std::vector<std::pair<double, double>> find_peaks(const Trajectory& traj, int col, double t_from) {
    std::vector<std::pair<double, double>> out;
    for (size_t i = 0; i + 1 < traj.times.size(); ++i) {
        if (traj.times[i + 1] < t_from) continue;
        const double h = traj.times[i + 1] - traj.times[i];
        const double y0 = traj.states[i][col], y1 = traj.states[i + 1][col];
        const double m0 = traj.derivatives[i][col], m1 = traj.derivatives[i + 1][col];
        if (!(m0 > 0.0 && m1 <= 0.0)) continue;
        // dp/ds = A s^2 + B s + C on the Hermite segment
        const double A = 6 * y0 + 3 * h * m0 - 6 * y1 + 3 * h * m1;
        const double B = -6 * y0 - 4 * h * m0 + 6 * y1 - 2 * h * m1;
        const double C = h * m0;
        double s;
        if (std::abs(A) < 1e-14 * (std::abs(B) + std::abs(C))) {
            s = -C / B;
        } else {
            const double disc = std::max(B * B - 4 * A * C, 0.0);
            const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
            const double r1 = q / A, r2 = (q != 0.0) ? C / q : r1;
            s = (r1 >= 0.0 && r1 <= 1.0) ? r1 : r2;
        }
        s = std::clamp(s, 0.0, 1.0);
        const double t = traj.times[i] + s * h;
        if (t < t_from) continue;
        out.emplace_back(t, traj.at(t, col));
    }
    return out;
}

SteadyState steady_state(const Trajectory& traj, int index, const SteadyStateOptions& opts) {
    SteadyState ss;
    const int col = traj.column(index);
    if (col < 0) throw ConfigError("steady_state: coordinate " + std::to_string(index) + " was not recorded");
    if (traj.times.size() < 3) throw ConfigError("steady_state: trajectory too short");
    const double t_from = traj.t_begin() + opts.transient_fraction * (traj.t_end() - traj.t_begin());

    double maxabs = 0.0;
    for (size_t i = 0; i < traj.times.size(); ++i)
        if (traj.times[i] >= t_from) maxabs = std::max(maxabs, std::abs(traj.states[i][col]));
    const auto peaks = find_peaks(traj, col, t_from);
    ss.n_peaks = static_cast<int>(peaks.size());
    if (maxabs <= opts.decay_floor) {
        ss.kind = ResponseKind::decay;
        ss.note = "response at rest";
        return ss;
    }
    if (peaks.size() < 6) {
        ss.note = "too few peaks after the transient";
        return ss;
    }

    double pmin = peaks.front().second, pmax = pmin;
    for (const auto& p : peaks) {
        pmin = std::min(pmin, p.second);
        pmax = std::max(pmax, p.second);
    }
    ss.band = {pmin, pmax};
    const double scale = std::max(std::abs(pmax), std::abs(pmin));

    // periodic: peaks repeat with some lag
    for (int lag = 1; lag <= opts.max_peak_lag && lag + 2 < static_cast<int>(peaks.size()); ++lag) {
        double dev = 0.0;
        for (size_t k = 0; k + static_cast<size_t>(lag) < peaks.size(); ++k)
            dev = std::max(dev, std::abs(peaks[k + static_cast<size_t>(lag)].second - peaks[k].second));
        if (dev <= opts.periodic_tol * scale) {
            ss.kind = ResponseKind::periodic;
            ss.amplitude = pmax;
            const size_t cycles = (peaks.size() - 1) / static_cast<size_t>(lag);
            ss.period = (peaks[cycles * static_cast<size_t>(lag)].first - peaks.front().first) /
                        static_cast<double>(cycles);
            return ss;
        }
    }

    // trend of the envelope
    const size_t K = peaks.size();
    const size_t q = std::max<size_t>(K / 10, 2);
    double head = 0.0, tail = 0.0;
    for (size_t k = 0; k < q; ++k) {
        head = std::max(head, peaks[k].second);
        tail = std::max(tail, peaks[K - 1 - k].second);
    }
    {
        double st = 0, sy = 0, stt = 0, sty = 0;
        int cnt = 0;
        for (const auto& [t, p] : peaks)
            if (p > 0.0) {
                const double ly = std::log(p);
                st += t, sy += ly, stt += t * t, sty += t * ly;
                ++cnt;
            }
        if (cnt > 2) ss.decay_rate = (cnt * sty - st * sy) / (cnt * stt - st * st);
    }
    double mean_spacing = (peaks.back().first - peaks.front().first) / static_cast<double>(K - 1);
    if (head > 0.0 && tail < 0.99 * head && ss.decay_rate < 0.0) {
        ss.kind = ResponseKind::decay;
        ss.period = mean_spacing;
        return ss;
    }
    if (tail > 1.01 * head && ss.decay_rate > 0.0) {
        ss.note = "growing envelope";
        return ss;
    }

    // peak spread shrinking between halves: still converging to a cycle
    auto spread = [&](size_t a, size_t b) {
        double lo = peaks[a].second, hi = lo;
        for (size_t k = a; k < b; ++k) {
            lo = std::min(lo, peaks[k].second);
            hi = std::max(hi, peaks[k].second);
        }
        return hi - lo;
    };
    if (spread(K / 2, K) < 0.5 * spread(0, K / 2)) {
        ss.note = "peak spread still shrinking";
        ss.period = mean_spacing;
        return ss;
    }

    ss.kind = ResponseKind::quasi_periodic;
    ss.amplitude = pmax;
    ss.period = mean_spacing;
    std::vector<double> tops;
    for (size_t k = 1; k + 1 < K; ++k)
        if (peaks[k].second > peaks[k - 1].second && peaks[k].second >= peaks[k + 1].second)
            tops.push_back(peaks[k].first);
    if (tops.size() >= 2)
        ss.modulation_period = (tops.back() - tops.front()) / static_cast<double>(tops.size() - 1);
    return ss;
}

std::vector<Vec> poincare_section(const Trajectory& traj, double Omega, double t_from, double t0) {
    if (!(Omega > 0.0)) throw ConfigError("poincare_section needs Omega > 0");
    const double T = 2.0 * std::numbers::pi / Omega;
    const double lo = std::max(t_from, traj.t_begin());
    std::vector<Vec> out;
    for (long k = static_cast<long>(std::ceil((lo - t0) / T - 1e-12));; ++k) {
        const double t = t0 + static_cast<double>(k) * T;
        if (t > traj.t_end()) break;
        if (t < lo) continue;
        out.push_back(traj.at(t));
    }
    return out;
}

double hausdorff_distance(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    if (a.empty() || b.empty()) throw ConfigError("hausdorff_distance of an empty set");
    auto directed = [](const std::vector<Vec>& x, const std::vector<Vec>& y) {
        double worst = 0.0;
        for (const auto& p : x) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : y) best = std::min(best, (p - q).squaredNorm());
            worst = std::max(worst, best);
        }
        return std::sqrt(worst);
    };
    return std::max(directed(a, b), directed(b, a));
}

double diameter(const std::vector<Vec>& pts) {
    double d = 0.0;
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, (pts[i] - pts[j]).squaredNorm());
    return std::sqrt(d);
}

}  // namespace ddessm
