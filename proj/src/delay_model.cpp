#include "ddessm/delay_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddessm/error.hpp"

namespace ddessm {

int Monomial::degree() const {
    int d = 0;
    for (const auto& [var, power] : factors) d += power;
    return d;
}

double Monomial::evaluate(const Vec& now, const Vec& delayed) const {
    const auto n = now.size();
    double v = coeff;
    for (const auto& [var, power] : factors) {
        const double x = var < n ? now[var] : delayed[var - n];
        for (int p = 0; p < power; ++p) v *= x;
    }
    return v;
}

double Forcing::scale(double Omega) const {
    return scaling == ForcingScaling::omega_squared ? Omega * Omega : 1.0;
}

CVec Forcing::positive_frequency(double Omega) const {
    return amplitude * (0.5 * scale(Omega));
}

DelaySystem::DelaySystem(std::string name, double tau, Mat A_now, Mat A_delayed,
                         std::vector<Monomial> terms, std::optional<Forcing> forcing,
                         double epsilon, double Omega)
    : name_(std::move(name)),
      tau_(tau),
      A_now_(std::move(A_now)),
      A_delayed_(std::move(A_delayed)),
      terms_(std::move(terms)),
      forcing_(std::move(forcing)),
      epsilon_(epsilon),
      Omega_(Omega) {
    if (!(tau_ > 0.0)) throw ConfigError("delay must be positive");
    const auto n = A_now_.rows();
    if (n < 1 || A_now_.cols() != n || A_delayed_.rows() != n || A_delayed_.cols() != n)
        throw ConfigError("linear coefficient matrices must be square and of equal size");
    for (const auto& t : terms_) {
        if (t.row < 0 || t.row >= n) throw ConfigError("monomial target row out of range");
        for (const auto& [var, power] : t.factors) {
            if (var < 0 || var >= 2 * n) throw ConfigError("monomial variable out of range");
            if (power < 1) throw ConfigError("monomial powers must be positive");
        }
        if (t.degree() < 2)
            throw ConfigError("monomials must have total degree >= 2 (linear terms belong in the matrices)");
    }
    if (forcing_ && forcing_->amplitude.size() != n)
        throw ConfigError("forcing amplitude length must equal the state dimension");
    if (epsilon_ < 0.0) throw ConfigError("forcing scale epsilon must be non-negative");
    if (forcing_ && epsilon_ > 0.0 && !(Omega_ > 0.0))
        throw ConfigError("forcing frequency Omega must be positive when forcing is active");
}

DelaySystem DelaySystem::with_forcing(double epsilon, double Omega) const {
    return DelaySystem(name_, tau_, A_now_, A_delayed_, terms_, forcing_, epsilon, Omega);
}

DelaySystem DelaySystem::with_delay(double tau) const {
    return DelaySystem(name_, tau, A_now_, A_delayed_, terms_, forcing_, epsilon_, Omega_);
}

DelaySystem DelaySystem::without_nonlinearity() const {
    return DelaySystem(name_, tau_, A_now_, A_delayed_, {}, forcing_, epsilon_, Omega_);
}

Vec DelaySystem::forcing_at(double t) const {
    Vec g = Vec::Zero(n());
    if (!forced()) return g;
    const cplx phase = std::polar(1.0, Omega_ * t);
    const double s = epsilon_ * forcing_->scale(Omega_);
    for (int i = 0; i < n(); ++i) g[i] = s * (forcing_->amplitude[i] * phase).real();
    return g;
}

Vec InitialHistory::derivative_at(double s, double tau) const {
    if (derivative) return derivative(s);
    // one-sided near the ends of [-tau, 0]
    const double h = 1e-6 * std::max(1.0, tau);
    const double lo = std::max(-tau, s - h);
    const double hi = std::min(0.0, s + h);
    return (value(hi) - value(lo)) / (hi - lo);
}

InitialHistory InitialHistory::constant(Vec x0) {
    const auto n = x0.size();
    InitialHistory h;
    h.value = [x0](double) { return x0; };
    h.derivative = [n](double) { return Vec(Vec::Zero(n)); };
    return h;
}

DelaySystem make_duffing(double delta, double alpha, double beta, double tau, double epsilon,
                         double Omega) {
    Mat A0(2, 2);
    A0 << 0.0, 1.0, -alpha, 0.0;
    Mat AN = Mat::Zero(2, 2);
    AN(1, 1) = -delta;
    std::vector<Monomial> terms;
    if (beta != 0.0) terms.push_back({1, {{0, 3}}, -beta});
    Forcing f{CVec::Zero(2), ForcingScaling::constant};
    f.amplitude[1] = 1.0;
    return DelaySystem("duffing", tau, A0, AN, std::move(terms), f, epsilon, Omega);
}

DelaySystem make_coupled_oscillators(double mu1, double mu2, double gamma, double beta1,
                                     double beta2, double tau, double epsilon, double Omega,
                                     std::optional<double> q3_squared_coeff) {
    const double w1sq = 1.0 + gamma;
    const double w2sq = 1.0 + 3.0 * gamma;
    Mat A0 = Mat::Zero(4, 4);
    A0(0, 1) = 1.0;
    A0(1, 0) = -w1sq;
    A0(1, 1) = -mu1;
    A0(2, 3) = 1.0;
    A0(3, 2) = -w2sq;
    A0(3, 3) = -mu2;
    Mat AN = Mat::Zero(4, 4);
    AN(1, 0) = -beta1;
    AN(1, 1) = -beta2;
    AN(3, 2) = -beta1;
    AN(3, 3) = -beta2;

    std::vector<Monomial> terms;
    auto add = [&](int row, std::vector<std::pair<int, int>> f, double c) {
        if (c != 0.0) terms.push_back({row, std::move(f), c});
    };
    // row 2: -2g q1 q3 - g q1 q3^2 - g q1^3
    add(1, {{0, 1}, {2, 1}}, -2.0 * gamma);
    add(1, {{0, 1}, {2, 2}}, -gamma);
    add(1, {{0, 3}}, -gamma);
    // row 4: -g q3^2 - 3g q3^2 - g q1^2 q3 - g q3^3
    add(3, {{2, 2}}, q3_squared_coeff.value_or(-(gamma + 3.0 * gamma)));
    add(3, {{0, 2}, {2, 1}}, -gamma);
    add(3, {{2, 3}}, -gamma);

    Forcing f{CVec::Zero(4), ForcingScaling::omega_squared};
    f.amplitude[1] = 1.0;
    f.amplitude[3] = cplx(0.0, -1.0);  // sin(Omega t) = Re(-i e^{i Omega t})
    return DelaySystem("coupled", tau, A0, AN, std::move(terms), f, epsilon, Omega);
}

namespace {

// \int_0^pi sin(q x) dx for integer q
double sine_integral(int q) {
    if (q == 0 || q % 2 == 0) return 0.0;
    return 2.0 / static_cast<double>(q);
}

// \int_0^pi sin(c x) cos(m x) dx
double sin_cos_integral(int c, int m) {
    return 0.5 * (sine_integral(c + m) + sine_integral(c - m));
}

}  // namespace

double triple_sine_integral(int i, int j, int k) {
    // sorted so that every permutation gives the same bits
    int s[3] = {i, j, k};
    std::sort(s, s + 3);
    // sin(ix) sin(jx) = [cos((i-j)x) - cos((i+j)x)] / 2
    return 0.5 * (sin_cos_integral(s[2], s[0] - s[1]) - sin_cos_integral(s[2], s[0] + s[1]));
}

double galerkin_coefficient(int i, int j, int k) {
    const double norm = std::pow(2.0 / std::numbers::pi, 1.5);
    return norm * triple_sine_integral(i, j, k);
}

DelaySystem make_hutchinson(const HutchinsonConfig& cfg) {
    if (cfg.M < 1) throw ConfigError("Hutchinson truncation M must be >= 1");
    if (!(cfg.d > 0.0)) throw ConfigError("Hutchinson diffusion d must be positive");
    if (!(cfg.a > 0.0)) throw ConfigError("Hutchinson coupling a must be positive");
    const int M = cfg.M;
    Mat A0 = Mat::Zero(M, M);
    for (int k = 1; k <= M; ++k) A0(k - 1, k - 1) = 1.0 - cfg.d * k * k;
    Mat AN = -cfg.a * Mat::Identity(M, M);

    std::vector<Monomial> terms;
    for (int i = 1; i <= M; ++i)
        for (int j = 1; j <= M; ++j)
            for (int k = 1; k <= M; ++k) {
                const double c = galerkin_coefficient(i, j, k);
                if (c == 0.0) continue;
                // -a q_j(t - 1) q_k(t)
                terms.push_back({i - 1, {{M + j - 1, 1}, {k - 1, 1}}, -cfg.a * c});
            }
    return DelaySystem("hutchinson", 1.0, A0, AN, std::move(terms));
}

Vec eval_autonomous(const DelaySystem& sys, const Vec& x_now, const Vec& x_delayed) {
    if (x_now.size() != sys.n() || x_delayed.size() != sys.n())
        throw std::invalid_argument("eval_autonomous: state dimension mismatch");
    Vec out = sys.A_now() * x_now + sys.A_delayed() * x_delayed;
    for (const auto& t : sys.terms()) out[t.row] += t.evaluate(x_now, x_delayed);
    return out;
}

}  // namespace ddessm
