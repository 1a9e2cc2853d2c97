#pragma once

// Delay differential equations with polynomial right-hand sides:
//
//   x'(t) = A_now x(t) + A_delayed x(t - tau) + f_nl(x(t), x(t - tau)) + eps g(Omega t)
//
// plus builders for the delayed Duffing oscillator, the delay-coupled
// oscillator pair and the Galerkin-reduced Hutchinson equation.

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ddessm/types.hpp"

namespace ddessm {

/// One polynomial term `coeff * prod var^power` added to equation `row`.
/// Variables 0..n-1 are x(t); variables n..2n-1 are x(t - tau).
struct Monomial {
    int row = 0;
    std::vector<std::pair<int, int>> factors;  // (variable, power), power >= 1
    double coeff = 0.0;

    int degree() const;
    double evaluate(const Vec& now, const Vec& delayed) const;
};

/// How the forcing amplitude depends on the excitation frequency.
/// `omega_squared` models base excitation (amplitude grows like Omega^2).
enum class ForcingScaling { constant, omega_squared };

/// g(Omega t) = scale(Omega) * Re(amplitude * exp(i Omega t)).
struct Forcing {
    CVec amplitude;
    ForcingScaling scaling = ForcingScaling::constant;

    double scale(double Omega) const;
    /// Complex amplitude at frequency +Omega (half of the real-signal amplitude).
    CVec positive_frequency(double Omega) const;
};

class DelaySystem {
public:
    DelaySystem(std::string name, double tau, Mat A_now, Mat A_delayed,
                std::vector<Monomial> terms, std::optional<Forcing> forcing = std::nullopt,
                double epsilon = 0.0, double Omega = 0.0);

    const std::string& name() const { return name_; }
    int n() const { return static_cast<int>(A_now_.rows()); }
    double tau() const { return tau_; }
    const Mat& A_now() const { return A_now_; }
    const Mat& A_delayed() const { return A_delayed_; }
    const std::vector<Monomial>& terms() const { return terms_; }
    const std::optional<Forcing>& forcing() const { return forcing_; }
    double epsilon() const { return epsilon_; }
    double Omega() const { return Omega_; }
    bool forced() const { return forcing_.has_value() && epsilon_ > 0.0; }

    DelaySystem with_forcing(double epsilon, double Omega) const;
    DelaySystem with_delay(double tau) const;
    DelaySystem without_nonlinearity() const;

    /// eps * g(Omega t); zero when unforced.
    Vec forcing_at(double t) const;

private:
    std::string name_;
    double tau_;
    Mat A_now_;
    Mat A_delayed_;
    std::vector<Monomial> terms_;
    std::optional<Forcing> forcing_;
    double epsilon_;
    double Omega_;
};

/// Initial function on [-tau, 0]. The derivative is finite-differenced when absent.
struct InitialHistory {
    std::function<Vec(double)> value;
    std::function<Vec(double)> derivative;

    Vec derivative_at(double s, double tau) const;
    static InitialHistory constant(Vec x0);
};

struct HutchinsonConfig {
    int M = 4;
    double d = 1.0;
    double a = 1.5707963267948966;
};

/// x'' = -delta x'(t - tau) - alpha x - beta x^3 + eps cos(Omega t), first-order form.
DelaySystem make_duffing(double delta, double alpha, double beta, double tau,
                         double epsilon = 0.0, double Omega = 0.0);

/// Two oscillators with quadratic/cubic coupling, delayed feedback
/// beta1 q(t - tau) + beta2 q'(t - tau), and base excitation eps Omega^2 (cos, sin).
/// `q3_squared_coeff` overrides the literal -(gamma + 3 gamma) coefficient of q3^2.
DelaySystem make_coupled_oscillators(double mu1, double mu2, double gamma, double beta1,
                                     double beta2, double tau, double epsilon = 0.0,
                                     double Omega = 0.0,
                                     std::optional<double> q3_squared_coeff = std::nullopt);

/// Galerkin projection of u_t = d u_xx + u - a u(t-1) - a u(t-1) u onto M sine modes.
DelaySystem make_hutchinson(const HutchinsonConfig& cfg);

/// \int_0^pi sin(i x) sin(j x) sin(k x) dx, closed form.
double triple_sine_integral(int i, int j, int k);

/// <beta_i, beta_j beta_k> with beta_k(x) = sqrt(2/pi) sin(k x).
double galerkin_coefficient(int i, int j, int k);

/// A_now x + A_delayed x_delayed + f_nl(x, x_delayed).
Vec eval_autonomous(const DelaySystem& sys, const Vec& x_now, const Vec& x_delayed);

}  // namespace ddessm
