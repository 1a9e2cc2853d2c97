#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ddessm/delay_model.hpp"
#include "ddessm/error.hpp"

using namespace ddessm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

double quad_triple_sine(int i, int j, int k) {
    auto f = [&](double x) { return std::sin(i * x) * std::sin(j * x) * std::sin(k * x); };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::numbers::pi, 5, 1e-14);
}

}  // namespace

TEST_CASE("duffing right-hand side by hand", "[delay_model]") {
    const DelaySystem d = make_duffing(0.2, 2.0, -4.0, 1.1);
    REQUIRE(d.n() == 2);
    Vec now(2), del(2);
    now << 1.0, 0.0;
    del << 0.0, 0.0;
    const Vec f = eval_autonomous(d, now, del);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == 2.0);  // -alpha - beta

    // delayed damping only sees x2(t - tau)
    now << 0.0, 0.0;
    del << 0.0, 1.5;
    CHECK_THAT(eval_autonomous(d, now, del)[1], WithinAbs(-0.3, 1e-15));
}

TEST_CASE("every builder has the origin as equilibrium", "[delay_model]") {
    HutchinsonConfig hc;
    hc.a = std::numbers::pi / 2 + 0.05;
    for (const DelaySystem& s : {make_duffing(0.2, 2.0, -4.0, 1.0), make_coupled_oscillators(0.015, 0.035, 0.3, -0.3, -0.1, 0.5),
                                 make_hutchinson(hc)}) {
        const Vec z = Vec::Zero(s.n());
        CHECK(eval_autonomous(s, z, z).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("dimension mismatch is rejected", "[delay_model]") {
    const DelaySystem d = make_duffing(0.2, 2.0, -4.0, 1.0);
    CHECK_THROWS_AS(eval_autonomous(d, Vec::Zero(3), Vec::Zero(2)), std::invalid_argument);
}

TEST_CASE("triple sine integrals: closed form against quadrature", "[delay_model]") {
    for (int i = 1; i <= 6; ++i)
        for (int j = 1; j <= 6; ++j)
            for (int k = 1; k <= 6; ++k) {
                const double exact = triple_sine_integral(i, j, k);
                const double quad = quad_triple_sine(i, j, k);
                CHECK_THAT(exact, WithinAbs(quad, 1e-12));
                CHECK(exact == triple_sine_integral(i, k, j));
                if ((i + j + k) % 2 == 0) CHECK(exact == 0.0);
                CHECK_THAT(galerkin_coefficient(i, j, k),
                           WithinAbs(std::pow(2.0 / std::numbers::pi, 1.5) * quad, 1e-12));
            }
    CHECK_THAT(galerkin_coefficient(1, 1, 1), WithinRel(std::pow(2.0 / std::numbers::pi, 1.5) * 4.0 / 3.0, 1e-14));
}

TEST_CASE("hutchinson M = 4 linear structure", "[delay_model]") {
    HutchinsonConfig hc;
    hc.a = std::numbers::pi / 2 + 0.05;
    const DelaySystem h = make_hutchinson(hc);
    REQUIRE(h.n() == 4);
    CHECK(h.tau() == 1.0);
    CHECK_FALSE(h.forcing().has_value());
    const double diag[] = {0.0, -3.0, -8.0, -15.0};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            CHECK(h.A_now()(i, j) == (i == j ? diag[i] : 0.0));
            CHECK_THAT(h.A_delayed()(i, j), WithinAbs(i == j ? -hc.a : 0.0, 1e-15));
        }
    for (const auto& m : h.terms()) {
        CHECK(m.degree() == 2);
        // one current and one delayed factor
        int delayed = 0;
        for (const auto& [var, p] : m.factors) delayed += var >= 4 ? p : 0;
        CHECK(delayed == 1);
    }
}

TEST_CASE("hutchinson M = 1 is the scalar delayed logistic-type equation", "[delay_model]") {
    for (double d : {1.0, 0.5}) {
        HutchinsonConfig hc{1, d, 1.6};
        const DelaySystem h = make_hutchinson(hc);
        const double c = std::pow(2.0 / std::numbers::pi, 1.5) * 4.0 / 3.0;
        Vec q(1), qt(1);
        q << 0.3;
        qt << 0.5;
        const double expected = (1.0 - d) * 0.3 - 1.6 * 0.5 - 1.6 * c * 0.5 * 0.3;
        CHECK_THAT(eval_autonomous(h, q, qt)[0], WithinAbs(expected, 1e-14));
    }
}

TEST_CASE("coupled oscillator frequencies and terms", "[delay_model]") {
    const double g = 0.3;
    const DelaySystem c = make_coupled_oscillators(0.0, 0.0, g, 0.0, 0.0, 0.5);
    Eigen::EigenSolver<Mat> es(c.A_now());
    std::vector<double> w;
    for (int i = 0; i < 4; ++i) {
        CHECK_THAT(es.eigenvalues()[i].real(), WithinAbs(0.0, 1e-12));
        if (es.eigenvalues()[i].imag() > 0) w.push_back(es.eigenvalues()[i].imag());
    }
    std::sort(w.begin(), w.end());
    REQUIRE(w.size() == 2);
    CHECK_THAT(w[0] * w[0], WithinRel(1.0 + g, 1e-12));
    CHECK_THAT(w[1] * w[1], WithinRel(1.0 + 3.0 * g, 1e-12));

    const DelaySystem full = make_coupled_oscillators(0.015, 0.035, g, -0.3, -0.1, 0.5);
    bool q1q3 = false, q3sq = false;
    for (const auto& m : full.terms()) {
        if (m.row == 1 && m.factors == std::vector<std::pair<int, int>>{{0, 1}, {2, 1}}) {
            q1q3 = true;
            CHECK_THAT(m.coeff, WithinAbs(-2.0 * g, 1e-15));
        }
        if (m.row == 3 && m.factors == std::vector<std::pair<int, int>>{{2, 2}}) {
            q3sq = true;
            CHECK_THAT(m.coeff, WithinAbs(-4.0 * g, 1e-15));
        }
        CHECK(m.row % 2 == 1);
    }
    CHECK(q1q3);
    CHECK(q3sq);

    const DelaySystem over = make_coupled_oscillators(0.015, 0.035, g, -0.3, -0.1, 0.5, 0.0, 0.0, -g);
    for (const auto& m : over.terms())
        if (m.row == 3 && m.factors == std::vector<std::pair<int, int>>{{2, 2}}) CHECK(m.coeff == -g);
}

TEST_CASE("uncoupled oscillators with every coupling switched off", "[delay_model]") {
    const DelaySystem c = make_coupled_oscillators(0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    CHECK(c.terms().empty());
    CHECK(c.A_delayed().cwiseAbs().maxCoeff() == 0.0);
    Eigen::EigenSolver<Mat> es(c.A_now());
    for (int i = 0; i < 4; ++i) CHECK_THAT(std::abs(es.eigenvalues()[i]), WithinAbs(1.0, 1e-12));
}

TEST_CASE("forcing scaling and signal", "[delay_model]") {
    const DelaySystem d = make_duffing(0.2, 2.0, -4.0, 1.0, 0.01, 1.5);
    REQUIRE(d.forced());
    for (double t : {0.0, 0.7, 3.1}) {
        const Vec g = d.forcing_at(t);
        CHECK(g[0] == 0.0);
        CHECK_THAT(g[1], WithinAbs(0.01 * std::cos(1.5 * t), 1e-15));
    }
    const DelaySystem c = make_coupled_oscillators(0.015, 0.035, 0.3, -0.3, -0.1, 0.5, 0.02, 0.9);
    const Vec g = c.forcing_at(0.4);
    CHECK_THAT(g[1], WithinAbs(0.02 * 0.81 * std::cos(0.36), 1e-15));
    CHECK_THAT(g[3], WithinAbs(0.02 * 0.81 * std::sin(0.36), 1e-15));
}

TEST_CASE("invalid problems are rejected", "[delay_model]") {
    CHECK_THROWS_AS(make_duffing(0.2, 2.0, -4.0, -1.0), ConfigError);
    CHECK_THROWS_AS(make_duffing(0.2, 2.0, -4.0, 1.0, 0.01, 0.0), ConfigError);
    CHECK_THROWS_AS(make_hutchinson(HutchinsonConfig{0, 1.0, 1.0}), ConfigError);
    Mat A = Mat::Zero(1, 1);
    CHECK_THROWS_AS(DelaySystem("bad", 1.0, A, A, {Monomial{0, {{0, 1}}, 1.0}}), ConfigError);
    CHECK_THROWS_AS(DelaySystem("bad", 1.0, A, A, {Monomial{1, {{0, 2}}, 1.0}}), ConfigError);
}
