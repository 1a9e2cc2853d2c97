#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "ddessm/chain.hpp"
#include "ddessm/error.hpp"

using namespace ddessm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

DelaySystem scalar_delay(double tau) {
    Mat a0 = Mat::Zero(1, 1), ad = Mat::Constant(1, 1, -1.0);
    return DelaySystem("scalar", tau, a0, ad, {});
}

}  // namespace

TEST_CASE("scalar chain with one link", "[chain]") {
    const ChainSystem cs = build_chain(scalar_delay(1.0), 1);
    REQUIRE(cs.dim() == 3);
    const Mat A = Mat(cs.A());
    Mat expected(3, 3);
    expected << 0, -1, 0, 0, 0, 1, 2, -2, -2;
    CHECK(A == expected);

    Vec z(3);
    z << 1, 1, 0;
    const Vec f = eval_rhs(cs, z, 0.0);
    CHECK(f == Vec((Vec(3) << -1, 0, 0).finished()));
    CHECK(eval_rhs(cs, Vec::Zero(3), 0.0).isZero(0.0));
}

TEST_CASE("chain dimensions and sparsity", "[chain]") {
    const DelaySystem d = make_duffing(0.2, 2.0, -4.0, 1.0);
    const ChainSystem cd = build_chain(d, 100);
    CHECK(cd.dim() == 402);
    const auto nnz_lin = [](const DelaySystem& s) {
        return static_cast<long>((s.A_now().array() != 0.0).count() + (s.A_delayed().array() != 0.0).count());
    };
    CHECK(cd.A().nonZeros() == 100 * 2 + 3 * 100 * 2 + nnz_lin(d));

    HutchinsonConfig hc;
    const DelaySystem h = make_hutchinson(hc);
    const ChainSystem ch = build_chain(h, 100);
    CHECK(ch.dim() == 804);
    CHECK(ch.A().nonZeros() == 100 * 4 + 3 * 100 * 4 + nnz_lin(h));

    // w rows of the Hutchinson chain: coupling 2 N^2 / tau^2 to u_{i-1} and u_i
    const Mat A = Mat(ch.A());
    for (int i = 1; i <= 100; ++i)
        for (int c = 0; c < 4; ++c) {
            const int r = ch.w_index(i, c);
            CHECK(A(r, ch.u_index(i - 1, c)) == 20000.0);
            CHECK(A(r, ch.u_index(i, c)) == -20000.0);
            CHECK(A(r, ch.w_index(i, c)) == -200.0);
            CHECK(A(ch.u_index(i, c), ch.w_index(i, c)) == 1.0);
        }
    CHECK_THROWS_AS(build_chain(d, 0), ConfigError);
}

TEST_CASE("nonlinear terms act on u0 rows through u0 and uN only", "[chain]") {
    const DelaySystem c = make_coupled_oscillators(0.015, 0.035, 0.3, -0.3, -0.1, 0.5);
    const ChainSystem cs = build_chain(c, 20);
    for (const auto& t : cs.terms()) {
        CHECK(t.row < cs.n());
        for (const auto& [var, p] : t.factors) {
            const bool u0 = var < cs.n();
            const bool uN = var >= cs.u_index(cs.N(), 0) && var < cs.u_index(cs.N(), 0) + cs.n();
            CHECK((u0 || uN));
        }
    }
    CHECK(cs.forcing_template().tail(cs.dim() - cs.n()).isZero(0.0));
}

TEST_CASE("duffing chain right-hand side and Jacobian by hand", "[chain]") {
    const ChainSystem cs = build_chain(make_duffing(0.2, 2.0, -4.0, 1.1), 100);
    Vec z = Vec::Zero(cs.dim());
    z[0] = 1.0;
    CHECK(eval_rhs(cs, z, 0.0)[1] == 2.0);
    const Mat J0 = Mat(eval_jacobian(cs, Vec::Zero(cs.dim())));
    CHECK(J0 == Mat(cs.A()));
    const Mat J = Mat(eval_jacobian(cs, z));
    CHECK(J(1, 0) == J0(1, 0) + 12.0);
    CHECK_THROWS_AS(eval_rhs(cs, Vec::Zero(5), 0.0), std::invalid_argument);
}

TEST_CASE("Jacobian against central differences", "[chain][property]") {
    HutchinsonConfig hc;
    hc.a = 1.62;
    for (const ChainSystem& cs : {build_chain(make_duffing(0.2, 2.0, -4.0, 1.1), 10),
                                  build_chain(make_coupled_oscillators(0.015, 0.035, 0.3, -0.3, -0.1, 0.5), 5),
                                  build_chain(make_hutchinson(hc), 5)}) {
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (int trial = 0; trial < 10; ++trial) {
            Vec z(cs.dim());
            for (int i = 0; i < z.size(); ++i) z[i] = U(rng);
            const Mat J = Mat(eval_jacobian(cs, z));
            const double h = 1e-6;
            double worst = 0.0;
            for (int c = 0; c < cs.dim(); ++c) {
                Vec zp = z, zm = z;
                zp[c] += h;
                zm[c] -= h;
                const Vec col = (eval_rhs(cs, zp, 0.0) - eval_rhs(cs, zm, 0.0)) / (2 * h);
                worst = std::max(worst, (col - J.col(c)).cwiseAbs().maxCoeff() / std::max(1.0, J.col(c).cwiseAbs().maxCoeff()));
            }
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("Taylor closure is consistent with smooth delay-line samples", "[chain][property]") {
    // x(t) = sin(t): the w-equation residual scales like tau / N
    const double tau = 1.0;
    std::vector<double> res;
    for (int N : {20, 40, 80, 160}) {
        const ChainSystem cs = build_chain(scalar_delay(tau), N);
        const double t = 2.0;
        Vec z(cs.dim());
        for (int i = 0; i <= N; ++i) z[cs.u_index(i, 0)] = std::sin(t - i * tau / N);
        for (int i = 1; i <= N; ++i) z[cs.w_index(i, 0)] = std::cos(t - i * tau / N);
        const Vec f = eval_rhs(cs, z, 0.0);
        double r = 0.0;
        for (int i = 1; i <= N; ++i) {
            r = std::max(r, std::abs(f[cs.w_index(i, 0)] + std::sin(t - i * tau / N)));
            CHECK(std::abs(f[cs.u_index(i, 0)] - std::cos(t - i * tau / N)) < 1e-15);
        }
        res.push_back(r);
    }
    for (size_t k = 1; k < res.size(); ++k) CHECK_THAT(res[k - 1] / res[k], WithinRel(2.0, 0.05));
    // local residual per link h^2 * r = O(h^3)
    CHECK(res.back() * std::pow(tau / 160, 2) < std::pow(tau / 160, 3));
}

TEST_CASE("forced chain adds the harmonic in u0 rows", "[chain]") {
    const ChainSystem cs = build_chain(make_duffing(0.2, 2.0, -4.0, 1.1, 0.01, 1.4), 10);
    const Vec f = eval_rhs(cs, Vec::Zero(cs.dim()), 0.3);
    CHECK_THAT(f[1], WithinAbs(0.01 * std::cos(0.42), 1e-16));
    CHECK(f.tail(cs.dim() - 2).isZero(0.0));
    const ChainSystem g = cs.with_forcing(0.02, 1.5);
    CHECK(g.epsilon() == 0.02);
    CHECK(g.Omega() == 1.5);
    CHECK(Mat(g.A()) == Mat(cs.A()));
}

TEST_CASE("matrix-market export", "[chain]") {
    const ChainSystem cs = build_chain(scalar_delay(1.0), 1);
    std::ostringstream os;
    write_matrix_market(os, cs.A());
    const std::string s = os.str();
    CHECK(s.rfind("%%MatrixMarket matrix coordinate real general\n3 3 5\n", 0) == 0);
}
