#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <random>

#include "ddessm/error.hpp"
#include "ddessm/ssm.hpp"
#include "support.hpp"

using namespace ddessm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

CVec complex_lift(const SsmExpansion& s, cplx p) {
    CVec z = CVec::Zero(s.dim());
    for (int m = 1; m <= s.order; ++m)
        for (int l = 0; l <= m; ++l) z += s.coeff(m - l, l) * (std::pow(p, m - l) * std::pow(std::conj(p), l));
    return z;
}

DelaySystem linear_oscillator() {
    Mat a0(2, 2), ad(2, 2);
    a0 << 0, 1, -1, -0.1;
    ad << 0, 0, -0.2, 0;
    return DelaySystem("linear", 1.0, a0, ad, {});
}

}  // namespace

TEST_CASE("tangency and reality of the expansion", "[ssm][property]") {
    const SsmExpansion& s = testing::duffing(1.1).ssm;
    CHECK(s.coeff(1, 0) == s.master.v);
    CHECK(s.coeff(0, 1) == CVec(s.master.v.conjugate()));
    for (int m = 1; m <= s.order; ++m)
        for (int l = 0; l <= m; ++l) CHECK(s.coeff(l, m - l) == CVec(s.coeff(m - l, l).conjugate()));
    // cubic-only field: even total degrees vanish
    for (int m = 2; m <= s.order; m += 2)
        for (int l = 0; l <= m; ++l) CHECK(s.coeff(m - l, l).norm() == 0.0);
}

TEST_CASE("lift of conjugate pairs is real", "[ssm][property]") {
    const SsmExpansion& s = testing::duffing(1.1).ssm;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> R(0.0, 5.0), T(0.0, 6.283185307179586);
    for (int i = 0; i < 20; ++i) {
        const cplx p = std::polar(R(rng), T(rng));
        const CVec z = complex_lift(s, p);
        CHECK(z.imag().norm() <= 1e-12 * std::max(1.0, z.norm()));
        CHECK((lift(s, p) - z.real()).norm() <= 1e-12 * std::max(1.0, z.norm()));
        CHECK_THAT(lift_coordinate(s, p, 1), WithinAbs(z.real()[1], 1e-12 * std::max(1.0, z.norm())));
    }
    CHECK(lift(s, 0.0).isZero(0.0));
}

TEST_CASE("linear system has a flat manifold", "[ssm]") {
    const auto r = testing::reduce(linear_oscillator(), 50, 7);
    for (const cplx& g : r.ssm.gamma) CHECK(g == 0.0);
    for (int m = 2; m <= 7; ++m)
        for (int l = 0; l <= m; ++l) CHECK(r.ssm.coeff(m - l, l).norm() == 0.0);
    const cplx p = std::polar(0.8, 0.4);
    CHECK((lift(r.ssm, p) - 2.0 * (p * r.master.v).real()).norm() < 1e-15);
    CHECK(r.rom.a_odd.size() == 4);
    for (size_t j = 1; j < r.rom.a_odd.size(); ++j) {
        CHECK(r.rom.a_odd[j] == 0.0);
        CHECK(r.rom.b_even[j] == 0.0);
    }
}

TEST_CASE("reduced polynomials start at the master eigenvalue", "[ssm]") {
    for (const testing::Reduced* r : {&testing::duffing(1.1), &testing::coupled_post_hopf(), &testing::hutchinson_post_hopf()}) {
        INFO(r->sys.name());
        CHECK_THAT(r->rom.a_odd[0], WithinAbs(r->master.lambda.real(), 1e-8));
        CHECK_THAT(r->rom.b_even[0], WithinAbs(r->master.lambda.imag(), 1e-8));
        for (size_t j = 1; j < r->rom.a_odd.size(); ++j) {
            CHECK(r->rom.a_odd[j] == r->ssm.gamma[j - 1].real());
            CHECK(r->rom.b_even[j] == r->ssm.gamma[j - 1].imag());
        }
    }
    const Rom& d = testing::duffing(1.1).rom;
    CHECK_THAT(d.a_odd[0], WithinAbs(0.0102, 1e-4));
    CHECK_THAT(d.b_even[0], WithinAbs(1.516, 1e-3));
    const Rom& c = testing::coupled_post_hopf().rom;
    CHECK_THAT(c.a_odd[0], WithinAbs(0.001039, 1e-5));
    CHECK_THAT(c.b_even[0], WithinAbs(1.059, 1e-3));
}

TEST_CASE("invariance residual at small amplitude", "[ssm][property]") {
    const auto& r = testing::duffing(1.1);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> T(0.0, 6.283185307179586);
    for (int i = 0; i < 20; ++i) CHECK(invariance_residual(r.ssm, r.cs, std::polar(0.1, T(rng))) < 1e-8);
}

TEST_CASE("invariance residual follows the truncation order", "[ssm][property]") {
    const auto& r = testing::duffing(1.1);
    std::vector<double> radii;
    for (int i = 0; i < 8; ++i) radii.push_back(0.05 * std::pow(10.0, i / 7.0));
    for (int O : {3, 5}) {
        const ResidualProfile prof = invariance_residual_profile(r.ssm.truncated(O), r.cs, radii);
        INFO("order " << O << " slope " << prof.slope);
        CHECK_THAT(prof.slope, WithinAbs(O + 1.0, 0.5));
    }
}

TEST_CASE("normal-form coefficients do not depend on the eigenvector phase", "[ssm][property]") {
    const auto& r = testing::duffing(1.1);
    const MasterMode rot = rescale_master(r.master, std::polar(1.0, 0.7));
    SsmOptions o;
    o.spectrum = r.spec.eigenvalues;
    const SsmExpansion s = compute_ssm(r.cs, rot, 9, o);
    for (size_t j = 0; j < s.gamma.size(); ++j)
        CHECK(std::abs(s.gamma[j] - r.ssm.gamma[j]) <= 1e-10 * std::abs(r.ssm.gamma[j]));
}

TEST_CASE("amplitude rescaling of the eigenvector", "[ssm][property]") {
    const auto& r = testing::duffing(1.1);
    SsmOptions o;
    o.spectrum = r.spec.eigenvalues;
    for (double c : {0.5, 2.0}) {
        const SsmExpansion s = compute_ssm(r.cs, rescale_master(r.master, c), 9, o);
        const Rom rom = make_rom(s, r.cs);
        CHECK_THAT(rom.a_odd[0], WithinRel(r.rom.a_odd[0], 1e-12));
        CHECK_THAT(rom.b_even[0], WithinRel(r.rom.b_even[0], 1e-12));
        // rho scales by 1/c; gamma_j by c^{2j}
        for (size_t j = 1; j < rom.a_odd.size(); ++j)
            CHECK_THAT(rom.a_odd[j], WithinRel(r.rom.a_odd[j] * std::pow(c, 2.0 * j), 1e-9));
        const cplx p = std::polar(3.0, 0.2);
        CHECK((lift(s, p / c) - lift(r.ssm, p)).norm() <= 1e-10 * lift(r.ssm, p).norm());
    }
}

TEST_CASE("outer resonance is reported with its monomial", "[ssm]") {
    // second oscillator sits exactly at three times the master eigenvalue
    Mat a0 = Mat::Zero(4, 4), ad = Mat::Zero(4, 4);
    a0(0, 1) = 1;
    a0(1, 0) = -(1.0 + 1e-4);
    a0(1, 1) = -0.02;
    a0(2, 3) = 1;
    a0(3, 2) = -(9.0 + 9e-4);
    a0(3, 3) = -0.06;
    const DelaySystem s("resonant", 1.0, a0, ad, {Monomial{3, {{0, 3}}, 1.0}});
    const ChainSystem cs = build_chain(s, 4);
    const Spectrum sp = compute_spectrum(cs, 6);
    const MasterMode m = select_master(cs, sp);
    REQUIRE(std::abs(m.lambda - cplx(-0.01, 1.0)) < 1e-10);
    try {
        compute_ssm(cs, m, 3);
        FAIL("no resonance reported");
    } catch (const ResonanceError& e) {
        CHECK(e.k() == 3);
        CHECK(e.l() == 0);
        CHECK(std::string(e.what()).find("resonance") != std::string::npos);
    }
}

TEST_CASE("non-autonomous correction", "[ssm]") {
    const auto& h = testing::hutchinson_post_hopf();
    const SsmExpansion z = nonauto_correction(h.ssm, h.cs, 1.5);
    REQUIRE(z.modal_force.has_value());
    CHECK(*z.modal_force == 0.0);
    CHECK(z.x0_nonauto->norm() == 0.0);

    // forcing aligned with the adjoint direction gives a unit modal force
    const auto& d = testing::duffing(1.1);
    const CVec uh = d.master.u.head(2);
    Forcing f{2.0 * uh / uh.squaredNorm(), ForcingScaling::constant};
    const DelaySystem src = d.sys;
    const DelaySystem forced(src.name(), src.tau(), src.A_now(), src.A_delayed(), src.terms(), f, 0.01, 1.5);
    const ChainSystem cs = build_chain(forced, 100);
    const SsmExpansion c = nonauto_correction(d.ssm, cs, 1.5);
    CHECK(std::abs(*c.modal_force - 1.0) < 1e-12);
    // (A - i Omega) x0 = f v - F+
    const CVec Fp = cs.forcing_positive(1.5);
    const CVec res = CSpMat(cs.A().cast<cplx>()) * *c.x0_nonauto - cplx(0, 1.5) * *c.x0_nonauto - (*c.modal_force * d.master.v - Fp);
    CHECK(res.norm() < 1e-9 * Fp.norm());
    CHECK_THROWS_AS(nonauto_correction(d.ssm, cs, 0.0), ConfigError);

    // the forced lift adds eps Re(2 x0 e^{i Omega t})
    const Vec base = lift(c, cplx(1.0, 0.5));
    const Vec withf = lift(c, cplx(1.0, 0.5), 0.8);
    const Vec expect = base + 0.01 * 2.0 * (*c.x0_nonauto * std::polar(1.0, 1.2)).real();
    CHECK((withf - expect).norm() < 1e-14);
}

TEST_CASE("effective modal force follows the scaling tag", "[ssm]") {
    Rom r = Rom::from_polynomials({0.1}, {1.0});
    r.modal_force = cplx(0.5, 0.25);
    CHECK(r.effective_force(2.0) == cplx(0.5, 0.25));
    r.forcing_scaling = ForcingScaling::omega_squared;
    CHECK(r.effective_force(2.0) == cplx(2.0, 1.0));
}

TEST_CASE("initial history projection", "[ssm]") {
    const auto& r = testing::duffing(1.0);
    Vec x0(2);
    x0 << 0.7, 0.0;
    const InitialHistory h = InitialHistory::constant(x0);
    const Vec z0 = history_to_chain_state(r.cs, h);
    for (int i = 0; i <= r.cs.N(); ++i) {
        CHECK(z0[r.cs.u_index(i, 0)] == 0.7);
        CHECK(z0[r.cs.u_index(i, 1)] == 0.0);
    }
    for (int i = 1; i <= r.cs.N(); ++i) CHECK(z0.segment(r.cs.w_index(i, 0), 2).isZero(0.0));
    CHECK(project_initial(r.ssm, InitialHistory::constant(Vec::Zero(2)), r.cs) == 0.0);
    const cplx pa = project_initial(r.ssm, h, r.cs, ProjectionMethod::adjoint);
    CHECK(std::abs(pa - r.master.u.dot(z0.cast<cplx>())) < 1e-14);
    const cplx pt = project_initial(r.ssm, h, r.cs, ProjectionMethod::transpose);
    CHECK(std::abs(pt - r.master.v.cwiseProduct(z0.cast<cplx>()).sum()) < 1e-14);
    // the refined projection is at least as close to the manifold
    const cplx pm = project_initial(r.ssm, h, r.cs, ProjectionMethod::min_distance);
    CHECK((lift(r.ssm, pm) - z0).norm() <= (lift(r.ssm, pa) - z0).norm() + 1e-12);
}

TEST_CASE("expansion persists bit for bit", "[ssm]") {
    const SsmExpansion& s = testing::duffing(1.1).ssm;
    const auto dir = std::filesystem::temp_directory_path() / "ddessm_ssm_roundtrip";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "ssm.json").string();
    save_ssm(s, path);
    const SsmExpansion t = load_ssm(path);
    REQUIRE(t.order == s.order);
    CHECK(t.master.lambda == s.master.lambda);
    CHECK(t.master.v == s.master.v);
    CHECK(t.master.u == s.master.u);
    for (size_t i = 0; i < s.W.size(); ++i) CHECK(t.W[i] == s.W[i]);
    for (size_t i = 0; i < s.gamma.size(); ++i) CHECK(t.gamma[i] == s.gamma[i]);
    CHECK_THROWS_AS(load_ssm((dir / "missing.json").string()), ConfigError);
    const SsmExpansion tr = s.truncated(5);
    CHECK(tr.gamma.size() == 2);
    CHECK_THROWS_AS(s.truncated(11), ConfigError);
}
