// Acceptance run: one PASS/FAIL line per criterion, details indented above it.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "../support.hpp"
#include "ddessm/commands.hpp"
#include "ddessm/config.hpp"
#include "ddessm/simulate.hpp"

using namespace ddessm;
namespace fs = std::filesystem;

namespace {

const std::string kSource = DDESSM_SOURCE_DIR;
const std::string kCli = DDESSM_CLI;
const double kPi = std::numbers::pi;

struct Criterion {
    bool ok = true;
    std::vector<std::string> lines;

    void check(bool pass, const std::string& what) {
        ok = ok && pass;
        lines.push_back(std::string(pass ? "ok   " : "FAIL ") + what);
    }
    void note(const std::string& what) { lines.push_back("     " + what); }
};

std::string fmt(double v, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

std::string fmt(cplx z, int prec = 6) {
    std::ostringstream os;
    os.precision(prec);
    os << z.real() << (z.imag() < 0 ? " - " : " + ") << std::abs(z.imag()) << "i";
    return os.str();
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ddessm_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

using CsvRow = std::map<std::string, std::string>;

std::vector<CsvRow> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::vector<CsvRow> rows;
    if (!std::getline(in, line)) return rows;
    const auto head = split_csv_line(line);
    while (std::getline(in, line)) {
        const auto f = split_csv_line(line);
        CsvRow r;
        for (size_t i = 0; i < head.size() && i < f.size(); ++i) r[head[i]] = f[i];
        rows.push_back(r);
    }
    return rows;
}

DelaySystem hutchinson(double a) {
    HutchinsonConfig hc;
    hc.a = a;
    return make_hutchinson(hc);
}

DelaySystem duffing(double tau) { return make_duffing(0.2, 2.0, -4.0, tau); }

DelaySystem coupled(double beta1) { return make_coupled_oscillators(0.015, 0.035, 0.3, beta1, -0.1, 0.5); }

// truncations of a reference top-order a(rho) polynomial at every odd order
std::map<int, std::vector<double>> by_order(const std::vector<double>& a) {
    std::map<int, std::vector<double>> m;
    for (size_t k = 2; k <= a.size(); ++k) m[static_cast<int>(2 * k - 1)] = std::vector<double>(a.begin(), a.begin() + static_cast<long>(k));
    return m;
}

std::string describe(const LimitCycleRoots& lc) {
    std::string s;
    for (const auto& t : lc.tracks) {
        s += "rho " + fmt(t.rho, 7) + " " + (t.cls == RootClass::converged ? "CONVERGED" : "SPURIOUS");
        if (!t.reason.empty()) s += " (" + t.reason + ")";
        s += "; ";
    }
    return s.empty() ? "no nontrivial root" : s;
}

CommandResult predict_into(const std::string& config, const fs::path& out, bool validate) {
    const RunConfig cfg = load_config(kSource + "/configs/" + config);
    CommandOptions o;
    o.out_dir = out.string();
    o.validate = validate;
    o.threads = 4;
    return cmd_predict(cfg, o);
}

// ---------------------------------------------------------------------------

void c1(Criterion& c) {
    struct Case {
        std::string name;
        DelaySystem sys;
        int N;
        cplx expected;
    };
    const Case cases[] = {
        {"duffing tau 1.0", duffing(1.0), 100, {-0.0057, 1.5182}},
        {"duffing tau 1.1", duffing(1.1), 100, {0.0102, 1.5160}},
        {"coupled beta1 -0.3", coupled(-0.3), 20, {-0.0351, 0.9936}},
        {"hutchinson a = pi/2 - 0.05", hutchinson(kPi / 2 - 0.05), 100, {-0.0230, 1.5560}},
        {"hutchinson a = pi/2 + 0.05", hutchinson(kPi / 2 + 0.05), 100, {0.0223, 1.5848}},
    };
    for (const auto& k : cases) {
        const ChainSystem cs = build_chain(k.sys, k.N);
        const MasterMode m = select_master(cs, compute_spectrum(cs, 6));
        const double err = std::abs(m.lambda - k.expected);
        c.check(err < 2e-3, k.name + ": " + fmt(m.lambda) + " vs " + fmt(k.expected, 5) + ", |error| " + fmt(err, 3) +
                                " (tol 2e-3)");
    }
}

void c2(Criterion& c) {
    const HopfLocus d = hopf_locus(duffing, 0.8, 1.3, 100, 1e-4);
    c.check(std::abs(d.critical - 1.035) <= 0.005, "duffing tau* = " + fmt(d.critical, 7) + " (1.035 +- 0.005)");
    const HopfLocus b = hopf_locus(coupled, -0.3, 0.0, 20, 1e-4);
    c.check(std::abs(b.critical + 0.146) <= 0.002, "coupled beta1* = " + fmt(b.critical, 7) + " (-0.146 +- 0.002)");
    const HopfLocus h = hopf_locus(hutchinson, 1.4, 1.7, 100, 1e-6);
    c.check(std::abs(h.critical - kPi / 2) <= 1e-3, "hutchinson a* = " + fmt(h.critical, 8) + " (pi/2 +- 1e-3)");
    const auto roots = exact_characteristic_roots(hutchinson(kPi / 2), 3);
    const double err = roots.empty() ? 1e300 : std::abs(roots.front().lambda - cplx(0.0, kPi / 2));
    c.check(err < 1e-8, "exact characteristic root at a = pi/2: " + (roots.empty() ? std::string("none") : fmt(roots.front().lambda, 12)) +
                            ", |lambda - i pi/2| " + fmt(err, 3));
}

void c3(Criterion& c) {
    const ConvergenceStudy st = convergence_study(duffing(1.1), {25, 50, 100, 200});
    for (const auto& r : st.rows) c.note("N " + std::to_string(r.N) + "  |lambda_N - lambda| " + fmt(r.abs_error, 4));
    c.check(std::abs(st.fitted_order - 2.0) <= 0.3, "fitted order " + fmt(st.fitted_order, 4) + " (2 +- 0.3)");
}

void c4(Criterion& c) {
    const std::pair<std::string, const testing::Reduced*> cases[] = {
        {"duffing tau 1.1", &testing::duffing(1.1)},
        {"coupled beta1 -0.145", &testing::coupled_post_hopf()},
        {"hutchinson a = pi/2 + 0.05", &testing::hutchinson_post_hopf()},
    };
    for (const auto& [name, r] : cases) {
        const double ea = std::abs(r->rom.a_odd[0] - r->master.lambda.real());
        const double eb = std::abs(r->rom.b_even[0] - r->master.lambda.imag());
        c.check(ea <= 1e-8 && eb <= 1e-8, name + ": a1 = " + fmt(r->rom.a_odd[0], 10) + ", b0 = " + fmt(r->rom.b_even[0], 10) +
                                              ", deviations " + fmt(ea, 2) + " / " + fmt(eb, 2) + " (tol 1e-8)");
    }
}

void c5(Criterion& c) {
    struct Poly {
        std::string name;
        std::vector<double> a, b;
        double expected, tol;
    };
    const Poly polys[] = {
        {"duffing tau 1.1", {0.01023, -0.0004357, -2.403e-6, -1.874e-8, -1.773e-10},
         {1.516, -0.003826, -1.78e-5, -1.34e-7, -1.212e-9}, 4.54457, 1e-3},
        {"coupled", {0.001039, -4.157e-5, 1.386e-7, -1.249e-9, 1.593e-11},
         {1.059, 0.004489, -2.674e-5, 2.616e-7, -3.079e-9}, 5.179, 1e-2},
        {"hutchinson", {0.02234, -0.0004296, -4.028e-7, -5.792e-10, -4.517e-13},
         {1.585, -0.0005204, -1.146e-6, -3.744e-9, -1.405e-11}, 7.0379, 1e-2},
    };
    for (const auto& p : polys) {
        const auto lc = limit_cycle_roots(by_order(p.a));
        const auto root = lc.converged_root();
        if (!root) {
            c.check(false, p.name + " reference polynomial: no converged root (" + describe(lc) + ")");
            continue;
        }
        const double err = std::abs(*root - p.expected);
        c.check(err <= p.tol, p.name + " reference polynomial: rho* = " + fmt(*root, 7) + " vs " + fmt(p.expected, 6) +
                                   ", |error| " + fmt(err, 3) + " (tol " + fmt(p.tol, 1) + "), relative " +
                                   fmt(err / p.expected, 2));
        if (p.name == "duffing tau 1.1") {
            const Rom r = Rom::from_polynomials(p.a, p.b);
            const double w = r.b(*root);
            c.check(std::abs(w - 1.428) <= 5e-4, "b(rho*) = " + fmt(w, 6) + " (1.428 +- 5e-4)");
            c.check(std::abs(2 * kPi / w - 4.40) <= 5e-3, "period = " + fmt(2 * kPi / w, 6) + " (4.40 +- 5e-3)");
        }
    }

    // end to end: predict --validate on each post-Hopf benchmark
    const std::pair<std::string, std::string> runs[] = {
        {"duffing tau 1.1", "duffing_tau1_1.json"},
        {"coupled beta1 -0.145", "coupled_post_hopf.json"},
        {"hutchinson a = pi/2 + 0.05", "hutchinson_post_hopf.json"},
    };
    for (const auto& [name, config] : runs) {
        const fs::path out = scratch("c5_" + config);
        const CommandResult res = predict_into(config, out, true);
        double amp = -1, per = -1;
        for (const auto& row : read_csv(out / "validation.csv")) {
            if (row.at("task") != "limit_cycle") continue;
            if (row.at("quantity") == "amplitude") amp = std::stod(row.at("rel_error"));
            if (row.at("quantity") == "period") per = std::stod(row.at("rel_error"));
        }
        if (amp < 0 || per < 0) {
            c.check(false, name + ": pipeline emitted no converged limit cycle");
            for (const auto& w : res.warnings) c.note(w);
        } else {
            c.check(amp <= 0.02 && per <= 0.01, name + ": DDE relative error amplitude " + fmt(amp, 3) + " (tol 2e-2), period " +
                                                    fmt(per, 3) + " (tol 1e-2)");
        }
    }

    // the top-order root of the coupled system, followed past the classification
    const auto& r = testing::coupled_post_hopf();
    const auto lc = limit_cycle_roots(a_polynomials_by_order(r.rom));
    if (!lc.tracks.empty()) {
        const double rs = lc.tracks.front().rho;
        const auto pr = limit_cycle_predict(r.rom, r.ssm, rs, 16);
        const DelaySystem sys = coupled(-0.145);
        DdeOptions o;
        o.record = {0};
        const Trajectory tr = integrate_dde(sys, orbit_history(r.ssm, r.cs, rs, 0.0, pr.frequency), 6000.0, sys.tau() / 40, o);
        const SteadyState ss = steady_state(tr, 0);
        c.note("coupled top-order root rho " + fmt(rs, 6) + " lifted without classification: amplitude " + fmt(pr.phys_amp, 6) +
               " vs DDE " + fmt(ss.amplitude, 6) + " (" + fmt(std::abs(pr.phys_amp - ss.amplitude) / ss.amplitude, 2) +
               "), period " + fmt(pr.period, 6) + " vs " + fmt(ss.period, 6) + " (" +
               fmt(std::abs(pr.period - ss.period) / ss.period, 2) + "), DDE response " + to_string(ss.kind));
    }
}

void c6(Criterion& c) {
    const auto& r = testing::duffing(1.1);
    FrcOptions fo;
    fo.rho_max = 8.0;
    fo.threads = 4;
    {
        const FrcResult fr = frc_periodic(r.rom, 0.0009, 1.2, 1.8, fo);
        int isolas = 0, closed = 0;
        bool main_unstable = true;
        for (const auto& b : fr.branches) {
            if (b.isola) {
                ++isolas;
                closed += b.closed;
            } else {
                for (const auto& p : b.points) main_unstable = main_unstable && !p.stable;
            }
        }
        const auto sn = fr.flagged(BifFlag::SN);
        c.check(isolas == 1 && closed == 1, "eps 0.0009: " + std::to_string(fr.branches.size()) + " branches, " +
                                                std::to_string(isolas) + " isola, closed " + std::to_string(closed));
        c.check(sn.size() == 2, "eps 0.0009: " + std::to_string(sn.size()) + " SN points (exactly 2)");
        c.check(main_unstable, std::string("eps 0.0009: main branch ") + (main_unstable ? "entirely unstable" : "has stable points"));
    }
    {
        const FrcResult fr = frc_periodic(r.rom, 0.01, 1.2, 1.8, fo);
        const auto sn = fr.flagged(BifFlag::SN);
        const auto hb = fr.flagged(BifFlag::HB);
        c.check(fr.branches.size() == 1 && fr.isola_count() == 0,
                "eps 0.01: " + std::to_string(fr.branches.size()) + " branch, " + std::to_string(fr.isola_count()) + " isolas");
        c.check(!sn.empty() && hb.size() == 1,
                "eps 0.01: " + std::to_string(sn.size()) + " SN, " + std::to_string(hb.size()) + " HB (at least one SN, one HB)");
    }
    for (const std::string config : {"duffing_frc_isola.json", "duffing_frc_merged.json"}) {
        const fs::path out = scratch("c6_" + config);
        predict_into(config, out, true);
        int n = 0;
        double worst = 0.0;
        for (const auto& row : read_csv(out / "validation.csv")) {
            if (row.at("task") != "frc") continue;
            ++n;
            worst = std::max(worst, std::stod(row.at("rel_error")));
            c.note(config + " Omega " + row.at("Omega") + ": ROM " + row.at("rom") + " DDE " + row.at("reference") + " (" +
                   row.at("note") + ")");
        }
        c.check(n == 5 && worst <= 0.03, config + ": " + std::to_string(n) + " stable samples, worst relative error " +
                                             fmt(worst, 3) + " (tol 3e-2)");
    }
}

void c7(Criterion& c) {
    const auto& r = testing::duffing(1.1);
    const RomCycle cyc = rom_cycle(r.rom, 0.01, 1.615);
    c.check(cyc.found, "ROM limit cycle at (1.615, 0.01): " + cyc.status + ", period " + fmt(cyc.period, 6));
    const fs::path out = scratch("c7");
    predict_into("duffing_frc_merged.json", out, true);
    bool seen = false;
    for (const auto& row : read_csv(out / "validation.csv")) {
        if (row.at("task") != "torus" || std::abs(std::stod(row.at("Omega")) - 1.615) > 1e-9) continue;
        seen = true;
        const std::string q = row.at("quantity");
        if (q == "section_hausdorff_rel") {
            const double h = std::stod(row.at("rom"));
            c.check(h <= 0.05, "Poincare section relative Hausdorff distance " + fmt(h, 3) + " (tol 5e-2)");
        } else {
            const double e = std::stod(row.at("rel_error"));
            c.check(e <= 0.05, q + ": ROM " + row.at("rom") + " DDE " + row.at("reference") + ", relative error " + fmt(e, 3) +
                                   " (tol 5e-2, DDE response " + row.at("note") + ")");
        }
    }
    c.check(seen, "torus validation rows present");
}

void c8(Criterion& c) {
    const auto& r = testing::duffing(1.1);
    std::vector<double> radii;
    for (int i = 0; i < 8; ++i) radii.push_back(0.05 * std::pow(10.0, i / 7.0));
    for (int O : {3, 5, 7, 9}) {
        const auto prof = invariance_residual_profile(r.ssm.truncated(O), r.cs, radii);
        c.check(std::abs(prof.slope - (O + 1)) <= 0.5, "order " + std::to_string(O) + ": residual slope " + fmt(prof.slope, 4) +
                                                          " (" + std::to_string(O + 1) + " +- 0.5), residual at r = 0.05 " +
                                                          fmt(prof.residuals.front(), 3));
    }

    double worst_imag = 0.0;
    for (double rho : {0.1, 1.0, 3.0})
        for (double th : {0.0, 0.4, 2.0}) {
            const cplx p = std::polar(rho, th);
            CVec z = CVec::Zero(r.ssm.dim());
            for (int m = 1; m <= r.ssm.order; ++m)
                for (int l = 0; l <= m; ++l) z += r.ssm.coeff(m - l, l) * (std::pow(p, m - l) * std::pow(std::conj(p), l));
            worst_imag = std::max(worst_imag, z.imag().norm() / std::max(1.0, z.norm()));
        }
    c.check(worst_imag <= 1e-12, "lift of conjugate pairs: relative imaginary part " + fmt(worst_imag, 3) + " (tol 1e-12)");

    const double rs = *limit_cycle_roots(a_polynomials_by_order(r.rom)).converged_root();
    const double amp = orbit_amplitude(r.ssm, rs), w = r.rom.b(rs);
    for (double s : {0.5, 2.0}) {
        SsmOptions o;
        o.spectrum = r.spec.eigenvalues;
        const SsmExpansion e = compute_ssm(r.cs, rescale_master(r.master, s), 9, o);
        const Rom rom = make_rom(e, r.cs);
        const auto root = limit_cycle_roots(a_polynomials_by_order(rom)).converged_root();
        if (!root) {
            c.check(false, "scale " + fmt(s) + ": no converged root");
            continue;
        }
        const double amp_s = orbit_amplitude(e, *root), w_s = rom.b(*root);
        const double da = std::abs(amp_s - amp) / amp, dw = std::abs(w_s - w) / w;
        // backbone in physical terms at a fixed amplitude in rho
        const double bb_a = std::abs(orbit_amplitude(e, 3.0 / s) - orbit_amplitude(r.ssm, 3.0)) / orbit_amplitude(r.ssm, 3.0);
        const double bb_w = std::abs(rom.b(3.0 / s) - r.rom.b(3.0)) / r.rom.b(3.0);
        const double worst = std::max({da, dw, bb_a, bb_w});
        c.check(worst <= 1e-8, "v rescaled by " + fmt(s) + ": rho* " + fmt(*root, 7) + ", limit-cycle amplitude/frequency and backbone deviations max " +
                                   fmt(worst, 3) + " (tol 1e-8)");
    }
}

void c9(Criterion& c) {
    {
        const RunConfig cfg = load_config(kSource + "/configs/duffing_tau1_75.json");
        const auto red = testing::reduce(build_system(cfg.problem), cfg.N, cfg.ssm.order);
        std::map<int, std::vector<BackbonePoint>> bb;
        for (int O = 3; O <= red.rom.order(); O += 2)
            bb[O] = backbone(red.rom.truncated(O), cfg.predict->backbone->rho_max, cfg.predict->backbone->n_points);
        const double conv = convergence_domain(bb, cfg.predict->backbone->tol).back().rho_max;
        const auto lc = limit_cycle_roots(a_polynomials_by_order(red.rom), conv);
        bool all_spurious = true;
        for (const auto& t : lc.tracks) all_spurious = all_spurious && t.cls == RootClass::spurious;
        c.check(!lc.converged_root() && all_spurious, "duffing tau 1.75: " + describe(lc));
    }
    {
        const auto& r = testing::duffing(1.1);
        const FrcConvergence big = frc_order_convergence(r.rom, 0.4, 1.2, 1.8, 8.0);
        c.check(!big.converged, "eps 0.4: order check " + std::string(big.converged ? "converged" : "NON-CONVERGED") +
                                    ", max relative difference " + fmt(big.max_rel_diff, 3) + " at Omega " + fmt(big.worst_Omega, 5) +
                                    ", rho " + fmt(big.worst_rho, 4));
        const FrcConvergence small = frc_order_convergence(r.rom, 0.0009, 1.2, 1.8, 8.0);
        c.note("eps 0.0009 for contrast: " + std::string(small.converged ? "converged" : "NON-CONVERGED") + ", max relative difference " +
               fmt(small.max_rel_diff, 3));
    }
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = kCli + " " + args + " > " + log.string() + " 2> /dev/null";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void c10(Criterion& c) {
    std::vector<fs::path> configs;
    for (const auto& e : fs::directory_iterator(kSource + "/configs"))
        if (e.path().extension() == ".json") configs.push_back(e.path());
    std::sort(configs.begin(), configs.end());
    const fs::path root = scratch("c10");
    for (const auto& cfgp : configs) {
        const RunConfig cfg = load_config(cfgp.string());
        std::vector<std::string> cmds{"ssm"};
        if (cfg.spectrum) cmds.insert(cmds.begin(), "spectrum");
        if (cfg.predict) cmds.push_back("predict");
        if (cfg.simulate) cmds.push_back("simulate");
        const std::string stem = cfgp.stem().string();
        bool same = true, ran = true;
        int files = 0;
        for (const char* rep : {"a", "b"}) {
            const fs::path out = root / stem / rep;
            fs::create_directories(out);
            for (const auto& cmd : cmds)
                ran = ran && run_cli(cmd + " --config " + cfgp.string() + " --out " + out.string() + " --threads 4",
                                     out / ("stdout_" + cmd + ".txt")) == 0;
        }
        for (const auto& e : fs::directory_iterator(root / stem / "a")) {
            ++files;
            const fs::path other = root / stem / "b" / e.path().filename();
            if (!fs::exists(other) || slurp(e.path()) != slurp(other)) {
                same = false;
                c.note(stem + ": " + e.path().filename().string() + " differs");
            }
        }
        std::string list;
        for (const auto& cmd : cmds) list += cmd + " ";
        c.check(ran && same, stem + ": " + list + "-> " + std::to_string(files) + " files " + (same ? "identical" : "DIFFER") +
                                 (ran ? "" : ", a command failed"));
    }
}

}  // namespace

int main() {
    struct Entry {
        int id;
        std::string title;
        std::function<void(Criterion&)> fn;
        double limit_s;  // runtime bound, 0 for none
    };
    const std::vector<Entry> entries = {
        {1, "eigenvalue reproduction", c1, 60.0},
        {2, "Hopf loci", c2, 300.0},
        {3, "discretization order", c3, 0.0},
        {4, "ROM structure", c4, 0.0},
        {5, "limit-cycle roots and end-to-end limit cycles", c5, 600.0},
        {6, "isola and merge", c6, 600.0},
        {7, "quasi-periodic prediction", c7, 0.0},
        {8, "invariance-equation property", c8, 0.0},
        {9, "failure-mode reproduction", c9, 0.0},
        {10, "determinism", c10, 0.0},
    };
    int failed = 0;
    for (const auto& e : entries) {
        Criterion c;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            e.fn(c);
        } catch (const std::exception& ex) {
            c.check(false, std::string("exception: ") + ex.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (e.limit_s > 0.0) c.check(secs < e.limit_s, "runtime " + fmt(secs, 3) + " s (limit " + fmt(e.limit_s) + " s)");
        for (const auto& l : c.lines) std::cout << "    " << l << "\n";
        std::cout << "criterion " << e.id << " " << (c.ok ? "PASS" : "FAIL") << "  " << e.title << "  (" << fmt(secs, 3) << " s)\n"
                  << std::flush;
        failed += !c.ok;
    }
    std::cout << (10 - failed) << "/10 criteria passed\n";
    return failed == 0 ? 0 : 1;
}
