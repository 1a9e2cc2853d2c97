#include "ddessm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ddessm/csv.hpp"
#include "ddessm/error.hpp"
#include "ddessm/parallel.hpp"
#include "ddessm/rom_analysis.hpp"
#include "ddessm/simulate.hpp"
#include "ddessm/spectral.hpp"
#include "ddessm/ssm.hpp"

namespace ddessm {

namespace fs = std::filesystem;

namespace {

std::string num(double v, int p = 8) { return format_number(v, p); }

std::string cnum(cplx z, int p = 8) {
    std::string s = num(z.real(), p);
    s += z.imag() < 0.0 ? " - " : " + ";
    s += num(std::abs(z.imag()), p) + "i";
    return s;
}

class Output {
public:
    Output(const RunConfig& cfg, const CommandOptions& opts, CommandResult& res)
        : dir_(opts.out_dir.value_or(cfg.output.dir)), precision_(cfg.output.precision), res_(res) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw ConfigError("cannot create output directory '" + dir_ + "': " + ec.message());
    }
    std::string path(const std::string& name) {
        const std::string p = (fs::path(dir_) / name).string();
        res_.files.push_back(p);
        return p;
    }
    int precision() const { return precision_; }
    void write_text(const std::string& name, const std::string& text) {
        std::ofstream out(path(name), std::ios::binary);
        if (!out) throw ConfigError("cannot write '" + name + "'");
        out << text;
    }

private:
    std::string dir_;
    int precision_;
    CommandResult& res_;
};

int effective_order(const RunConfig& cfg, const CommandOptions& opts) {
    const int O = opts.order.value_or(cfg.ssm.order);
    if (O < 3 || O % 2 == 0) throw ConfigError("--order: odd order >= 3 expected");
    return O;
}

DelaySystem unforced(const DelaySystem& sys) { return sys.with_forcing(0.0, 0.0); }

struct Reduction {
    SsmExpansion ssm;
    Rom rom;
    std::string source;
};

Reduction reduce(const RunConfig& cfg, const CommandOptions& opts, const ChainSystem& cs, Output& out,
                 bool allow_load) {
    const int O = effective_order(cfg, opts);
    Reduction r;
    if (allow_load && cfg.ssm.load) {
        const std::string p = (fs::path(opts.out_dir.value_or(cfg.output.dir)) / cfg.ssm.expansion_file).string();
        if (!fs::exists(p)) throw ConfigError("expansion file '" + p + "' not found (run the ssm command first)");
        r.ssm = load_ssm(p);
        if (r.ssm.dim() != cs.dim())
            throw ConfigError("expansion file '" + p + "' has dimension " + std::to_string(r.ssm.dim()) +
                              ", the configured chain has " + std::to_string(cs.dim()));
        if (O > r.ssm.order)
            throw ConfigError("requested order " + std::to_string(O) + " exceeds the stored order " +
                              std::to_string(r.ssm.order));
        if (O < r.ssm.order) r.ssm = r.ssm.truncated(O);
        r.source = "loaded from " + p;
    } else {
        const Spectrum spec = compute_spectrum(cs, 10);
        const MasterMode master = select_master(cs, spec);
        SsmOptions so;
        so.resonance_tol = cfg.ssm.resonance_tol;
        so.spectrum = spec.eigenvalues;
        r.ssm = compute_ssm(cs, master, O, so);
        r.source = "computed";
    }
    (void)out;
    r.rom = make_rom(r.ssm, cs);
    return r;
}

// ---- spectrum ----

}  // namespace

CommandResult cmd_spectrum(const RunConfig& cfg, const CommandOptions& opts) {
    CommandResult res;
    Output out(cfg, opts, res);
    const SpectrumTask task = cfg.spectrum.value_or(SpectrumTask{});
    const DelaySystem sys = unforced(build_system(cfg.problem));
    const ChainSystem cs = build_chain(sys, cfg.N);
    const Spectrum spec = compute_spectrum(cs, task.n_eigs);
    std::ostringstream rep;
    rep << "system: " << sys.name() << "  n = " << sys.n() << "  tau = " << num(sys.tau()) << "\n";
    rep << "chain: N = " << cfg.N << "  dimension = " << cs.dim() << "\n";
    if (cfg.output.export_chain) {
        const ChainSystem full = build_chain(build_system(cfg.problem), cfg.N);
        export_chain(full, out.path("chain_A.mtx"), out.path("chain_forcing.mtx"));
    }
    {
        CsvWriter w(out.path("spectrum.csv"), {"index", "re_lambda", "im_lambda"}, out.precision());
        for (size_t i = 0; i < spec.eigenvalues.size(); ++i) {
            w << static_cast<int>(i) << spec.eigenvalues[i].real() << spec.eigenvalues[i].imag();
            w.end_row();
        }
    }
    rep << "leading eigenvalues:\n";
    for (int i = 0; i < std::min<int>(task.n_eigs, static_cast<int>(spec.eigenvalues.size())); ++i)
        rep << "  " << cnum(spec.eigenvalues[static_cast<size_t>(i)]) << "\n";
    rep << "eigenpair residual: " << num(eigen_residual(cs, spec), 3) << "\n";
    const MasterMode master = select_master(cs, spec);
    const CharacteristicRoot exact = refine_characteristic_root(sys, master.lambda);
    rep << "master eigenvalue: " << cnum(master.lambda) << "\n";
    if (exact.converged)
        rep << "characteristic root: " << cnum(exact.lambda) << "  |difference| = " << num(std::abs(exact.lambda - master.lambda), 3)
            << "\n";
    for (const auto& w : master.warnings) res.warnings.push_back(w);

    if (!task.convergence_N.empty()) {
        const ConvergenceStudy st = convergence_study(sys, task.convergence_N);
        CsvWriter w(out.path("convergence.csv"), {"N", "re_lambda", "im_lambda", "abs_error"}, out.precision());
        for (const auto& r : st.rows) {
            w << r.N << r.lambda.real() << r.lambda.imag() << r.abs_error;
            w.end_row();
        }
        rep << "convergence: exact root " << cnum(st.exact) << ", fitted order " << num(st.fitted_order, 4) << "\n";
    }

    if (task.hopf) {
        const HopfTask& h = *task.hopf;
        const ProblemConfig pc = cfg.problem;
        auto family = [pc, param = h.param](double v) { return unforced(build_system_with(pc, param, v)); };
        (void)family(h.lo);  // surfaces an unknown parameter name before the sweep
        std::vector<LocusPoint> pts(static_cast<size_t>(h.n_points));
        std::vector<double> err(pts.size());
        parallel_for(h.n_points, opts.threads, [&](int i) {
            const double v = h.lo + (h.hi - h.lo) * i / (h.n_points - 1);
            const DelaySystem s = family(v);
            const cplx lam = leading_eigenvalue(build_chain(s, cfg.N));
            pts[static_cast<size_t>(i)] = {v, lam};
            const CharacteristicRoot cr = refine_characteristic_root(s, lam);
            err[static_cast<size_t>(i)] = cr.converged ? std::abs(cr.lambda - lam) : std::nan("");
        });
        CsvWriter w(out.path("locus.csv"), {h.param, "re_lambda", "im_lambda", "abs_error"}, out.precision());
        for (size_t i = 0; i < pts.size(); ++i) {
            w << pts[i].param << pts[i].lambda.real() << pts[i].lambda.imag() << err[i];
            w.end_row();
        }
        const HopfLocus loc = hopf_locus(family, h.lo, h.hi, cfg.N, h.tol);
        rep << "Hopf crossing: " << h.param << "* = " << num(loc.critical) << "  (bracket " << num(loc.lo) << ", "
            << num(loc.hi) << ")\n";
        const CharacteristicRoot cr = refine_characteristic_root(family(loc.critical), leading_eigenvalue(build_chain(family(loc.critical), cfg.N)));
        if (cr.converged) rep << "characteristic root at the crossing: " << cnum(cr.lambda) << "\n";
    }
    res.report = rep.str();
    out.write_text("spectrum_report.txt", res.report);
    return res;
}

// ---- ssm ----

namespace {

std::string polynomial_text(const std::vector<double>& c, bool odd) {
    std::ostringstream os;
    for (size_t j = c.size(); j-- > 0;) {
        const int power = static_cast<int>(odd ? 2 * j + 1 : 2 * j);
        const double v = c[j];
        if (j + 1 == c.size())
            os << (v < 0 ? "-" : "");
        else
            os << (v < 0 ? " - " : " + ");
        os << num(std::abs(v), 6);
        if (power > 0) os << " rho" << (power > 1 ? "^" + std::to_string(power) : "");
    }
    return os.str();
}

}  // namespace

CommandResult cmd_ssm(const RunConfig& cfg, const CommandOptions& opts) {
    CommandResult res;
    Output out(cfg, opts, res);
    const DelaySystem sys = build_system(cfg.problem);
    const ChainSystem cs = build_chain(sys, cfg.N);
    const Reduction r = reduce(cfg, opts, cs, out, false);
    save_ssm(r.ssm, out.path(cfg.ssm.expansion_file));

    std::ostringstream rep;
    rep << "system: " << sys.name() << "  N = " << cfg.N << "  dimension = " << cs.dim() << "\n";
    rep << "master eigenvalue: " << cnum(r.ssm.master.lambda, 10) << "\n";
    rep << "expansion order: " << r.ssm.order << "\n";
    CsvWriter w(out.path("rom_coefficients.csv"), {"order", "power", "a_coeff", "b_coeff"}, out.precision());
    for (int O = 3; O <= r.rom.order(); O += 2) {
        const Rom t = r.rom.truncated(O);
        rep << "O(" << O << "):\n";
        rep << "  a(rho) = " << polynomial_text(t.a_odd, true) << "\n";
        rep << "  b(rho) = " << polynomial_text(t.b_even, false) << "\n";
        for (size_t j = 0; j < t.a_odd.size(); ++j) {
            w << O << static_cast<int>(2 * j + 1) << t.a_odd[j] << t.b_even[j];
            w.end_row();
        }
    }
    rep << "a linear coefficient " << num(r.rom.a_odd[0], 10) << "  (Re lambda = " << num(r.ssm.master.lambda.real(), 10)
        << ")\n";
    rep << "b constant term     " << num(r.rom.b_even[0], 10) << "  (Im lambda = " << num(r.ssm.master.lambda.imag(), 10)
        << ")\n";
    bool all_zero = true;
    for (const auto& g : r.ssm.gamma) all_zero = all_zero && g == 0.0;
    if (all_zero) rep << "all gamma coefficients vanish (linear reduced dynamics)\n";
    if (cs.forcing_template().size() > 0 && cs.forcing_template().norm() > 0.0)
        rep << "modal force (unit forcing): " << cnum(r.rom.modal_force) << "\n";
    res.report = rep.str();
    out.write_text("ssm_report.txt", res.report);
    return res;
}

// ---- predict ----

namespace {

struct ValidationRow {
    std::string task;
    double epsilon = 0.0;
    double Omega = 0.0;
    std::string quantity;
    double rom = 0.0;
    double reference = 0.0;
    std::string note;
};

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::vector<int> block_indices(int n) {
    std::vector<int> v(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] = i;
    return v;
}

}  // namespace

CommandResult cmd_predict(const RunConfig& cfg, const CommandOptions& opts) {
    if (!cfg.predict) throw ConfigError("predict: the config has no 'predict' block");
    const PredictTask& task = *cfg.predict;
    CommandResult res;
    Output out(cfg, opts, res);
    const DelaySystem sys0 = build_system(cfg.problem);
    const DelaySystem sys = unforced(sys0);
    const ChainSystem cs = build_chain(sys0, cfg.N);
    if (task.observable >= cs.dim()) throw ConfigError("predict.observable: index beyond the chain dimension");
    const Reduction red = reduce(cfg, opts, cs, out, true);
    const SsmExpansion& ssm = red.ssm;
    const Rom& rom = red.rom;
    Observable obs;
    obs.index = task.observable;
    const int n = sys.n();

    std::ostringstream rep;
    rep << "system: " << sys.name() << "  N = " << cfg.N << "  order = " << ssm.order << " (" << red.source << ")\n";
    rep << "master eigenvalue: " << cnum(ssm.master.lambda) << "\n";
    std::vector<ValidationRow> vrows;

    std::optional<double> conv_radius;
    if (task.backbone) {
        const BackboneTask& bt = *task.backbone;
        std::map<int, std::vector<BackbonePoint>> by_order;
        for (int O = 3; O <= rom.order(); O += 2) {
            const bool top = O == rom.order();
            by_order[O] = backbone(rom.truncated(O), bt.rho_max, bt.n_points, top ? &ssm : nullptr, obs);
        }
        {
            CsvWriter w(out.path("backbone.csv"), {"rho", "omega", "phys_amp"}, out.precision());
            for (const auto& p : by_order[rom.order()]) {
                w << p.rho << p.omega << p.phys_amp;
                w.end_row();
            }
        }
        {
            std::vector<std::string> hdr{"rho"};
            for (const auto& [O, bb] : by_order) hdr.push_back("omega_O" + std::to_string(O));
            CsvWriter w(out.path("backbone_orders.csv"), hdr, out.precision());
            for (int i = 0; i < bt.n_points; ++i) {
                w << by_order.begin()->second[static_cast<size_t>(i)].rho;
                for (const auto& [O, bb] : by_order) w << bb[static_cast<size_t>(i)].omega;
                w.end_row();
            }
        }
        if (by_order.size() >= 2) {
            const auto est = convergence_domain(by_order, bt.tol);
            CsvWriter w(out.path("convergence_domain.csv"), {"order", "rho_max"}, out.precision());
            rep << "backbone convergence (relative omega tolerance " << num(bt.tol, 3) << "):\n";
            for (const auto& e : est) {
                w << e.order << e.rho_max;
                w.end_row();
                rep << "  O(" << e.order << ") agrees with O(" << e.order - 2 << ") for rho <= " << num(e.rho_max, 6) << "\n";
                if (e.order == rom.order()) conv_radius = e.rho_max;
            }
        }
    }

    if (task.limit_cycle) {
        const LimitCycleTask& lt = *task.limit_cycle;
        if (lt.conv_radius) conv_radius = lt.conv_radius;
        RootOptions ro;
        ro.agreement = lt.agreement;
        ro.boundary_margin = lt.boundary_margin;
        const auto roots = limit_cycle_roots(a_polynomials_by_order(rom), conv_radius, ro);
        {
            CsvWriter w(out.path("limit_cycle_roots.csv"), {"order", "rho"}, out.precision());
            for (const auto& [O, rs] : roots.roots_by_order)
                for (double r : rs) {
                    w << O << r;
                    w.end_row();
                }
        }
        {
            CsvWriter w(out.path("limit_cycle_classes.csv"), {"rho", "class", "reason"}, out.precision());
            for (const auto& t : roots.tracks) {
                w << t.rho << (t.cls == RootClass::converged ? "CONVERGED" : "SPURIOUS") << t.reason;
                w.end_row();
            }
        }
        rep << "limit-cycle roots of a(rho), O(" << roots.top_order << "):\n";
        if (roots.tracks.empty()) rep << "  none (only the trivial root)\n";
        for (const auto& t : roots.tracks)
            rep << "  rho = " << num(t.rho, 8) << "  " << (t.cls == RootClass::converged ? "CONVERGED" : "SPURIOUS")
                << "  (" << t.reason << ")\n";
        if (const auto rs = roots.converged_root()) {
            const auto pr = limit_cycle_predict(rom, ssm, *rs, lt.n_samples, obs);
            std::vector<std::string> hdr{"theta"};
            for (int i = 0; i < n; ++i) hdr.push_back("x" + std::to_string(i + 1));
            CsvWriter w(out.path("limit_cycle.csv"), hdr, out.precision());
            for (size_t k = 0; k < pr.theta.size(); ++k) {
                w << pr.theta[k];
                for (int i = 0; i < n; ++i) w << pr.states[k][i];
                w.end_row();
            }
            rep << "limit cycle: rho* = " << num(pr.rho) << "  frequency = " << num(pr.frequency)
                << "  period = " << num(pr.period) << "  amplitude(x" << obs.index + 1 << ") = " << num(pr.phys_amp) << "\n";
            if (opts.validate) {
                const double Tq = pr.period;
                const auto hist = orbit_history(ssm, cs, pr.rho, 0.0, pr.frequency);
                const double t_end = std::max(task.validate.t_end, 200.0 * Tq);
                DdeOptions dopt;
                const auto tr = integrate_dde(sys, hist, t_end, sys.tau() / task.validate.dt_per_tau, dopt);
                SteadyStateOptions so;
                so.transient_fraction = task.validate.transient_fraction;
                const SteadyState ss = steady_state(tr, std::min(obs.index, n - 1), so);
                vrows.push_back({"limit_cycle", 0.0, 0.0, "amplitude", pr.phys_amp, ss.amplitude, to_string(ss.kind)});
                vrows.push_back({"limit_cycle", 0.0, 0.0, "period", pr.period, ss.period, to_string(ss.kind)});
            }
        } else {
            rep << "WARNING: no converged nontrivial root; no limit-cycle orbit emitted\n";
            res.warnings.push_back("no converged nontrivial root of a(rho)");
        }
    }

    if (task.frc) {
        const FrcTask& ft = *task.frc;
        if (!cs.forced() && cs.forcing_template().norm() == 0.0)
            throw ConfigError("predict.frc: the problem has no forcing template");
        FrcOptions fo;
        fo.n_grid = opts.grid_n.value_or(ft.n_grid);
        fo.rho_max = ft.rho_max;
        fo.n_rho = ft.n_rho;
        fo.threads = opts.threads;
        if (fo.n_grid < 2) throw ConfigError("--grid-n must be >= 2");
        std::ostringstream bif;
        for (size_t e = 0; e < ft.epsilon.size(); ++e) {
            const double eps = ft.epsilon[e];
            FrcResult fr = frc_periodic(rom, eps, ft.Omega_lo, ft.Omega_hi, fo);
            frc_physical_amplitudes(fr, ssm, cs, obs, opts.threads);
            const std::string tag = ft.epsilon.size() == 1 ? "" : "_" + std::to_string(e + 1);
            CsvWriter w(out.path("frc" + tag + ".csv"),
                        {"Omega", "rho", "theta", "phys_amp", "stable", "bif_flag", "branch"}, out.precision());
            for (const auto& p : fr.points) {
                w << p.Omega << p.rho << p.theta << p.phys_amp << (p.stable ? 1 : 0) << to_string(p.bif_flag)
                  << p.branch;
                w.end_row();
            }
            bif << "epsilon = " << num(eps) << "\n";
            bif << "  branches: " << fr.branches.size() << "  isolas: " << fr.isola_count() << "\n";
            for (size_t b = 0; b < fr.branches.size(); ++b) {
                const auto& br = fr.branches[b];
                int n_stable = 0;
                for (const auto& p : br.points) n_stable += p.stable ? 1 : 0;
                bif << "  branch " << b << ": " << br.points.size() << " points, " << n_stable << " stable"
                    << (br.closed ? ", closed" : ", open") << (br.isola ? ", ISOLA" : "") << "\n";
            }
            for (const auto& p : fr.points)
                if (p.bif_flag != BifFlag::none)
                    bif << "  " << to_string(p.bif_flag) << "  Omega = " << num(p.Omega, 8) << "  rho = " << num(p.rho, 8)
                        << "  amp = " << num(p.phys_amp, 6) << "  branch " << p.branch << "\n";
            for (const auto& wmsg : fr.warnings) {
                bif << "  warning: " << wmsg << "\n";
                res.warnings.push_back(wmsg);
            }
            if (ft.order_check && rom.order() >= 5) {
                const auto fc = frc_order_convergence(rom, eps, ft.Omega_lo, ft.Omega_hi, ft.rho_max, 200, ft.order_tol);
                if (fc.converged) {
                    bif << "  orders O(" << rom.order() << ") and O(" << rom.order() - 2 << ") agree (max rel. diff "
                        << num(fc.max_rel_diff, 3) << ")\n";
                } else {
                    std::ostringstream m;
                    m << "FRC not converged in the expansion order at epsilon = " << num(eps)
                      << " (max rel. diff " << num(fc.max_rel_diff, 3) << " near Omega = " << num(fc.worst_Omega, 6)
                      << ", rho = " << num(fc.worst_rho, 6) << ")";
                    bif << "  NON-CONVERGED: " << m.str() << "\n";
                    res.warnings.push_back(m.str());
                }
            }
            if (opts.validate) {
                std::vector<FrcPoint> stable;
                for (const auto& p : fr.points)
                    if (p.stable && p.bif_flag == BifFlag::none) stable.push_back(p);
                std::sort(stable.begin(), stable.end(),
                          [](const FrcPoint& a, const FrcPoint& b) { return a.Omega < b.Omega || (a.Omega == b.Omega && a.rho < b.rho); });
                const int ns = std::min<int>(task.validate.n_frc_samples, static_cast<int>(stable.size()));
                std::vector<ValidationRow> rows(static_cast<size_t>(ns));
                parallel_for(ns, opts.threads, [&](int k) {
                    const auto idx = static_cast<size_t>((static_cast<double>(k) + 0.5) / ns * static_cast<double>(stable.size()));
                    const FrcPoint& p = stable[std::min(idx, stable.size() - 1)];
                    const SsmExpansion sf = nonauto_correction(ssm, cs.with_forcing(eps, p.Omega), p.Omega);
                    const auto tr = integrate_dde(sys0.with_forcing(eps, p.Omega), orbit_history(sf, cs, p.rho, p.theta, p.Omega),
                                                  task.validate.t_end, sys.tau() / task.validate.dt_per_tau);
                    SteadyStateOptions so;
                    so.transient_fraction = task.validate.transient_fraction;
                    const SteadyState ss = steady_state(tr, std::min(obs.index, n - 1), so);
                    rows[static_cast<size_t>(k)] = {"frc", eps, p.Omega, "amplitude", p.phys_amp, ss.amplitude, to_string(ss.kind)};
                });
                vrows.insert(vrows.end(), rows.begin(), rows.end());
            }
        }
        res.report += "";
        out.write_text("bifurcations.txt", bif.str());
        rep << "forced response:\n" << bif.str();
    }

    if (task.torus) {
        const TorusTask& tt = *task.torus;
        CycleOptions co;
        co.n_samples = tt.n_samples;
        const auto rc = rom_limit_cycles(rom, tt.epsilon, tt.Omega, &ssm, &cs, obs, tt.n_phase2, co);
        {
            CsvWriter w(out.path("torus.csv"), {"Omega", "phase1", "phase2", "observable"}, out.precision());
            for (const auto& s : rc.torus) {
                w << s.Omega << s.phase1 << s.phase2 << s.observable;
                w.end_row();
            }
        }
        rep << "ROM limit cycles at epsilon = " << num(tt.epsilon) << ":\n";
        for (size_t i = 0; i < rc.cycles.size(); ++i) {
            const RomCycle& cyc = rc.cycles[i];
            rep << "  Omega = " << num(cyc.Omega) << ": " << cyc.status;
            if (!cyc.found) {
                rep << "\n";
                continue;
            }
            const std::string tag = rc.cycles.size() == 1 ? "" : "_" + std::to_string(i + 1);
            const SsmExpansion sf = nonauto_correction(ssm, cs.with_forcing(tt.epsilon, cyc.Omega), cyc.Omega);
            const auto band = torus_amplitude_band(cyc, sf, obs);
            rep << ", period " << num(cyc.period) << ", multiplier " << num(cyc.multiplier, 6)
                << (cyc.stable ? " (stable torus)" : " (unstable torus)") << ", amplitude band [" << num(band.first, 6)
                << ", " << num(band.second, 6) << "]\n";
            {
                CsvWriter w(out.path("rom_cycle" + tag + ".csv"), {"t", "rho", "theta"}, out.precision());
                for (size_t k = 0; k < cyc.t.size(); ++k) {
                    w << cyc.t[k] << cyc.rho[k] << cyc.theta[k];
                    w.end_row();
                }
            }
            const auto sec = torus_section(cyc, sf, 0.0, n);
            std::vector<std::string> names;
            for (int c = 0; c < n; ++c) names.push_back("x" + std::to_string(c + 1));
            write_section_csv(out.path("torus_section" + tag + ".csv"), sec, names, out.precision());
            if (opts.validate) {
                const double t_end = std::max(task.validate.t_end, 100.0 * cyc.period);
                const auto tr = integrate_dde(sys0.with_forcing(tt.epsilon, cyc.Omega),
                                              orbit_history(sf, cs, cyc.rho[0], cyc.theta[0], cyc.Omega), t_end,
                                              sys.tau() / task.validate.dt_per_tau);
                SteadyStateOptions so;
                so.transient_fraction = task.validate.transient_fraction;
                const SteadyState ss = steady_state(tr, std::min(obs.index, n - 1), so);
                vrows.push_back({"torus", tt.epsilon, cyc.Omega, "band_min", band.first, ss.band.first, to_string(ss.kind)});
                vrows.push_back({"torus", tt.epsilon, cyc.Omega, "band_max", band.second, ss.band.second, to_string(ss.kind)});
                const double t_from = tr.t_begin() + so.transient_fraction * (tr.t_end() - tr.t_begin());
                const auto dsec = poincare_section(tr, cyc.Omega, t_from);
                const double H = hausdorff_distance(sec, dsec);
                vrows.push_back({"torus", tt.epsilon, cyc.Omega, "section_hausdorff_rel", H / diameter(dsec), 0.0,
                                 std::to_string(dsec.size()) + " section points"});
            }
        }
    }

    if (opts.validate) {
        CsvWriter w(out.path("validation.csv"),
                    {"task", "epsilon", "Omega", "quantity", "rom", "reference", "rel_error", "note"}, out.precision());
        rep << "validation against method-of-steps DDE integration:\n";
        for (const auto& v : vrows) {
            const bool is_ratio = v.quantity == "section_hausdorff_rel";
            const double re = is_ratio ? v.rom : rel_err(v.rom, v.reference);
            w << v.task << v.epsilon << v.Omega << v.quantity << v.rom << v.reference << re << v.note;
            w.end_row();
            rep << "  " << v.task << " eps=" << num(v.epsilon, 4) << " Omega=" << num(v.Omega, 6) << " " << v.quantity
                << ": ROM " << num(v.rom, 6) << " reference " << num(v.reference, 6) << " rel " << num(re, 3) << " ("
                << v.note << ")\n";
        }
    }
    for (const auto& w : res.warnings) rep << "warning: " << w << "\n";
    res.report = rep.str();
    out.write_text("predict_report.txt", res.report);
    return res;
}

// ---- simulate ----

CommandResult cmd_simulate(const RunConfig& cfg, const CommandOptions& opts) {
    if (!cfg.simulate) throw ConfigError("simulate: the config has no 'simulate' block");
    const SimulateTask& st = *cfg.simulate;
    CommandResult res;
    Output out(cfg, opts, res);
    const DelaySystem sys = build_system(cfg.problem);
    const int n = sys.n();
    const ChainSystem cs = build_chain(sys, cfg.N);
    const bool forced = sys.forced();
    std::vector<int> record = st.record.empty() ? block_indices(n) : st.record;
    for (int r : record)
        if (r < 0 || r >= n) throw ConfigError("simulate.record: component " + std::to_string(r) + " out of range");

    std::optional<Reduction> red;
    auto need_reduction = [&]() -> const Reduction& {
        if (!red) red = reduce(cfg, opts, cs, out, true);
        return *red;
    };

    InitialHistory hist;
    std::optional<Vec> z0;
    if (st.history.kind == "constant") {
        if (static_cast<int>(st.history.value.size()) != n)
            throw ConfigError("simulate.history.value: " + std::to_string(n) + " components expected");
        Vec x0(n);
        for (int i = 0; i < n; ++i) x0[i] = st.history.value[static_cast<size_t>(i)];
        hist = InitialHistory::constant(x0);
    } else {
        const Reduction& r = need_reduction();
        const double rate = forced ? sys.Omega() : r.rom.b(st.history.rho);
        const SsmExpansion s = forced ? nonauto_correction(r.ssm, cs, sys.Omega()) : r.ssm;
        hist = orbit_history(s, cs, st.history.rho, st.history.theta, rate);
        z0 = orbit_chain_state(s, st.history.rho, st.history.theta);
    }

    Trajectory tr;
    std::ostringstream rep;
    rep << "system: " << sys.name() << (forced ? "  (forced)" : "") << "\n";
    if (st.solver == "dde") {
        DdeOptions d;
        d.record = record;
        tr = integrate_dde(sys, hist, st.t_end, sys.tau() / st.dt_per_tau, d);
        rep << "solver: method of steps, RK4, dt = tau/" << st.dt_per_tau << "\n";
    } else {
        ChainOptions co;
        co.method = st.method == "dopri5" ? ChainMethod::dopri5 : ChainMethod::sdirk4;
        co.record = record;  // u0 block indices coincide with the DDE components
        const Vec zinit = z0 ? *z0 : history_to_chain_state(cs, hist);
        ChainStats stats;
        tr = integrate_chain(cs, zinit, st.t_end, st.tol, co, &stats);
        rep << "solver: chain ODE (N = " << cfg.N << "), " << st.method << ", tol = " << num(st.tol, 3) << ", "
            << stats.accepted << " steps\n";
    }
    write_trajectory_csv(out.path("trajectory.csv"), tr, st.output_stride, out.precision());

    SteadyStateOptions so;
    so.transient_fraction = st.transient_fraction;
    for (int r : record) {
        const SteadyState ss = steady_state(tr, r, so);
        rep << "x" << r + 1 << ": " << to_string(ss.kind);
        if (ss.kind == ResponseKind::periodic)
            rep << ", amplitude " << num(ss.amplitude) << ", period " << num(ss.period);
        else if (ss.kind == ResponseKind::quasi_periodic)
            rep << ", band [" << num(ss.band.first) << ", " << num(ss.band.second) << "], carrier period "
                << num(ss.period) << ", modulation period " << num(ss.modulation_period);
        else if (ss.kind == ResponseKind::decay)
            rep << ", envelope rate " << num(ss.decay_rate, 6);
        if (!ss.note.empty()) rep << " (" << ss.note << ")";
        rep << "\n";
    }

    if (st.poincare) {
        if (!forced) throw ConfigError("simulate.poincare: needs an active forcing (epsilon > 0)");
        const double t_from = tr.t_begin() + st.transient_fraction * (tr.t_end() - tr.t_begin());
        const auto sec = poincare_section(tr, sys.Omega(), t_from);
        std::vector<std::string> names;
        for (int r : record) names.push_back("x" + std::to_string(r + 1));
        write_section_csv(out.path("poincare.csv"), sec, names, out.precision());
        rep << "Poincare section: " << sec.size() << " points\n";
    }

    if (st.rom_compare) {
        const Reduction& r = need_reduction();
        const cplx p0 = project_initial(r.ssm, hist, cs, st.projection);
        const Rom rr = forced ? r.rom.with_forcing(sys.epsilon(), sys.Omega()) : r.rom;
        const SsmExpansion s = forced ? nonauto_correction(r.ssm, cs, sys.Omega()) : r.ssm;
        std::vector<double> times;
        for (size_t i = 0; i < tr.times.size(); i += static_cast<size_t>(st.output_stride)) times.push_back(tr.times[i]);
        const auto ps = integrate_rom(rr, p0, times);
        std::vector<std::string> hdr{"t", "rho", "theta"};
        for (int c : record) hdr.push_back("x" + std::to_string(c + 1));
        CsvWriter w(out.path("rom_trajectory.csv"), hdr, out.precision());
        double worst_tail = 0.0, scale = 0.0;
        const double t_from = tr.t_begin() + st.transient_fraction * (tr.t_end() - tr.t_begin());
        for (size_t k = 0; k < times.size(); ++k) {
            const Vec z = lift(s, ps[k], times[k]);
            w << times[k] << std::abs(ps[k]) << std::arg(ps[k]);
            for (int c : record) w << z[c];
            w.end_row();
            if (times[k] >= t_from) {
                const int col = tr.column(record.front());
                worst_tail = std::max(worst_tail, std::abs(z[record.front()] - tr.at(times[k], col)));
                scale = std::max(scale, std::abs(tr.at(times[k], col)));
            }
        }
        rep << "ROM comparison: p(0) = " << cnum(p0) << "; max |x" << record.front() + 1
            << " difference| after the transient = " << num(worst_tail, 4) << " (signal max " << num(scale, 4) << ")\n";
    }
    res.report = rep.str();
    out.write_text("simulate_report.txt", res.report);
    return res;
}

CommandResult run_command(const std::string& name, const RunConfig& cfg, const CommandOptions& opts) {
    if (name == "spectrum") return cmd_spectrum(cfg, opts);
    if (name == "ssm") return cmd_ssm(cfg, opts);
    if (name == "predict") return cmd_predict(cfg, opts);
    if (name == "simulate") return cmd_simulate(cfg, opts);
    throw ConfigError("unknown command '" + name + "'");
}

}  // namespace ddessm
