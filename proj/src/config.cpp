#include "ddessm/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "ddessm/error.hpp"

namespace ddessm {

namespace {

using nlohmann::json;

// Object view that remembers which keys were read; finish() rejects the rest.
class Node {
public:
    Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    T get(const std::string& key, T def) {
        if (!has(key)) return def;
        return req<T>(key);
    }

    template <typename T>
    T req(const std::string& key) {
        used_.insert(key);
        if (!has(key)) fail("missing required key '" + key + "'");
        const json& v = j_.at(key);
        bool ok;
        if constexpr (std::is_same_v<T, double>) ok = v.is_number();
        else if constexpr (std::is_same_v<T, int>) ok = v.is_number_integer();
        else if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
        else ok = v.is_string();
        if (!ok) throw ConfigError(sub(key) + ": " + type_name<T>() + " expected");
        return v.get<T>();
    }

    const json& raw(const std::string& key) {
        used_.insert(key);
        if (!has(key)) fail("missing required key '" + key + "'");
        return j_.at(key);
    }

    Node child(const std::string& key) {
        used_.insert(key);
        if (!has(key)) fail("missing required block '" + key + "'");
        return Node(j_.at(key), sub(key));
    }

    std::optional<Node> opt_child(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return child(key);
    }

    std::vector<double> numbers(const std::string& key) {
        const json& v = raw(key);
        std::vector<double> out;
        if (v.is_number()) {
            out.push_back(v.get<double>());
            return out;
        }
        if (!v.is_array()) throw ConfigError(sub(key) + ": number or array of numbers expected");
        for (size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number())
                throw ConfigError(sub(key) + "[" + std::to_string(i) + "]: number expected");
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    std::vector<int> integers(const std::string& key) {
        const json& v = raw(key);
        if (!v.is_array()) throw ConfigError(sub(key) + ": array of integers expected");
        std::vector<int> out;
        for (size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number_integer())
                throw ConfigError(sub(key) + "[" + std::to_string(i) + "]: integer expected");
            out.push_back(v[i].get<int>());
        }
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(sub(it.key()) + ": unknown key");
    }

    std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError((path_.empty() ? std::string("<root>") : path_) + ": " + msg);
    }

private:
    template <typename T>
    static const char* type_name() {
        if constexpr (std::is_same_v<T, double>) return "number";
        if constexpr (std::is_same_v<T, int>) return "integer";
        if constexpr (std::is_same_v<T, bool>) return "boolean";
        return "string";
    }

    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void require(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) throw ConfigError(path + ": " + msg);
}

const std::map<std::string, std::map<std::string, double>>& parameter_defaults() {
    static const std::map<std::string, std::map<std::string, double>> d = {
        {"duffing", {{"delta", 0.2}, {"alpha", 2.0}, {"beta", -4.0}}},
        {"coupled", {{"mu1", 0.015}, {"mu2", 0.035}, {"gamma", 0.3}, {"beta1", -0.3}, {"beta2", -0.1}}},
        {"hutchinson", {{"M", 4.0}, {"d", 1.0}, {"a", 1.5707963267948966}}},
        {"custom", {}},
    };
    return d;
}

Mat parse_matrix(const json& v, int n, const std::string& path) {
    require(v.is_array() && static_cast<int>(v.size()) == n, path, "array of " + std::to_string(n) + " rows expected");
    Mat M(n, n);
    for (int r = 0; r < n; ++r) {
        const json& row = v[static_cast<size_t>(r)];
        require(row.is_array() && static_cast<int>(row.size()) == n, path + "[" + std::to_string(r) + "]",
                "row of " + std::to_string(n) + " numbers expected");
        for (int c = 0; c < n; ++c) {
            require(row[static_cast<size_t>(c)].is_number(), path, "numeric entries expected");
            M(r, c) = row[static_cast<size_t>(c)].get<double>();
        }
    }
    return M;
}

ForcingScaling parse_scaling(const std::string& s, const std::string& path) {
    if (s == "constant") return ForcingScaling::constant;
    if (s == "omega_squared") return ForcingScaling::omega_squared;
    throw ConfigError(path + ": scaling must be 'constant' or 'omega_squared'");
}

ProblemConfig parse_problem(Node n) {
    ProblemConfig pc;
    pc.kind = n.req<std::string>("kind");
    const auto& defs = parameter_defaults();
    const auto it = defs.find(pc.kind);
    if (it == defs.end()) throw ConfigError(n.sub("kind") + ": must be duffing, coupled, hutchinson or custom");
    pc.params = it->second;
    if (pc.kind == "coupled") pc.tau = 0.5;
    if (pc.kind == "duffing") pc.tau = 1.0;
    pc.tau = n.get<double>("tau", pc.tau);
    require(pc.tau > 0.0, n.sub("tau"), "must be positive");

    if (auto p = n.opt_child("params")) {
        const json& raw = n.raw("params");
        for (auto kv = raw.begin(); kv != raw.end(); ++kv) {
            const std::string& key = kv.key();
            if (pc.kind == "coupled" && key == "q3_squared_coeff") {
                pc.params[key] = p->req<double>(key);
                continue;
            }
            if (!pc.params.count(key)) throw ConfigError(p->sub(key) + ": unknown parameter for " + pc.kind);
            pc.params[key] = p->req<double>(key);
        }
        p->finish();
    }
    if (pc.kind == "hutchinson") {
        const double M = pc.params["M"];
        require(M >= 1.0 && M == std::floor(M), n.sub("params.M"), "positive integer expected");
    }

    if (pc.kind == "custom") {
        pc.name = n.get<std::string>("name", "custom");
        const int dim = n.req<int>("n");
        require(dim >= 1, n.sub("n"), "must be >= 1");
        pc.A_now = parse_matrix(n.raw("A_now"), dim, n.sub("A_now"));
        pc.A_delayed = parse_matrix(n.raw("A_delayed"), dim, n.sub("A_delayed"));
        if (n.has("terms")) {
            const json& terms = n.raw("terms");
            require(terms.is_array(), n.sub("terms"), "array expected");
            for (size_t i = 0; i < terms.size(); ++i) {
                Node t(terms[i], n.sub("terms") + "[" + std::to_string(i) + "]");
                Monomial m;
                m.row = t.req<int>("row");
                m.coeff = t.req<double>("coeff");
                const json& f = t.raw("factors");
                require(f.is_array(), t.sub("factors"), "array of [variable, power] pairs expected");
                for (const auto& pr : f) {
                    require(pr.is_array() && pr.size() == 2 && pr[0].is_number_integer() && pr[1].is_number_integer(),
                            t.sub("factors"), "[variable, power] integer pairs expected");
                    m.factors.emplace_back(pr[0].get<int>(), pr[1].get<int>());
                }
                t.finish();
                pc.terms.push_back(std::move(m));
            }
        }
    }

    if (auto f = n.opt_child("forcing")) {
        ForcingConfig fc;
        fc.epsilon = f->get<double>("epsilon", 0.0);
        fc.Omega = f->get<double>("Omega", 0.0);
        require(fc.epsilon >= 0.0, f->sub("epsilon"), "must be non-negative");
        if (f->has("scaling")) fc.scaling = parse_scaling(f->req<std::string>("scaling"), f->sub("scaling"));
        if (f->has("amplitude")) {
            require(pc.kind == "custom", f->sub("amplitude"), "only custom systems take an explicit amplitude");
            const json& a = f->raw("amplitude");
            require(a.is_array(), f->sub("amplitude"), "array expected");
            for (const auto& e : a) {
                if (e.is_number()) {
                    fc.amplitude.emplace_back(e.get<double>(), 0.0);
                } else {
                    require(e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number(),
                            f->sub("amplitude"), "entries must be numbers or [re, im] pairs");
                    fc.amplitude.emplace_back(e[0].get<double>(), e[1].get<double>());
                }
            }
        }
        f->finish();
        pc.forcing = fc;
    }
    n.finish();
    // build once to surface model errors at parse time
    (void)build_system(pc);
    return pc;
}

SpectrumTask parse_spectrum(Node n) {
    SpectrumTask t;
    t.n_eigs = n.get<int>("n_eigs", t.n_eigs);
    require(t.n_eigs >= 1, n.sub("n_eigs"), "must be >= 1");
    if (auto c = n.opt_child("convergence")) {
        t.convergence_N = c->integers("N_list");
        require(t.convergence_N.size() >= 2, c->sub("N_list"), "at least two N values expected");
        for (int N : t.convergence_N) require(N >= 1, c->sub("N_list"), "N must be >= 1");
        c->finish();
    }
    if (auto h = n.opt_child("hopf")) {
        HopfTask ht;
        ht.param = h->req<std::string>("param");
        ht.lo = h->req<double>("lo");
        ht.hi = h->req<double>("hi");
        ht.tol = h->get<double>("tol", ht.tol);
        ht.n_points = h->get<int>("n_points", ht.n_points);
        require(ht.hi > ht.lo, h->sub("hi"), "must exceed lo");
        require(ht.n_points >= 2, h->sub("n_points"), "must be >= 2");
        require(ht.tol > 0.0, h->sub("tol"), "must be positive");
        h->finish();
        t.hopf = ht;
    }
    n.finish();
    return t;
}

std::vector<double> positive_list(Node& n, const std::string& key) {
    auto v = n.numbers(key);
    require(!v.empty(), n.sub(key), "at least one value expected");
    for (double x : v) require(x > 0.0, n.sub(key), "values must be positive");
    return v;
}

PredictTask parse_predict(Node n) {
    PredictTask t;
    t.observable = n.get<int>("observable", 0);
    require(t.observable >= 0, n.sub("observable"), "must be >= 0");
    if (auto b = n.opt_child("backbone")) {
        BackboneTask bt;
        bt.rho_max = b->req<double>("rho_max");
        bt.n_points = b->get<int>("n_points", bt.n_points);
        bt.tol = b->get<double>("tol", bt.tol);
        require(bt.rho_max > 0.0, b->sub("rho_max"), "must be positive");
        require(bt.n_points >= 2, b->sub("n_points"), "must be >= 2");
        b->finish();
        t.backbone = bt;
    }
    if (auto l = n.opt_child("limit_cycle")) {
        LimitCycleTask lt;
        lt.n_samples = l->get<int>("n_samples", lt.n_samples);
        if (l->has("conv_radius")) lt.conv_radius = l->req<double>("conv_radius");
        lt.agreement = l->get<double>("agreement", lt.agreement);
        lt.boundary_margin = l->get<double>("boundary_margin", lt.boundary_margin);
        require(lt.n_samples >= 8, l->sub("n_samples"), "must be >= 8");
        l->finish();
        t.limit_cycle = lt;
    }
    if (auto f = n.opt_child("frc")) {
        FrcTask ft;
        ft.epsilon = positive_list(*f, "epsilon");
        ft.Omega_lo = f->req<double>("Omega_lo");
        ft.Omega_hi = f->req<double>("Omega_hi");
        ft.rho_max = f->req<double>("rho_max");
        ft.n_grid = f->get<int>("n_grid", ft.n_grid);
        ft.n_rho = f->get<int>("n_rho", ft.n_rho);
        ft.order_check = f->get<bool>("order_check", ft.order_check);
        ft.order_tol = f->get<double>("order_tol", ft.order_tol);
        require(ft.Omega_lo > 0.0 && ft.Omega_hi > ft.Omega_lo, f->sub("Omega_hi"), "need 0 < Omega_lo < Omega_hi");
        require(ft.rho_max > 0.0, f->sub("rho_max"), "must be positive");
        require(ft.n_grid >= 2, f->sub("n_grid"), "must be >= 2");
        require(ft.n_rho >= 10, f->sub("n_rho"), "must be >= 10");
        f->finish();
        t.frc = ft;
    }
    if (auto q = n.opt_child("torus")) {
        TorusTask tt;
        tt.epsilon = q->req<double>("epsilon");
        tt.Omega = positive_list(*q, "Omega");
        tt.n_phase2 = q->get<int>("n_phase2", tt.n_phase2);
        tt.n_samples = q->get<int>("n_samples", tt.n_samples);
        require(tt.epsilon > 0.0, q->sub("epsilon"), "must be positive");
        require(tt.n_phase2 >= 4 && tt.n_samples >= 8, q->sub("n_samples"), "sample counts too small");
        q->finish();
        t.torus = tt;
    }
    if (auto v = n.opt_child("validate")) {
        t.validate.t_end = v->get<double>("t_end", t.validate.t_end);
        t.validate.dt_per_tau = v->get<int>("dt_per_tau", t.validate.dt_per_tau);
        t.validate.n_frc_samples = v->get<int>("n_frc_samples", t.validate.n_frc_samples);
        t.validate.transient_fraction = v->get<double>("transient_fraction", t.validate.transient_fraction);
        require(t.validate.t_end > 0.0, v->sub("t_end"), "must be positive");
        require(t.validate.dt_per_tau >= 20, v->sub("dt_per_tau"), "must be >= 20");
        require(t.validate.transient_fraction >= 0.0 && t.validate.transient_fraction < 1.0,
                v->sub("transient_fraction"), "must lie in [0, 1)");
        v->finish();
    }
    n.finish();
    return t;
}

SimulateTask parse_simulate(Node n) {
    SimulateTask t;
    t.solver = n.get<std::string>("solver", t.solver);
    require(t.solver == "dde" || t.solver == "chain", n.sub("solver"), "must be 'dde' or 'chain'");
    t.t_end = n.req<double>("t_end");
    require(t.t_end > 0.0, n.sub("t_end"), "must be positive");
    t.dt_per_tau = n.get<int>("dt_per_tau", t.dt_per_tau);
    require(t.dt_per_tau >= 20, n.sub("dt_per_tau"), "must be >= 20");
    t.tol = n.get<double>("tol", t.tol);
    require(t.tol >= 1e-12 && t.tol <= 1e-3, n.sub("tol"), "must lie in [1e-12, 1e-3]");
    t.method = n.get<std::string>("method", t.method);
    require(t.method == "sdirk4" || t.method == "dopri5", n.sub("method"), "must be 'sdirk4' or 'dopri5'");
    if (auto h = n.opt_child("history")) {
        t.history.kind = h->get<std::string>("kind", t.history.kind);
        if (t.history.kind == "constant") {
            t.history.value = h->numbers("value");
        } else if (t.history.kind == "orbit") {
            t.history.rho = h->req<double>("rho");
            t.history.theta = h->get<double>("theta", 0.0);
            require(t.history.rho >= 0.0, h->sub("rho"), "must be non-negative");
        } else {
            throw ConfigError(h->sub("kind") + ": must be 'constant' or 'orbit'");
        }
        h->finish();
    } else {
        throw ConfigError(n.sub("history") + ": missing required block");
    }
    if (n.has("record")) t.record = n.integers("record");
    t.poincare = n.get<bool>("poincare", t.poincare);
    t.transient_fraction = n.get<double>("transient_fraction", t.transient_fraction);
    require(t.transient_fraction >= 0.0 && t.transient_fraction < 1.0, n.sub("transient_fraction"),
            "must lie in [0, 1)");
    t.output_stride = n.get<int>("output_stride", t.output_stride);
    require(t.output_stride >= 1, n.sub("output_stride"), "must be >= 1");
    t.rom_compare = n.get<bool>("rom_compare", t.rom_compare);
    const std::string proj = n.get<std::string>("projection", "adjoint");
    if (proj == "adjoint") t.projection = ProjectionMethod::adjoint;
    else if (proj == "transpose") t.projection = ProjectionMethod::transpose;
    else if (proj == "min_distance") t.projection = ProjectionMethod::min_distance;
    else throw ConfigError(n.sub("projection") + ": must be adjoint, transpose or min_distance");
    n.finish();
    return t;
}

}  // namespace

std::vector<std::string> parameter_names(const std::string& kind) {
    std::vector<std::string> out;
    const auto& defs = parameter_defaults();
    const auto it = defs.find(kind);
    if (it == defs.end()) throw ConfigError("unknown problem kind '" + kind + "'");
    for (const auto& [k, v] : it->second) out.push_back(k);
    if (kind == "coupled") out.push_back("q3_squared_coeff");
    out.push_back("tau");
    return out;
}

DelaySystem build_system(const ProblemConfig& pc) {
    const auto P = [&](const char* k) { return pc.params.at(k); };
    const double eps = pc.forcing ? pc.forcing->epsilon : 0.0;
    const double Om = pc.forcing ? pc.forcing->Omega : 0.0;
    std::optional<DelaySystem> sys;
    if (pc.kind == "duffing") {
        sys = make_duffing(P("delta"), P("alpha"), P("beta"), pc.tau, eps, Om);
    } else if (pc.kind == "coupled") {
        std::optional<double> q3;
        if (pc.params.count("q3_squared_coeff")) q3 = pc.params.at("q3_squared_coeff");
        sys = make_coupled_oscillators(P("mu1"), P("mu2"), P("gamma"), P("beta1"), P("beta2"), pc.tau, eps,
                                       Om, q3);
    } else if (pc.kind == "hutchinson") {
        HutchinsonConfig hc{static_cast<int>(P("M")), P("d"), P("a")};
        DelaySystem h = make_hutchinson(hc);
        if (pc.tau != 1.0) h = h.with_delay(pc.tau);
        if (pc.forcing && eps > 0.0) throw ConfigError("problem.forcing: the Hutchinson model carries no forcing");
        sys = h;
    } else if (pc.kind == "custom") {
        std::optional<Forcing> f;
        if (pc.forcing && !pc.forcing->amplitude.empty()) {
            Forcing ff;
            ff.amplitude = CVec(static_cast<Eigen::Index>(pc.forcing->amplitude.size()));
            for (size_t i = 0; i < pc.forcing->amplitude.size(); ++i)
                ff.amplitude[static_cast<Eigen::Index>(i)] = pc.forcing->amplitude[i];
            ff.scaling = pc.forcing->scaling.value_or(ForcingScaling::constant);
            f = ff;
        } else if (eps > 0.0) {
            throw ConfigError("problem.forcing.amplitude: required for a forced custom system");
        }
        sys = DelaySystem(pc.name, pc.tau, pc.A_now, pc.A_delayed, pc.terms, f, eps, Om);
    } else {
        throw ConfigError("unknown problem kind '" + pc.kind + "'");
    }
    if (pc.forcing && pc.forcing->scaling && pc.kind != "custom" && sys->forcing()) {
        Forcing f = *sys->forcing();
        f.scaling = *pc.forcing->scaling;
        sys = DelaySystem(sys->name(), sys->tau(), sys->A_now(), sys->A_delayed(), sys->terms(), f,
                          sys->epsilon(), sys->Omega());
    }
    return *sys;
}

DelaySystem build_system_with(const ProblemConfig& pc, const std::string& param, double value) {
    ProblemConfig c = pc;
    if (param == "tau") {
        c.tau = value;
    } else {
        const auto names = parameter_names(pc.kind);
        if (std::find(names.begin(), names.end(), param) == names.end())
            throw ConfigError("parameter '" + param + "' is not defined for " + pc.kind + " problems");
        c.params[param] = value;
    }
    return build_system(c);
}

RunConfig parse_config(const nlohmann::json& j) {
    RunConfig rc;
    Node root(j, "");
    rc.problem = parse_problem(root.child("problem"));
    if (auto d = root.opt_child("discretization")) {
        rc.N = d->get<int>("N", rc.N);
        require(rc.N >= 1, d->sub("N"), "must be >= 1");
        d->finish();
    }
    if (auto s = root.opt_child("ssm")) {
        rc.ssm.order = s->get<int>("order", rc.ssm.order);
        rc.ssm.resonance_tol = s->get<double>("resonance_tol", rc.ssm.resonance_tol);
        rc.ssm.expansion_file = s->get<std::string>("expansion_file", rc.ssm.expansion_file);
        rc.ssm.load = s->get<bool>("load", rc.ssm.load);
        require(rc.ssm.order >= 3 && rc.ssm.order % 2 == 1, s->sub("order"), "odd order >= 3 expected");
        require(rc.ssm.resonance_tol > 0.0, s->sub("resonance_tol"), "must be positive");
        require(!rc.ssm.expansion_file.empty(), s->sub("expansion_file"), "must not be empty");
        s->finish();
    }
    if (auto s = root.opt_child("spectrum")) rc.spectrum = parse_spectrum(*s);
    if (auto p = root.opt_child("predict")) rc.predict = parse_predict(*p);
    if (auto s = root.opt_child("simulate")) rc.simulate = parse_simulate(*s);
    if (auto o = root.opt_child("output")) {
        rc.output.dir = o->get<std::string>("dir", rc.output.dir);
        rc.output.precision = o->get<int>("precision", rc.output.precision);
        require(rc.output.precision >= 3 && rc.output.precision <= 17, o->sub("precision"), "must lie in [3, 17]");
        rc.output.export_chain = o->get<bool>("export_chain", rc.output.export_chain);
        o->finish();
    }
    root.finish();
    return rc;
}

RunConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        // byte offset -> line/column
        const size_t pos = std::min<size_t>(e.byte, text.size());
        size_t line = 1, col = 1;
        for (size_t i = 0; i + 1 < pos; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream os;
        os << "config parse error at line " << line << ", column " << col << ": " << e.what();
        throw ConfigError(os.str());
    }
    return parse_config(j);
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace ddessm
