#pragma once

// Run configuration: one JSON document per reproducible run. Parsing is
// strict; unknown keys fail with the dotted path of the offending node.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddessm/delay_model.hpp"
#include "ddessm/ssm.hpp"

namespace ddessm {

struct ForcingConfig {
    double epsilon = 0.0;
    double Omega = 0.0;
    std::optional<ForcingScaling> scaling;
    std::vector<cplx> amplitude;  // custom systems only
};

struct ProblemConfig {
    std::string kind;  // duffing | coupled | hutchinson | custom
    std::map<std::string, double> params;
    double tau = 1.0;
    std::optional<ForcingConfig> forcing;
    // custom systems
    std::string name = "custom";
    Mat A_now, A_delayed;
    std::vector<Monomial> terms;
};

/// Names accepted in `params` (and as sweep parameters) for a problem kind.
std::vector<std::string> parameter_names(const std::string& kind);

DelaySystem build_system(const ProblemConfig& pc);
/// Same problem with one parameter (or "tau") replaced.
DelaySystem build_system_with(const ProblemConfig& pc, const std::string& param, double value);

struct HopfTask {
    std::string param;
    double lo = 0.0, hi = 0.0;
    double tol = 1e-4;
    int n_points = 21;  // locus samples written to CSV
};

struct SpectrumTask {
    int n_eigs = 10;
    std::vector<int> convergence_N;
    std::optional<HopfTask> hopf;
};

struct SsmTask {
    int order = 9;
    double resonance_tol = 1e-6;
    std::string expansion_file = "ssm_expansion.json";  // inside the output directory
    bool load = false;  // predict: read the expansion instead of computing it
};

struct BackboneTask {
    double rho_max = 0.0;
    int n_points = 400;
    double tol = 1e-3;
};

struct LimitCycleTask {
    int n_samples = 200;
    std::optional<double> conv_radius;
    double agreement = 0.01;
    double boundary_margin = 0.05;
};

struct FrcTask {
    std::vector<double> epsilon;
    double Omega_lo = 0.0, Omega_hi = 0.0;
    int n_grid = 400;
    double rho_max = 0.0;
    int n_rho = 2000;
    bool order_check = true;
    double order_tol = 1e-2;
};

struct TorusTask {
    double epsilon = 0.0;
    std::vector<double> Omega;
    int n_phase2 = 64;
    int n_samples = 400;
};

struct ValidateTask {
    double t_end = 1500.0;
    int dt_per_tau = 40;
    int n_frc_samples = 5;
    double transient_fraction = 0.6;
};

struct PredictTask {
    int observable = 0;
    std::optional<BackboneTask> backbone;
    std::optional<LimitCycleTask> limit_cycle;
    std::optional<FrcTask> frc;
    std::optional<TorusTask> torus;
    ValidateTask validate;
};

struct HistoryConfig {
    std::string kind = "constant";  // constant | orbit
    std::vector<double> value;      // constant
    double rho = 0.0, theta = 0.0;  // orbit on the SSM
};

struct SimulateTask {
    std::string solver = "dde";  // dde | chain
    double t_end = 0.0;
    int dt_per_tau = 40;
    double tol = 1e-8;
    std::string method = "sdirk4";  // chain: sdirk4 | dopri5
    HistoryConfig history;
    std::vector<int> record;  // DDE components; empty: all
    bool poincare = false;
    double transient_fraction = 0.6;
    int output_stride = 1;
    bool rom_compare = false;
    ProjectionMethod projection = ProjectionMethod::adjoint;
};

struct OutputConfig {
    std::string dir = "out";
    int precision = 12;
    bool export_chain = false;  // spectrum: chain_A.mtx and chain_forcing.mtx
};

struct RunConfig {
    ProblemConfig problem;
    int N = 100;
    SsmTask ssm;
    std::optional<SpectrumTask> spectrum;
    std::optional<PredictTask> predict;
    std::optional<SimulateTask> simulate;
    OutputConfig output;
};

RunConfig parse_config(const nlohmann::json& j);
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace ddessm
