// ddessm command-line front end.
//
//   ddessm spectrum --config duffing.json --out out/
//   ddessm predict  --config frc.json --validate --threads 4

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddessm/commands.hpp"
#include "ddessm/config.hpp"
#include "ddessm/error.hpp"

namespace {

int run(const std::string& name, const std::string& config_path, const ddessm::CommandOptions& opts) {
    try {
        const ddessm::RunConfig cfg = ddessm::load_config(config_path);
        const ddessm::CommandResult res = ddessm::run_command(name, cfg, opts);
        std::cout << res.report;
        for (const auto& f : res.files) std::cerr << "wrote " << f << "\n";
        return 0;
    } catch (const ddessm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ddessm::ResonanceError& e) {
        std::cerr << "resonance: " << e.what() << "\n";
        return 3;
    } catch (const ddessm::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral-submanifold reduction of delay differential equations"};
    app.require_subcommand(1);

    std::string config_path;
    ddessm::CommandOptions opts;
    std::string out_dir;
    int order = 0, grid_n = 0;

    for (const char* name : {"spectrum", "ssm", "predict", "simulate"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--order", order, "expansion order (overrides ssm.order)");
        sub->add_option("--grid-n", grid_n, "FRC Omega grid size (overrides predict.frc.n_grid)");
        sub->add_flag("--validate", opts.validate, "cross-check predictions by DDE integration");
        sub->add_option("--threads", opts.threads, "worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    if (!out_dir.empty()) opts.out_dir = out_dir;
    if (order != 0) opts.order = order;
    if (grid_n != 0) opts.grid_n = grid_n;
    return run(app.get_subcommands().front()->get_name(), config_path, opts);
}
