// Benchmark driver: runs one experiment from a config file and writes a CSV report.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "hicp/bench.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitRuntimeError = 1;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run an ICP benchmark experiment and write a CSV report"};
    std::string experiment;
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> timing;
    std::optional<double> alpha;
    std::optional<int> bins;

    app.add_option("experiment", experiment, "init_noise | depth_noise | model_noise | sequential")->required();
    app.add_option("--config", config_path, "Flat key = value experiment config")->required();
    app.add_option("--seed", seed, "64-bit seed (overrides the config)");
    app.add_option("--out", out_path, "Output CSV path (overrides the config)");
    app.add_option("--timing", timing, "measured | fixed:<seconds>");
    app.add_option("--alpha", alpha, "Dynamic Switching threshold");
    app.add_option("--bins", bins, "Number of pre-VSD bins");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfigError;
    }

    hicp::ExperimentConfig cfg;
    try {
        cfg = hicp::load_config(config_path);
        cfg.experiment = experiment;
        if (seed) cfg.seed = *seed;
        if (!out_path.empty()) cfg.output_path = out_path;
        if (timing) cfg.timing = hicp::parse_timing(*timing);
        if (alpha) cfg.alpha = *alpha;
        if (bins) cfg.bins = *bins;
        cfg.validate();
    } catch (const hicp::Error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    }

    std::ofstream out(cfg.output_path, std::ios::binary);
    if (!out) {
        std::cerr << "config error: cannot write " << cfg.output_path << '\n';
        return kExitConfigError;
    }

    try {
        std::cout << "experiment=" << cfg.experiment << " seed=" << cfg.seed << " timing=" << hicp::format_timing(cfg.timing)
                  << " alpha=" << cfg.alpha << " bins=" << cfg.bins << " tau_max_fraction=" << cfg.tau_max_fraction
                  << " theta_max_deg=" << cfg.theta_max_deg
                  << " cull_back_faces=" << (cfg.cull_back_faces ? "true" : "false") << '\n';
        const hicp::ExperimentResult res = hicp::run_experiment(cfg);
        hicp::write_csv(res.rows, out);
        hicp::print_summary(res, std::cout);
        std::cout << res.rows.size() << " rows written to " << cfg.output_path << '\n';
    } catch (const hicp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const hicp::MeshFormatError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntimeError;
    }
    return 0;
}
