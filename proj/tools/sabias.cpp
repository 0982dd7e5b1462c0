#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sabias/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code_for(const sabias::Error& e) {
    return e.code() == sabias::Err::ConfigInvalid ? kExitConfig : kExitRuntime;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Constant-stepsize stochastic approximation bias experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int threads = 0;
    bool verbose = false;

    auto* run = app.add_subcommand("run", "Run the study described by a JSON config");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--threads", threads, "replica parallelism cap (default: all cores)");
    run->add_flag("--verbose", verbose, "per-study progress on stderr");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Summarize a finished run as report.md");
    report->add_option("--out", report_dir, "directory holding the run artifacts")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            sabias::Experiment exp =
                sabias::build_experiment(sabias::load_config(config_path));
            if (const char* env_seed = std::getenv("SABIAS_SEED")) {
                exp.config.sa.seed = std::strtoull(env_seed, nullptr, 10);
                std::cerr << "seed overridden by SABIAS_SEED=" << exp.config.sa.seed << '\n';
            }
            sabias::RunOptions opts;
            opts.n_threads = threads;
            opts.verbose = verbose;
            const sabias::RunSummary summary = sabias::run_experiment(exp, out_dir, opts);
            std::cout << "wrote " << summary.artifacts.size() << " artifacts to " << out_dir << '\n';
            return 0;
        }
        const auto path = sabias::emit_report(report_dir);
        std::cout << "wrote " << path.string() << '\n';
        return 0;
    } catch (const sabias::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}
