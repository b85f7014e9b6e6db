// gradflow <command> --config <file> [--jobs N] [--heavy] [--no-validate]
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>

#include "gradflow/config.hpp"
#include "gradflow/errors.hpp"
#include "gradflow/experiment.hpp"

namespace {

int run(gradflow::Command command, const std::string& config_path, std::size_t jobs, bool heavy, bool no_validate,
        const std::string& out_override) {
    using namespace gradflow;
    ExperimentSpec spec;
    try {
        const Config cfg = config_path.empty() ? Config{} : Config::load(config_path);
        spec = ExperimentSpec::from_config(command, cfg, heavy);
        spec.jobs = jobs;
        spec.no_validate = no_validate;
        if (!out_override.empty()) spec.out_dir = out_override;
        spec.validate();
    } catch (const std::exception& e) {
        std::cerr << "gradflow: config error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        const ExperimentResult res = run_experiment(spec);
        for (const auto& m : res.messages) std::cout << m << '\n';
        std::cout << "wrote " << res.artifacts.size() << " artifact(s) and "
                  << (spec.out_dir / "manifest.txt").string() << '\n';
        return res.exit_code;
    } catch (const ParseError& e) {
        std::cerr << "gradflow: data error: " << e.what() << '\n';
        return kExitData;
    } catch (const IntegrityError& e) {
        std::cerr << "gradflow: data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "gradflow: data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ConfigError& e) {
        std::cerr << "gradflow: config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "gradflow: error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient similarity experiments for deep graph convolutional networks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::size_t jobs = 1;
    bool heavy = false;
    bool no_validate = false;

    const char* commands[][2] = {
        {"grad-profile", "Per-layer gradient similarity profiles and decay fits"},
        {"depth-sweep", "Test accuracy over depth and Lipschitz bound, best lr by validation"},
        {"train-curves", "Per-epoch training curves for each Lipschitz bound"},
        {"scatter", "Representation vs gradient similarity vs test accuracy"},
        {"bound-check", "Gradient similarity upper bounds on random linear instances"},
        {"oracle-test", "Closed-form gradients vs backpropagation on random linear instances"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Flat key = value config file");
        sub->add_option("--jobs", jobs, "Grid cells trained concurrently")->check(CLI::PositiveNumber);
        sub->add_flag("--heavy", heavy, "Extend the default depth grid to 512 layers");
        sub->add_flag("--no-validate", no_validate, "Skip dataset count validation");
        sub->add_option("--out", out_override, "Override out_dir");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : gradflow::kExitConfig;
    }

    const auto* chosen = app.get_subcommands().front();
    const auto command = gradflow::parse_command(chosen->get_name());
    return run(*command, config_path, jobs, heavy, no_validate, out_override);
}
