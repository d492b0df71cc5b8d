// Command-line entry point.  Every command takes a JSON run
// configuration (--config) and an output directory (--out); all
// randomness derives from the config's master seed, so reruns are
// byte-identical.  Exit codes: 0 success, 2 configuration error,
// 3 data error, 1 anything else.
#include <exception>
#include <iostream>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "apekit/csv.hpp"
#include "cli_commands.hpp"
#include "cli_config.hpp"

namespace {

struct CommandInfo {
    const char* name;
    const char* help;
};

constexpr CommandInfo kCommands[] = {
    {"solve-simulate", "Solve the life-cycle model and simulate a household panel"},
    {"table1", "Structural vs regression-based tax effects, pooled and by age"},
    {"estimate-beliefs", "Fit belief distributions from a survey-response file"},
    {"regress", "Fit the consumption rule on a household panel"},
    {"counterfactual", "Average partial effects of tax reforms, with bootstrap errors"},
    {"bias-correct", "Measurement-error bias correction across scenario counts"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"apekit: life-cycle consumption, income beliefs, and tax counterfactuals"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "apekit 1.0.0");

    std::string config_path, out_dir;
    for (const CommandInfo& info : kCommands) {
        CLI::App* sub = app.add_subcommand(info.name, info.help);
        sub->add_option("--config", config_path, "Run configuration file (JSON)")->required();
        sub->add_option("--out", out_dir, "Output directory (created if absent)")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // a bad command line is a configuration error
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const nlohmann::json config = apekit::cli::load_config_file(config_path);
        apekit::cli::run_command(command, config, out_dir);
        return 0;
    } catch (const apekit::cli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const apekit::CsvDataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        // Domain validation from the library (model or parameter ranges).
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
