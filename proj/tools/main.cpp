#include "kreproj/app.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <optional>

int main(int argc, char** argv)
{
    using namespace kreproj;

    CLI::App cli{"Koopman eDMD surrogates with manifold reprojection"};
    cli.require_subcommand(1);
    cli.set_version_flag("--version", version());

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;
    bool strict = false;
    bool force = false;
    std::string log_level = "warn";

    cli.add_option("--config", config_path, "INI experiment config")->check(CLI::ExistingFile);
    cli.add_option("--seed", seed, "Override [edmd] seed");
    cli.add_option("--out", out_dir, "Override [output] dir");
    cli.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    cli.add_flag("--strict", strict, "Treat dropped samples and unconverged projections as errors");
    cli.add_flag("--force", force, "Fit even when m < N");
    cli.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

    CLI::App* fit = cli.add_subcommand("fit", "Fit K and write K.csv, K.csv.meta, snapshots.csv");
    bool verify = false;
    fit->add_flag("--verify", verify, "Compare K with exp(dt A) (system example1)");

    CLI::App* reproduce = cli.add_subcommand("reproduce", "Write the CSVs for one figure");
    std::string figure;
    reproduce->add_option("figure", figure, "fig3, fig45, fig6 or fig7")
        ->required()
        ->check(CLI::IsMember(figure_names()));

    CLI::App* check = cli.add_subcommand("check", "Run the consistency checks and print PASS/FAIL");

    CLI11_PARSE(cli, argc, argv);
    spdlog::set_default_logger(spdlog::stderr_color_st("kreproj"));
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        ExperimentConfig config = reproduce->parsed() ? figure_config(figure) : ExperimentConfig{};
        if (!config_path.empty()) config = load_config(config_path, config);
        if (seed) config.seed = *seed;
        if (out_dir) config.output_dir = *out_dir;
        if (threads) config.threads = *threads;
        config.strict = config.strict || strict;
        config.force = force;

        if (fit->parsed()) return cmd_fit(config, std::cout, verify);
        if (reproduce->parsed()) return cmd_reproduce(figure, config, std::cout);
        if (check->parsed()) return cmd_check(config, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
