// retroq: two-boundary quantum scenario runner.
//
//   retroq run --config <path> [--out <dir>] [--seed <n>]
//   retroq validate --config <path>
//
// Exit status: 0 = all scenario checks passed, 1 = a check failed,
// 2 = error (bad config, unreadable file, module failure).

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "retroq/errors.hpp"
#include "retroq/scenario.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw retroq::IoError("cannot read config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-boundary quantum scenario runner"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed_flag = 0;
    bool seed_given = false;

    CLI::App* run = app.add_subcommand("run", "run a scenario and write its artifacts");
    run->add_option("--config", config_path, "path to the JSON scenario config")->required();
    run->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    run->add_option("--seed", seed_flag, "RNG seed (overrides config seed)")
        ->each([&](const std::string&) { seed_given = true; });

    CLI::App* validate = app.add_subcommand("validate", "check a config without running it");
    validate->add_option("--config", config_path, "path to the JSON scenario config")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const std::string text = read_file(config_path);
        if (validate->parsed()) {
            retroq::ScenarioConfig cfg = retroq::parse_config(text);
            std::cout << "config valid: scenario " << cfg.scenario << ", seed " << cfg.seed
                      << "\n";
            return 0;
        }
        retroq::ScenarioConfig cfg = retroq::parse_config(text);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (seed_given) cfg.seed = seed_flag;
        const retroq::RunResult result = retroq::run_scenario(cfg);
        std::cout << result.report.dump(2) << "\n";
        return result.status;
    } catch (const retroq::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
