// lpsv command-line tool: run scenario configs and validate them.
//
//   lpsv run <config> [--out DIR] [--threads N] [--seed-override K]
//   lpsv validate <config>
//
// Exit codes: 0 ok, 1 validation error, 2 runtime error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lpsv/runner.hpp"

namespace {

std::size_t resolve_threads(std::optional<std::size_t> flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("LPSV_THREADS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"lpsv: defaultable-portfolio particle/SPDE toolkit"};
    app.require_subcommand(1);

    std::string run_config, out_dir;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed_override;
    auto* run = app.add_subcommand("run", "execute a scenario config");
    run->add_option("config", run_config, "scenario JSON file")->required();
    auto* out_opt = run->add_option("--out", out_dir, "output directory override");
    std::size_t threads_val = 0;
    auto* threads_opt = run->add_option("--threads", threads_val, "worker threads");
    std::uint64_t seed_val = 0;
    auto* seed_opt = run->add_option("--seed-override", seed_val, "replace config seed");

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "check a scenario config");
    validate->add_option("config", validate_config, "scenario JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (threads_opt->count() > 0) threads = threads_val;
    if (seed_opt->count() > 0) seed_override = seed_val;

    if (validate->parsed())
        return lpsv::run_scenario_file(validate_config, std::nullopt, 1, std::nullopt,
                                       std::cerr, /*validate_only=*/true);

    std::optional<std::string> out_override;
    if (out_opt->count() > 0) out_override = out_dir;
    return lpsv::run_scenario_file(run_config, out_override, resolve_threads(threads),
                                   seed_override, std::cerr);
}
