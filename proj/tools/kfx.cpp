#include "kfx/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <thread>

int main(int argc, char** argv)
{
    CLI::App app{"kfx: kicked damped oscillator simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kfx::kToolVersion);

    std::string      config;
    kfx::RunOptions  opt;
    std::string      out_dir;
    std::uint64_t    seed = 0;
    opt.workers           = std::max(1u, std::thread::hardware_concurrency());

    const std::pair< const char*, const char* > commands[] = {
        {"classical", "ensemble histogram, moments and Lyapunov exponents of the classical map"},
        {"quantum", "density-matrix evolution with Husimi snapshots"},
        {"spectrum", "eigenvalues, pair splittings and entropy of the evolving state"},
        {"negativity", "negativity of the virtual-qubit cat state"},
        {"crosscheck", "reduced-size oracle comparisons"},
    };
    for (const auto& [name, help] : commands)
    {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "key = value run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory (overrides out_dir)");
        sub->add_option("--seed", seed, "RNG seed (overrides seed)");
        sub->add_flag("--force", opt.force, "run with an undersized basis and disable the truncation abort");
        sub->add_option("--workers", opt.workers, "worker threads for ensemble work")->check(CLI::PositiveNumber);
    }

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kfx::kExitConfigError;
    }

    const auto* sub = app.get_subcommands().front();
    if (sub->count("--out"))
        opt.out_dir = out_dir;
    if (sub->count("--seed"))
        opt.seed = seed;
    return kfx::run_and_report(sub->get_name(), config, opt, std::cerr);
}
