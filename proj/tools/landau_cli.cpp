#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "landau/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"landaulab: deterministic Landau solver with a stochastic verifier"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config path")->required();
        sub->add_option("--out", out_dir, "output directory (overrides config)");
        sub->add_option("--seed", seed, "RNG seed (overrides config)")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--threads", threads, "worker-count hint (never changes results)");
    };

    CLI::App* solve = app.add_subcommand("solve", "run the nonlinear solver");
    CLI::App* lower = app.add_subcommand("lowerbound", "Feynman-Kac lower-bound probes");
    CLI::App* verify = app.add_subcommand("verify", "ellipticity / tail / sub-super checks");
    CLI::App* moments = app.add_subcommand("moments", "physical moments of checkpoints");
    CLI::App* scenarios = app.add_subcommand("scenarios", "list bundled scenarios");
    for (CLI::App* sub : {solve, lower, verify, moments}) add_common(sub);

    CLI11_PARSE(app, argc, argv);

    if (scenarios->parsed()) {
        for (const std::string& s : landau::builtin_scenarios()) std::printf("%s\n", s.c_str());
        return 0;
    }

    landau::RunConfig cfg;
    try {
        cfg = landau::load_config_file(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }

    if (solve->parsed()) cfg.experiment = "solve";
    if (lower->parsed()) cfg.experiment = "lowerbound";
    if (verify->parsed()) cfg.experiment = "verify";
    if (moments->parsed()) cfg.experiment = "moments";
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed_set) {
        cfg.seed = seed;
        cfg.sde.seed = seed;
    }
    if (threads > 0) cfg.threads = threads;

    const landau::RunOutcome out = landau::run(cfg);
    if (!out.message.empty())
        std::fprintf(out.exit_code == 0 ? stdout : stderr, "%s\n", out.message.c_str());
    return out.exit_code;
}
