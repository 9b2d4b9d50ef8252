#pragma once

#include <string>
#include <vector>

#include "landau/picard.hpp"
#include "landau/sde.hpp"

namespace landau {

/// Experiment configuration (parsed from JSON; see README for the schema).
struct RunConfig {
    std::string experiment = "solve"; ///< solve | lowerbound | verify | moments
    int d_x = 0;
    double L = 0.0;
    int n_x = 1;
    double V_max = 6.0;
    int n_v = 32;
    double gamma = -1.0;
    double rho0 = 0.25;
    double kappa = 0.0;   ///< 0: defaulted to rho0 / (4 T_target)
    double T_target = 0.5;
    std::string scenario = "maxwellian";
    PicardConfig picard;
    SdeConfig sde;
    std::vector<Probe> probes;
    std::string solve_dir; ///< input directory for lowerbound / verify / moments
    std::string out_dir = "out";
    std::uint64_t seed = 1;
    int threads = 0; ///< hint only; must not change results
    double verify_time = -1.0; ///< snapshot time for verify (-1: last)
};

/// Parses and validates; error messages name the offending key path.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config_file(const std::string& path);

struct RunOutcome {
    int exit_code = 0; ///< 0 converged, 2 validation, 3 window-collapse, 4 monitor-breach
    std::string message;
};

/// Executes the configured experiment and writes outputs + manifest into
/// cfg.out_dir. Idempotent given identical config and seed.
RunOutcome run(const RunConfig& cfg);

/// Names of the bundled scenarios.
std::vector<std::string> builtin_scenarios();

/// Builds the initial datum of a named scenario on the given grid. For the
/// vacuum-core scenario, `core` (when non-null) receives the embedded core.
DistributionField build_scenario(const std::string& name, const PhaseGrid& grid, double gamma,
                                 CorePrior* core = nullptr);

/// Grid parameters the scenario was designed for (overridable in the config).
void scenario_default_grid(const std::string& name, int& d_x, double& L, int& n_x, double& V_max,
                           int& n_v);

} // namespace landau
