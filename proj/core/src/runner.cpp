#include "landau/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace landau {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> builtin_scenarios() {
    return {"maxwellian", "maxwellian-perturbed", "bi-gaussian", "well-distributed-1x",
            "vacuum-core-1x"};
}

void scenario_default_grid(const std::string& name, int& d_x, double& L, int& n_x, double& V_max,
                           int& n_v) {
    if (name == "maxwellian" || name == "maxwellian-perturbed" || name == "bi-gaussian") {
        d_x = 0;
        L = 0.0;
        n_x = 1;
        V_max = 6.0;
        n_v = 32;
    } else if (name == "well-distributed-1x") {
        d_x = 1;
        L = 2.0 * M_PI;
        n_x = 12;
        V_max = 6.0;
        n_v = 32;
    } else if (name == "vacuum-core-1x") {
        d_x = 1;
        L = 1.6;
        n_x = 16;
        V_max = 5.0;
        n_v = 24;
    } else {
        throw invalid_input("unknown scenario: " + name);
    }
}

DistributionField build_scenario(const std::string& name, const PhaseGrid& grid, double gamma,
                                 CorePrior* core) {
    DistributionField f = make_field(grid, gamma);
    const int nv = grid.n_v;

    auto fill_v = [&](auto&& profile) {
        std::vector<double> vals(grid.velocity_count());
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c)
                    vals[grid.v_index(a, b, c)] = profile(grid.v_at(a, b, c));
        for (std::int64_t xs = 0; xs < grid.spatial_count(); ++xs)
            for (std::int64_t vv = 0; vv < grid.velocity_count(); ++vv)
                f.at(xs, vv) = vals[vv];
    };

    if (name == "maxwellian") {
        const double c0 = std::pow(2.0 * M_PI, -1.5);
        fill_v([&](const Vec3& v) { return c0 * std::exp(-0.5 * v.norm2()); });
    } else if (name == "maxwellian-perturbed") {
        const double c0 = std::pow(2.0 * M_PI, -1.5);
        const Vec3 u{1.0, 0.5, 0.0};
        fill_v([&](const Vec3& v) {
            return c0 * std::exp(-0.5 * v.norm2()) * (1.0 + 0.2 * std::exp(-(v - u).norm2()));
        });
    } else if (name == "bi-gaussian") {
        const Vec3 u{1.5, 0.0, 0.0};
        const double c0 = 0.5 * std::pow(M_PI, -1.5);
        fill_v([&](const Vec3& v) {
            return c0 * (std::exp(-(v - u).norm2()) + std::exp(-(v + u).norm2()));
        });
    } else if (name == "well-distributed-1x") {
        if (grid.d_x < 1) throw invalid_input("well-distributed-1x needs d_x >= 1");
        // Velocity profile with a stretched-exponential tail of exponent 2-gamma,
        // scaled so f ~ exp(-6.25) at |v| = 5.
        const double q = 2.0 - gamma;
        const double rho_t = 6.25 / std::pow(5.0, q);
        const double amp = 0.5;
        for (std::int64_t xs = 0; xs < grid.spatial_count(); ++xs) {
            const double x1 = grid.x_at(xs).x;
            const double xfac = 1.0 + 0.5 * std::cos(2.0 * M_PI * x1 / grid.L);
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < nv; ++c) {
                        const double r = grid.v_at(a, b, c).norm();
                        f.at(xs, grid.v_index(a, b, c)) =
                            amp * xfac * std::exp(-rho_t * std::pow(r, q));
                    }
        }
    } else if (name == "vacuum-core-1x") {
        if (grid.d_x < 1) throw invalid_input("vacuum-core-1x needs d_x >= 1");
        const double r0 = 0.5, width = 0.15, delta0 = 2.0;
        const Vec3 x0{grid.L / 2.0, 0.0, 0.0};
        for (std::int64_t xs = 0; xs < grid.spatial_count(); ++xs) {
            const Vec3 x = grid.x_at(xs);
            double dx2 = 0.0;
            for (int d = 0; d < grid.d_x; ++d) {
                const double dd = grid.torus_delta(x[d], x0[d]);
                dx2 += dd * dd;
            }
            const double xr = std::sqrt(dx2);
            const double fx = smooth_ramp((xr - (r0 - width)) / width);
            if (fx == 0.0) continue;
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < nv; ++c) {
                        const double vr = grid.v_at(a, b, c).norm();
                        const double fv = smooth_ramp((vr - (r0 - width)) / width);
                        f.at(xs, grid.v_index(a, b, c)) = delta0 * fx * fv;
                    }
        }
        if (core) {
            core->x0 = x0;
            core->v0 = Vec3{};
            core->r0 = r0 - width; // f == delta0 on the inner plateau
            core->delta0 = delta0;
        }
    } else {
        throw invalid_input("unknown scenario: " + name);
    }
    return f;
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

template <typename T>
T get_or(const json& j, const char* key, T dflt) {
    return j.contains(key) ? j.at(key).get<T>() : dflt;
}

void fail(const std::string& path, const std::string& why) {
    throw invalid_input("config: " + path + " " + why);
}

} // namespace

RunConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw invalid_input(std::string("config: invalid JSON: ") + e.what());
    }

    RunConfig c;
    c.experiment = get_or<std::string>(j, "experiment", "solve");
    if (c.experiment != "solve" && c.experiment != "lowerbound" && c.experiment != "verify" &&
        c.experiment != "moments")
        fail("experiment", "must be one of solve|lowerbound|verify|moments");

    c.scenario = get_or<std::string>(j, "scenario", "maxwellian");
    scenario_default_grid(c.scenario, c.d_x, c.L, c.n_x, c.V_max, c.n_v);

    if (j.contains("grid")) {
        const json& g = j.at("grid");
        c.d_x = get_or<int>(g, "d_x", c.d_x);
        c.L = get_or<double>(g, "L", c.L);
        c.n_x = get_or<int>(g, "n_x", c.n_x);
        c.V_max = get_or<double>(g, "V_max", c.V_max);
        c.n_v = get_or<int>(g, "n_v", c.n_v);
    }
    if (c.n_v <= 0 || c.n_v % 2 != 0 || c.n_v < 8) fail("grid.n_v", "must be even and >= 8");
    if (!(c.V_max > 0.0)) fail("grid.V_max", "must be positive");
    if (c.d_x != 0 && c.d_x != 1 && c.d_x != 3) fail("grid.d_x", "must be 0, 1 or 3");
    if (c.d_x >= 1 && (!(c.L > 0.0) || c.n_x < 2)) fail("grid.L", "needs L > 0 and n_x >= 2");

    c.gamma = get_or<double>(j, "gamma", -1.0);
    if (!(c.gamma >= -3.0 && c.gamma < 0.0)) fail("gamma", "must lie in [-3, 0)");
    c.rho0 = get_or<double>(j, "rho0", 0.25);
    if (!(c.rho0 > 0.0)) fail("rho0", "must be positive");
    c.kappa = get_or<double>(j, "kappa", 0.0);
    if (c.kappa < 0.0) fail("kappa", "must be >= 0");
    c.T_target = get_or<double>(j, "T_target", 0.5);
    if (!(c.T_target > 0.0)) fail("T_target", "must be positive");

    if (j.contains("picard")) {
        const json& p = j.at("picard");
        c.picard.max_outer = get_or<int>(p, "max_outer", c.picard.max_outer);
        c.picard.contraction_tol = get_or<double>(p, "contraction_tol", c.picard.contraction_tol);
        c.picard.window_shrink = get_or<double>(p, "window_shrink", c.picard.window_shrink);
        c.picard.window_initial = get_or<double>(p, "window_initial", c.picard.window_initial);
        c.picard.save_every = get_or<double>(p, "save_every", c.picard.save_every);
        c.picard.p_exponent = get_or<double>(p, "p_exponent", 0.0);
        if (!(c.picard.contraction_tol > 0.0 && c.picard.contraction_tol < 1.0))
            fail("picard.contraction_tol", "must lie in (0, 1)");
        if (!(c.picard.window_shrink > 0.0 && c.picard.window_shrink < 1.0))
            fail("picard.window_shrink", "must lie in (0, 1)");
        if (c.picard.max_outer < 2) fail("picard.max_outer", "must be >= 2");
    }
    if (j.contains("step")) {
        const json& s = j.at("step");
        c.picard.step.dt = get_or<double>(s, "dt", c.picard.step.dt);
        c.picard.step.theta = get_or<double>(s, "theta", c.picard.step.theta);
        c.picard.step.eps = get_or<double>(s, "eps", c.picard.step.eps);
        c.picard.step.conservative_flux =
            get_or<bool>(s, "conservative_flux", true);
        c.picard.step.solver_tol = get_or<double>(s, "solver_tol", c.picard.step.solver_tol);
        c.picard.step.solver_max_iter =
            get_or<int>(s, "solver_max_iter", c.picard.step.solver_max_iter);
        if (!(c.picard.step.dt > 0.0)) fail("step.dt", "must be positive");
        if (c.picard.step.theta < 0.0 || c.picard.step.theta > 1.0)
            fail("step.theta", "must lie in [0, 1]");
        if (c.picard.step.eps < 0.0) fail("step.eps", "must be >= 0");
    } else {
        c.picard.step.conservative_flux = true;
    }
    if (j.contains("monitor")) {
        const json& m = j.at("monitor");
        c.picard.monitor.me_max = get_or<double>(m, "me_max", 0.0);
        c.picard.monitor.p_max = get_or<double>(m, "p_max", 0.0);
        c.picard.monitor.finf_max = get_or<double>(m, "finf_max", 0.0);
    }
    if (j.contains("sde")) {
        const json& s = j.at("sde");
        c.sde.R_cut = get_or<double>(s, "R_cut", 0.0);
        c.sde.eps = get_or<double>(s, "eps", c.sde.eps);
        c.sde.ds = get_or<double>(s, "ds", c.sde.ds);
        c.sde.n_paths = get_or<std::int64_t>(s, "n_paths", c.sde.n_paths);
        c.sde.antithetic = get_or<bool>(s, "antithetic", false);
        if (!(c.sde.eps > 0.0)) fail("sde.eps", "must be positive");
        if (!(c.sde.ds > 0.0)) fail("sde.ds", "must be positive");
        if (c.sde.n_paths <= 0) fail("sde.n_paths", "must be positive");
    }
    if (c.sde.R_cut == 0.0) c.sde.R_cut = c.V_max / 2.0;

    if (j.contains("probes")) {
        for (const auto& row : j.at("probes")) {
            if (!row.is_array() || row.size() != 7)
                fail("probes", "each probe must be [t, x1, x2, x3, v1, v2, v3]");
            Probe p;
            p.t = row[0].get<double>();
            p.x = {row[1].get<double>(), row[2].get<double>(), row[3].get<double>()};
            p.v = {row[4].get<double>(), row[5].get<double>(), row[6].get<double>()};
            c.probes.push_back(p);
        }
    }

    c.solve_dir = get_or<std::string>(j, "solve_dir", "");
    c.out_dir = get_or<std::string>(j, "out_dir", "out");
    c.seed = get_or<std::uint64_t>(j, "seed", 1);
    c.threads = get_or<int>(j, "threads", 0);
    c.verify_time = get_or<double>(j, "verify_time", -1.0);
    c.sde.seed = c.seed;
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace {

json config_echo(const RunConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["scenario"] = c.scenario;
    j["grid"] = {{"d_x", c.d_x}, {"L", c.L},     {"n_x", c.n_x},
                 {"V_max", c.V_max}, {"n_v", c.n_v}};
    j["gamma"] = c.gamma;
    j["rho0"] = c.rho0;
    j["kappa"] = c.kappa;
    j["T_target"] = c.T_target;
    j["picard"] = {{"max_outer", c.picard.max_outer},
                   {"contraction_tol", c.picard.contraction_tol},
                   {"window_shrink", c.picard.window_shrink},
                   {"window_initial", c.picard.window_initial},
                   {"save_every", c.picard.save_every}};
    j["step"] = {{"dt", c.picard.step.dt},
                 {"theta", c.picard.step.theta},
                 {"eps", c.picard.step.eps},
                 {"conservative_flux", c.picard.step.conservative_flux},
                 {"solver_tol", c.picard.step.solver_tol},
                 {"solver_max_iter", c.picard.step.solver_max_iter}};
    j["sde"] = {{"R_cut", c.sde.R_cut}, {"eps", c.sde.eps},           {"ds", c.sde.ds},
                {"n_paths", c.sde.n_paths}, {"antithetic", c.sde.antithetic}};
    j["monitor"] = {{"me_max", c.picard.monitor.me_max},
                    {"p_max", c.picard.monitor.p_max},
                    {"finf_max", c.picard.monitor.finf_max}};
    j["solve_dir"] = c.solve_dir;
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    return j;
}

void write_manifest(const RunConfig& c, const fs::path& dir, double wall_s,
                    const std::vector<std::pair<std::string, double>>& checkpoints) {
    const std::string echo = config_echo(c).dump(2);
    json m;
    m["config_hash"] = hex64(fnv1a64(echo.data(), echo.size()));
    // Content hash of the inputs that define the run (scenario + grid + seed).
    std::string inputs = c.scenario + "|" + std::to_string(c.gamma) + "|" +
                         std::to_string(c.n_v) + "|" + std::to_string(c.V_max) + "|" +
                         std::to_string(c.seed);
    m["input_hash"] = hex64(fnv1a64(inputs.data(), inputs.size()));
    m["wall_time_s"] = wall_s;
    m["version"] = "landaulab 0.1.0";
#if defined(__clang__)
    m["compiler"] = "clang " __clang_version__;
#elif defined(__GNUC__)
    m["compiler"] = "gcc " __VERSION__;
#else
    m["compiler"] = "unknown";
#endif
    m["threads_hint"] = c.threads;
    json cps = json::array();
    for (const auto& [file, t] : checkpoints) cps.push_back({{"file", file}, {"t", t}});
    m["checkpoints"] = cps;
    std::ofstream out(dir / "manifest.json");
    out << m.dump(2) << "\n";
}

void write_format_docs(const fs::path& dir) {
    std::ofstream out(dir / "FORMATS.txt");
    out << "Field payloads (*.f64): raw little-endian IEEE-754 float64, x-major\n"
           "v-minor order (spatial index slowest, velocity k-index fastest), with\n"
           "a JSON sidecar *.f64.json holding {d_x, L, n_x, V_max, n_v, t, gamma,\n"
           "frame, rho0, kappa}.\n\n"
           "Coefficient payloads: <name>.abar.f64 stores six components per phase\n"
           "node in the order a11,a12,a13,a22,a23,a33 (component fastest);\n"
           "<name>.cbar.f64 and <name>.bbar.f64 follow the same node order.\n\n"
           "CSV files are RFC-4180 with CRLF line endings and %.17g floats:\n"
           "  moments.csv       t,mass,energy,entropy,momentum_{x,y,z},sup_ME,sup_P,sup_Finf\n"
           "  moments_xt.csv    t,x1,x2,x3,M,E,H,P\n"
           "  norms.csv         t,H00,H01,H20,Y0_accum,clamp_mass\n"
           "  lowerbound.csv    t,x1,x2,x3,v1,v2,v3,estimate,std_error,hits,n_paths\n";
}

struct LoadedRun {
    std::vector<double> times;
    std::vector<DistributionField> fields;
};

LoadedRun load_run(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw invalid_input("run: missing manifest.json in " + dir);
    json m;
    in >> m;
    LoadedRun run;
    for (const auto& cp : m.at("checkpoints")) {
        run.times.push_back(cp.at("t").get<double>());
        run.fields.push_back(load_field((fs::path(dir) / cp.at("file").get<std::string>())));
    }
    if (run.fields.empty()) throw invalid_input("run: no checkpoints recorded in " + dir);
    return run;
}

void write_moments_xt_csv(const std::vector<MomentField>& snaps, const std::string& path) {
    std::ofstream out(path);
    out << "t,x1,x2,x3,M,E,H,P\r\n";
    char buf[512];
    for (const MomentField& m : snaps) {
        for (std::int64_t xs = 0; xs < m.grid.spatial_count(); ++xs) {
            const Vec3 x = m.grid.x_at(xs);
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\r\n",
                          m.t, x.x, x.y, x.z, m.M[xs], m.E[xs], m.H[xs], m.P[xs]);
            out << buf;
        }
    }
}

RunOutcome run_solve(const RunConfig& c, const fs::path& dir) {
    const PhaseGrid grid = make_grid(c.d_x, c.L, c.n_x, c.V_max, c.n_v);
    CorePrior core;
    DistributionField f_in = build_scenario(c.scenario, grid, c.gamma, &core);
    const KernelStencil st = precompute_stencil(grid, c.gamma);

    PicardConfig pc = c.picard;
    pc.T_target = c.T_target;
    pc.kappa = c.kappa;

    SolveResult res = solve_landau(f_in, c.gamma, c.rho0, c.T_target, pc, st);

    std::vector<std::pair<std::string, double>> checkpoints;
    for (std::size_t i = 0; i < res.f.fields.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "f_%04zu.f64", i);
        save_field(res.f.fields[i], (dir / name).string());
        checkpoints.emplace_back(name, res.f.times[i]);
    }
    write_moments_csv(res.moments, (dir / "moments.csv").string());
    {
        std::ofstream out(dir / "contraction.csv");
        out << "index,ratio\r\n";
        char buf[64];
        for (std::size_t i = 0; i < res.contraction_log.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%zu,%.17g\r\n", i, res.contraction_log[i]);
            out << buf;
        }
    }

    RunOutcome out;
    switch (res.status) {
        case SolveStatus::Converged: out.exit_code = 0; break;
        case SolveStatus::WindowCollapse: out.exit_code = 3; break;
        case SolveStatus::MonitorBreach: out.exit_code = 4; break;
    }
    out.message = res.message;
    return out;
}

RunOutcome run_lowerbound(const RunConfig& c, const fs::path& dir) {
    if (c.solve_dir.empty()) throw invalid_input("config: solve_dir required for lowerbound");
    if (c.probes.empty()) throw invalid_input("config: probes required for lowerbound");
    LoadedRun run = load_run(c.solve_dir);

    const PhaseGrid& grid = run.fields.front().grid;
    const double gamma = run.fields.front().gamma;
    const KernelStencil st = precompute_stencil(grid, gamma);

    std::vector<std::shared_ptr<const CoefficientField>> snaps;
    for (const DistributionField& f : run.fields) {
        auto cf = std::make_shared<CoefficientField>(
            cutoff_coefficients(compute_coefficients(f, st), c.sde.R_cut));
        snaps.push_back(cf);
    }
    CoeffTrajectory traj = make_coeff_trajectory(run.times, snaps, c.sde.R_cut, c.sde.eps);

    CorePrior core;
    build_scenario(c.scenario, grid, gamma, &core);
    std::vector<SpreadRow> rows =
        core_spreading_experiment(core, c.probes, traj, run.fields.front(), c.sde);
    write_lowerbound_csv(rows, (dir / "lowerbound.csv").string());
    return {0, "lowerbound complete"};
}

RunOutcome run_verify(const RunConfig& c, const fs::path& dir) {
    if (c.solve_dir.empty()) throw invalid_input("config: solve_dir required for verify");
    LoadedRun run = load_run(c.solve_dir);
    const PhaseGrid& grid = run.fields.front().grid;
    const double gamma = run.fields.front().gamma;
    const KernelStencil st = precompute_stencil(grid, gamma);

    std::size_t pick = run.fields.size() - 1;
    if (c.verify_time >= 0.0)
        for (std::size_t i = 0; i < run.times.size(); ++i)
            if (run.times[i] <= c.verify_time + 1e-12) pick = i;
    const DistributionField& f = run.fields[pick];

    auto coeffs = std::make_shared<CoefficientField>(compute_coefficients(f, st));
    json rep;
    rep["t"] = run.times[pick];

    // Ellipticity exponents against the grid coefficients.
    {
        std::vector<Vec3> samples;
        const double v_hi = 0.9 * grid.V_max;
        const double v_lo = std::min(1.0, v_hi / 9.0);
        for (int i = 0; i < 12; ++i) {
            const double r = v_lo * std::pow(v_hi / v_lo, i / 11.0);
            samples.push_back({r, 0.0, 0.0});
        }
        CorePrior core;
        core.x0 = grid.x_at(0);
        try {
            const EllipticityReport er =
                ellipticity_verify(grid_provider(coeffs), core, samples, gamma);
            rep["ellipticity"] = {{"slope_all", er.slope_all}, {"slope_perp", er.slope_perp},
                                  {"c_fit_all", er.c_fit_all}, {"c_fit_perp", er.c_fit_perp},
                                  {"r2_all", er.r2_all},       {"r2_perp", er.r2_perp}};
        } catch (const std::exception& e) {
            rep["ellipticity"] = {{"error", e.what()}};
        }
    }
    // Tail fit on the outer shell.
    try {
        const TailFit tf = fit_tail(f, 0, 2.5, std::min(5.0, 0.9 * grid.V_max));
        rep["tail"] = {{"nu", tf.nu}, {"rho", tf.rho}, {"beta", tf.beta}, {"r2", tf.r2}};
    } catch (const std::exception& e) {
        rep["tail"] = {{"error", e.what()}};
    }
    // Sub/super-solution sign checks.
    try {
        const SubsolutionReport sub = subsolution_residual(
            *coeffs, run.times[pick] + 0.25, run.times[pick], 1.0, 1.0, 0.85 * grid.V_max);
        rep["subsolution"] = {{"c1", sub.c1},
                              {"compliance", sub.compliance_at_c1},
                              {"compliance_c1_zero", sub.compliance_at_zero},
                              {"found", sub.found}};
    } catch (const std::exception& e) {
        rep["subsolution"] = {{"error", e.what()}};
    }
    try {
        const SupersolutionReport sup =
            supersolution_residual(*coeffs, run.times[pick], 0.05, 1.0, 0.85 * grid.V_max);
        rep["supersolution"] = {{"alpha", sup.alpha},
                                {"C", sup.C},
                                {"compliance", sup.compliance},
                                {"compliance_bprime0", sup.compliance_bprime0},
                                {"found", sup.found}};
    } catch (const std::exception& e) {
        rep["supersolution"] = {{"error", e.what()}};
    }

    std::ofstream out(dir / "verify.json");
    out << rep.dump(2) << "\n";
    return {0, "verify complete"};
}

RunOutcome run_moments(const RunConfig& c, const fs::path& dir) {
    if (c.solve_dir.empty()) throw invalid_input("config: solve_dir required for moments");
    LoadedRun run = load_run(c.solve_dir);
    const double gamma = run.fields.front().gamma;
    const double p_exp =
        c.picard.p_exponent > 0.0 ? c.picard.p_exponent : p_exponent_threshold(gamma) + 0.5;
    std::vector<MomentField> snaps;
    for (const DistributionField& f : run.fields) snaps.push_back(moments(f, p_exp));
    write_moments_xt_csv(snaps, (dir / "moments_xt.csv").string());
    return {0, "moments complete"};
}

} // namespace

RunOutcome run(const RunConfig& cfg_in) {
    RunConfig c = cfg_in;
    // Environment overrides: output directory and thread-count hint only.
    if (const char* od = std::getenv("LANDAU_OUT_DIR")) c.out_dir = od;
    if (const char* th = std::getenv("LANDAU_THREADS")) c.threads = std::atoi(th);
    if (c.threads > 0) set_thread_hint(c.threads);

    const auto t0 = std::chrono::steady_clock::now();
    fs::path dir(c.out_dir);
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "config.json");
        out << config_echo(c).dump(2) << "\n";
    }
    write_format_docs(dir);

    RunOutcome out;
    try {
        if (c.experiment == "solve")
            out = run_solve(c, dir);
        else if (c.experiment == "lowerbound")
            out = run_lowerbound(c, dir);
        else if (c.experiment == "verify")
            out = run_verify(c, dir);
        else
            out = run_moments(c, dir);
    } catch (const invalid_input& e) {
        return {2, e.what()};
    } catch (const std::exception& e) {
        return {1, e.what()};
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    // Collect checkpoint names for the manifest (solve writes them above).
    std::vector<std::pair<std::string, double>> checkpoints;
    if (c.experiment == "solve") {
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("f_", 0) == 0 && name.size() > 4 &&
                name.substr(name.size() - 4) == ".f64") {
                DistributionField f = load_field(entry.path().string());
                checkpoints.emplace_back(name, f.t);
            }
        }
        std::sort(checkpoints.begin(), checkpoints.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
    }
    write_manifest(c, dir, wall, checkpoints);
    return out;
}

} // namespace landau
