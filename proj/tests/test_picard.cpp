#include <doctest.h>

#include <cmath>

#include "landau/picard.hpp"
#include "landau/runner.hpp"

using namespace landau;

namespace {

PicardConfig quick_config(double dt = 0.02) {
    PicardConfig pc;
    pc.step.dt = dt;
    pc.step.conservative_flux = true;
    pc.max_outer = 8;
    pc.save_every = 0.1;
    return pc;
}

} // namespace

TEST_CASE("picard_window: zero data is a fixed point in one iteration") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 16);
    GaussianWeight w = make_weight(0.4, 0.1);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField z = make_field(g, -1.0);
    z.frame = Frame::Framed;
    PicardWindowResult res = picard_window(z, w, 0.0, 0.2, quick_config(), st);
    CHECK(res.converged);
    CHECK(res.outer_iterations == 1);
    CHECK(res.g.fields.back().max_value() == 0.0);
}

TEST_CASE("solve_landau: zero data gives zero trajectory") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 16);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField z = make_field(g, -1.0);
    SolveResult res = solve_landau(z, -1.0, 0.25, 0.2, quick_config(), st);
    CHECK(res.status == SolveStatus::Converged);
    for (const auto& f : res.f.fields) CHECK(f.max_value() == 0.0);
}

TEST_CASE("homogeneous Maxwellian: conservation, H-theorem, stationarity") {
    // Quick desk-scale version of the acceptance runs (n_v = 16).
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 16);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("maxwellian", g, -1.0);

    PicardConfig pc = quick_config(0.02);
    SolveResult res = solve_landau(f, -1.0, 0.25, 0.2, pc, st);
    REQUIRE(res.status == SolveStatus::Converged);

    const double m0 = res.moments.front().mass;
    const double e0 = res.moments.front().energy;
    double prev_H = res.moments.front().entropy;
    for (const MomentRow& row : res.moments) {
        CHECK(std::fabs(row.mass - m0) / m0 < 1e-8);
        CHECK(std::fabs(row.energy - e0) / e0 < 1e-2);
        CHECK(row.entropy <= prev_H + 1e-6 * std::max(1.0, std::fabs(prev_H)));
        prev_H = row.entropy;
    }

    // Stationarity: relative L2 drift stays small over the window.
    const DistributionField& fT = res.f.fields.back();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        num += (fT.values[i] - f.values[i]) * (fT.values[i] - f.values[i]);
        den += f.values[i] * f.values[i];
    }
    CHECK(std::sqrt(num / den) < 5e-3);
}

TEST_CASE("picard contraction on the two-bump datum") {
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 16);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("bi-gaussian", g, -1.0);
    GaussianWeight w = make_weight(0.25, 0.125);
    DistributionField gg = to_frame(f, w, 0.0);

    PicardWindowResult res = picard_window(gg, w, 0.0, 0.2, quick_config(0.02), st);
    CHECK(res.converged);
    REQUIRE(res.ratios.size() >= 2);
    const auto& r = res.ratios;
    CHECK(r[r.size() - 1] <= 0.5);
    CHECK(r[r.size() - 2] <= 0.5);
}

TEST_CASE("determinism: identical runs across thread hints are bit-identical") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 16);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("bi-gaussian", g, -1.0);

    set_thread_hint(1);
    SolveResult r1 = solve_landau(f, -1.0, 0.25, 0.1, quick_config(), st);
    set_thread_hint(2);
    SolveResult r2 = solve_landau(f, -1.0, 0.25, 0.1, quick_config(), st);
    set_thread_hint(0);
    REQUIRE(r1.f.fields.size() == r2.f.fields.size());
    for (std::size_t k = 0; k < r1.f.fields.size(); ++k)
        for (std::size_t i = 0; i < r1.f.fields[k].values.size(); ++i)
            CHECK(r1.f.fields[k].values[i] == r2.f.fields[k].values[i]);
}

TEST_CASE("stability: 1e-8 data perturbation stays within 1e-5 over the window") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 12);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("maxwellian", g, -1.0);
    DistributionField fp = f;
    for (std::size_t i = 0; i < fp.values.size(); ++i)
        fp.values[i] *= 1.0 + 1e-8 * std::sin(0.37 * static_cast<double>(i));

    SolveResult r1 = solve_landau(f, -1.0, 0.25, 0.1, quick_config(), st);
    SolveResult r2 = solve_landau(fp, -1.0, 0.25, 0.1, quick_config(), st);
    REQUIRE(r1.status == SolveStatus::Converged);
    REQUIRE(r2.status == SolveStatus::Converged);
    double worst = 0.0;
    const auto& a = r1.f.fields.back().values;
    const auto& b = r2.f.fields.back().values;
    const double scale = r1.f.fields.back().max_value();
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
    CHECK(worst < 1e-5);
}

TEST_CASE("fixed-point residual shrinks under dt refinement") {
    // One extra linearized step from the converged iterate measures the
    // truncation residual of the returned solution.
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 12);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("bi-gaussian", g, -1.0);
    GaussianWeight w = make_weight(0.25, 0.125);
    DistributionField gg = to_frame(f, w, 0.0);

    auto residual = [&](double dt) {
        PicardConfig pc = quick_config(dt);
        PicardWindowResult win = picard_window(gg, w, 0.0, 0.08, pc, st);
        REQUIRE(win.converged);
        // Converge the fixed point deeply so the one-extra-pass residual is
        // truncation-limited rather than contraction-limited.
        Trajectory cur = win.g;
        for (int sweep = 0; sweep < 6; ++sweep)
            cur = solve_linearized(gg, cur, 0.0, 0.08, pc.step, w, st).G;
        LinearSolveResult again = solve_linearized(gg, cur, 0.0, 0.08, pc.step, w, st);
        return y0_distance(again.G, cur);
    };
    const double r1 = residual(0.02);
    const double r2 = residual(0.01);
    CHECK(r2 < r1);
}

TEST_CASE("monitor breach aborts with a labeled cause") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 12);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = build_scenario("maxwellian", g, -1.0);
    PicardConfig pc = quick_config();
    pc.monitor.me_max = 1e-6; // absurdly low: must breach instantly
    SolveResult res = solve_landau(f, -1.0, 0.25, 0.1, pc, st);
    CHECK(res.status == SolveStatus::MonitorBreach);
    CHECK(res.message.find("sup_x(M+E)") != std::string::npos);
}
