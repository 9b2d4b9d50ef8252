#include <doctest.h>

#include <cmath>
#include <random>

#include "landau/philox.hpp"
#include "landau/sde.hpp"
#include "oracles/oracles.hpp"

using namespace landau;

namespace {

// Constant-coefficient trajectory with abar = a0 everywhere and cbar = c0,
// built directly (tests may use eps = 0 and a huge cutoff).
CoeffTrajectory constant_traj(const PhaseGrid& g, const SymMat3& a0, double c0, double eps,
                              double r_cut = 1e9) {
    auto cf = std::make_shared<CoefficientField>(make_coefficient_field(g, -1.0));
    for (std::int64_t p = 0; p < g.phase_count(); ++p) {
        for (int s = 0; s < 6; ++s) cf->a[s][p] = a0.m[s];
        cf->c[p] = c0;
    }
    CoeffTrajectory tr;
    tr.times = {0.0};
    tr.snaps = {cf};
    tr.R_cut = r_cut;
    tr.eps = eps;
    return tr;
}

} // namespace

TEST_CASE("philox4x32-10 reference block") {
    // Known-answer vector (counter = 0, key = 0).
    const auto r = Philox4x32::block(0, {0, 0, 0, 0});
    CHECK(r[0] == 0x6627e8d5u);
    CHECK(r[1] == 0xe169c58du);
    CHECK(r[2] == 0xbc57ac4cu);
    CHECK(r[3] == 0x9b00dbd8u);
}

TEST_CASE("spd_sqrt: identity, diagonal, random SPD vs the Jacobi oracle") {
    CHECK(spd_sqrt(SymMat3::identity(), 0.0).m[0] == doctest::Approx(1.0).epsilon(1e-14));
    SymMat3 d{{4.0, 0.0, 0.0, 1.0, 0.0, 0.0}};
    SymMat3 s = spd_sqrt(d, 0.0);
    CHECK(s.m[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.m[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.m[5] == doctest::Approx(0.0).epsilon(1e-12));

    std::mt19937 rng(11);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        // SPD sample M = G G^T.
        double gm[3][3];
        for (auto& row : gm)
            for (double& v : row) v = nd(rng);
        SymMat3 m;
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += gm[i][k] * gm[j][k];
                m.at(i, j) = acc;
            }
        const double eps = trial % 2 == 0 ? 0.0 : 0.1;
        SymMat3 sq = spd_sqrt(m, eps);
        // sigma sigma == M + eps I to 1e-10 (also enforced internally).
        SymMat3 ss = SymMat3::zero();
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                double acc = 0.0;
                for (int k = 0; k < 3; ++k) acc += sq(i, k) * sq(k, j);
                ss.at(i, j) = acc;
            }
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) {
                const double target = m(i, j) + (i == j ? eps : 0.0);
                CHECK(std::fabs(ss(i, j) - target) <= 1e-10 * std::max(1.0, m.frob_norm()));
            }
        // Eigenvalues of sigma are square roots of those of M + eps I
        // (cross-checked against the iterative Jacobi oracle).
        std::array<double, 3> wm, ws;
        std::array<Vec3, 3> qm, qs;
        SymMat3 meps = m;
        for (int dd : {0, 3, 5}) meps.m[dd] += eps;
        oracle::jacobi_eigen(meps, wm, qm);
        oracle::jacobi_eigen(sq, ws, qs);
        for (int k = 0; k < 3; ++k)
            CHECK(ws[k] == doctest::Approx(std::sqrt(std::max(wm[k], 0.0))).epsilon(1e-8));
    }

    SymMat3 notpsd{{-1.0, 0.0, 0.0, 1.0, 0.0, 1.0}};
    CHECK_THROWS_AS(spd_sqrt(notpsd, 0.0), invalid_input);
}

TEST_CASE("cutoff_coefficients: exact regimes and PSD preservation") {
    PhaseGrid g = make_grid(0, 0.0, 1, 6.0, 24);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = make_field(g, -1.0);
    for (int a = 0; a < g.n_v; ++a)
        for (int b = 0; b < g.n_v; ++b)
            for (int c = 0; c < g.n_v; ++c)
                f.at(0, g.v_index(a, b, c)) = std::exp(-g.v_at(a, b, c).norm2());
    CoefficientField cf = compute_coefficients(f, st);
    const double R = 1.5;
    CoefficientField cr = cutoff_coefficients(cf, R);
    CHECK(cr.cutoff_applied);

    for (int a = 0; a < g.n_v; ++a)
        for (int b = 0; b < g.n_v; ++b)
            for (int c = 0; c < g.n_v; ++c) {
                const Vec3 v = g.v_at(a, b, c);
                const std::int64_t p = g.v_index(a, b, c);
                if (v.norm() <= R) {
                    for (int s = 0; s < 6; ++s) CHECK(cr.a[s][p] == cf.a[s][p]);
                } else if (v.norm() >= 2.0 * R) {
                    CHECK(cr.a[0][p] == 1.0);
                    CHECK(cr.a[1][p] == 0.0);
                    CHECK(cr.a[3][p] == 1.0);
                }
                const auto w = sym3_eigenvalues(cr.a_at(0, p));
                CHECK(w[0] >= -1e-12 * std::max(w[2], 1e-300));
            }
}

TEST_CASE("simulate: deterministic characteristics with sigma = 0") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::zero(), 0.0, /*eps=*/0.0);
    SdeConfig cfg;
    cfg.eps = 0.0;
    cfg.ds = 0.01;
    cfg.n_paths = 16;
    cfg.seed = 3;
    const Vec3 x{0.2, -0.1, 0.4}, v{1.0, -2.0, 0.5};
    ParticleEnsemble ens = simulate(x, v, 0.37, tr, cfg);
    for (std::int64_t p = 0; p < ens.n_paths; ++p) {
        CHECK(ens.V[p].x == v.x);
        CHECK(ens.X[p].x == doctest::Approx(x.x - v.x * 0.37).epsilon(1e-13));
        CHECK(ens.X[p].z == doctest::Approx(x.z - v.z * 0.37).epsilon(1e-13));
        CHECK(ens.W_c[p] == 0.0);
    }
}

TEST_CASE("simulate: constant cbar integrates exactly") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::zero(), 2.5, /*eps=*/0.0, /*r_cut=*/1e9);
    SdeConfig cfg;
    cfg.eps = 0.0;
    cfg.ds = 0.013; // not a divisor of t: exercises the short last step
    cfg.n_paths = 4;
    // Keep paths inside the velocity cube so cbar stays active.
    ParticleEnsemble ens = simulate(Vec3{}, Vec3{0.1, 0, 0}, 0.2, tr, cfg);
    for (std::int64_t p = 0; p < ens.n_paths; ++p)
        CHECK(ens.W_c[p] == doctest::Approx(2.5 * 0.2).epsilon(1e-12));
}

TEST_CASE("simulate: Ito moments of the sigma = I benchmark") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::identity(), 0.0, /*eps=*/0.0);
    SdeConfig cfg;
    cfg.eps = 0.0;
    cfg.ds = 2e-3;
    cfg.n_paths = 100000;
    cfg.seed = 17;
    const Vec3 x{0.0, 0.0, 0.0}, v{0.5, -0.25, 1.0};
    const double t = 0.5;
    ParticleEnsemble ens = simulate(x, v, t, tr, cfg);
    const auto ref = oracle::ito_moments(x, v, t);

    Vec3 mv{}, mx{};
    for (std::int64_t p = 0; p < cfg.n_paths; ++p) {
        mv += ens.V[p];
        mx += ens.X[p];
    }
    mv = mv * (1.0 / cfg.n_paths);
    mx = mx * (1.0 / cfg.n_paths);
    double var_v = 0.0, var_x = 0.0, cov_xv = 0.0;
    for (std::int64_t p = 0; p < cfg.n_paths; ++p) {
        var_v += (ens.V[p].x - mv.x) * (ens.V[p].x - mv.x);
        var_x += (ens.X[p].x - mx.x) * (ens.X[p].x - mx.x);
        cov_xv += (ens.X[p].x - mx.x) * (ens.V[p].x - mv.x);
    }
    var_v /= cfg.n_paths - 1;
    var_x /= cfg.n_paths - 1;
    cov_xv /= cfg.n_paths - 1;

    // 4-standard-error windows.
    const double se_mean_v = std::sqrt(ref.cov_V_diag / cfg.n_paths);
    const double se_mean_x = std::sqrt(ref.var_X_diag / cfg.n_paths);
    CHECK(std::fabs(mv.x - ref.mean_V.x) < 4.0 * se_mean_v);
    CHECK(std::fabs(mv.y - ref.mean_V.y) < 4.0 * se_mean_v);
    CHECK(std::fabs(mx.x - ref.mean_X.x) < 4.0 * se_mean_x + 2e-3 * t); // + O(ds) bias margin
    CHECK(std::fabs(var_v - ref.cov_V_diag) < 4.0 * ref.cov_V_diag * std::sqrt(2.0 / cfg.n_paths));
    CHECK(std::fabs(var_x - ref.var_X_diag) <
          4.0 * ref.var_X_diag * std::sqrt(2.0 / cfg.n_paths) + 4.0 * cfg.ds * t);
    CHECK(std::fabs(cov_xv - ref.cov_XV_diag) < 6e-3);
}

TEST_CASE("simulate: bit-identical across thread hints; antithetic pairing") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::identity(), 0.3, /*eps=*/0.0);
    SdeConfig cfg;
    cfg.eps = 0.0;
    cfg.ds = 5e-3;
    cfg.n_paths = 2000;
    cfg.seed = 5;

    set_thread_hint(1);
    ParticleEnsemble e1 = simulate(Vec3{}, Vec3{0.2, 0, 0}, 0.25, tr, cfg);
    set_thread_hint(2);
    ParticleEnsemble e2 = simulate(Vec3{}, Vec3{0.2, 0, 0}, 0.25, tr, cfg);
    set_thread_hint(0);
    for (std::int64_t p = 0; p < cfg.n_paths; ++p) {
        CHECK(e1.V[p].x == e2.V[p].x);
        CHECK(e1.X[p].y == e2.X[p].y);
        CHECK(e1.W_c[p] == e2.W_c[p]);
    }

    cfg.antithetic = true;
    ParticleEnsemble ea = simulate(Vec3{}, Vec3{0.2, 0, 0}, 0.25, tr, cfg);
    // Paired paths see mirrored velocity increments.
    const Vec3 dv0 = ea.V[0] - Vec3{0.2, 0, 0};
    const Vec3 dv1 = ea.V[1] - Vec3{0.2, 0, 0};
    CHECK(dv0.x == doctest::Approx(-dv1.x).epsilon(1e-12));
    CHECK(dv0.y == doctest::Approx(-dv1.y).epsilon(1e-12));
}

TEST_CASE("feynman_kac: constants, drop-exponent bound, empty rejection") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::identity(), 0.4, /*eps=*/0.0);
    SdeConfig cfg;
    cfg.eps = 0.0;
    cfg.ds = 5e-3;
    cfg.n_paths = 500;
    ParticleEnsemble ens = simulate(Vec3{}, Vec3{0.1, 0.1, 0.1}, 0.2, tr, cfg);

    // f_in == const c: drop-exponent estimate = c with zero variance.
    DistributionField fconst = make_field(g, -1.0);
    for (double& v : fconst.values) v = 3.25;
    // Keep paths inside the cube (velocity diffusion is mild over t = 0.2).
    FkEstimate drop = feynman_kac(ens, fconst, /*drop_exponent=*/true);
    CHECK(drop.estimate == doctest::Approx(3.25).epsilon(1e-12));
    CHECK(drop.std_error == doctest::Approx(0.0).epsilon(1e-12));

    // Pathwise domination: drop-exponent <= weighted (W_c >= 0).
    FkEstimate full = feynman_kac(ens, fconst, /*drop_exponent=*/false);
    CHECK(full.estimate >= drop.estimate);

    ParticleEnsemble empty;
    CHECK_THROWS_AS(feynman_kac(empty, fconst), invalid_input);
}

TEST_CASE("weak order: halving ds roughly halves the X-variance bias") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 8);
    CoeffTrajectory tr = constant_traj(g, SymMat3::identity(), 0.0, /*eps=*/0.0);
    const double t = 0.4;
    const auto ref = oracle::ito_moments(Vec3{}, Vec3{}, t);
    auto bias = [&](double ds) {
        SdeConfig cfg;
        cfg.eps = 0.0;
        cfg.ds = ds;
        cfg.n_paths = 400000;
        cfg.seed = 23;
        ParticleEnsemble ens = simulate(Vec3{}, Vec3{}, t, tr, cfg);
        double m = 0.0;
        for (std::int64_t p = 0; p < cfg.n_paths; ++p) m += ens.X[p].x;
        m /= cfg.n_paths;
        double var = 0.0;
        for (std::int64_t p = 0; p < cfg.n_paths; ++p)
            var += (ens.X[p].x - m) * (ens.X[p].x - m);
        var /= cfg.n_paths - 1;
        return var - ref.var_X_diag;
    };
    const double b1 = bias(0.04);
    const double b2 = bias(0.02);
    // The discrete variance bias of the Euler chain is first order in ds.
    CHECK(std::fabs(b2) < 0.75 * std::fabs(b1) + 2e-4);
}
