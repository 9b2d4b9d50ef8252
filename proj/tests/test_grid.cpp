#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "landau/grid.hpp"
#include "oracles/oracles.hpp"

using namespace landau;

TEST_CASE("make_grid: construction and validation") {
    PhaseGrid g0 = make_grid(0, 0.0, 1, 6.0, 32);
    CHECK(g0.spatial_count() == 1);
    CHECK(g0.velocity_count() == 32768);
    CHECK(g0.h_v == doctest::Approx(12.0 / 32).epsilon(1e-15));

    PhaseGrid g1 = make_grid(1, 2.0 * M_PI, 16, 6.0, 24);
    CHECK(g1.spatial_count() == 16);
    CHECK(g1.h_x == doctest::Approx(2.0 * M_PI / 16).epsilon(1e-15));
    CHECK(g1.velocity_count() == 24 * 24 * 24);

    PhaseGrid g3 = make_grid(3, 1.0, 8, 5.0, 16);
    CHECK(g3.spatial_count() == 512);
    CHECK(g3.field_bytes() == 512ll * 16 * 16 * 16 * 8); // ~16.8 MB

    CHECK_THROWS_AS(make_grid(0, 0.0, 1, 6.0, 31), invalid_input); // odd n_v
    CHECK_THROWS_AS(make_grid(0, 0.0, 1, 6.0, 6), invalid_input);  // n_v < 8
    CHECK_THROWS_AS(make_grid(0, 0.0, 1, -1.0, 32), invalid_input);
    CHECK_THROWS_AS(make_grid(1, 0.0, 16, 6.0, 32), invalid_input);
    CHECK_THROWS_AS(make_grid(2, 1.0, 16, 6.0, 32), invalid_input);

    // Even n_v keeps v = 0 off the lattice.
    for (int i = 0; i < g0.n_v; ++i) CHECK(std::fabs(g0.v_node(i)) > 1e-12);
}

TEST_CASE("interpolate: node identity, multilinear exactness, periodic wrap") {
    PhaseGrid g = make_grid(1, 4.0, 8, 3.0, 12);
    DistributionField f = make_field(g, -1.0);
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs)
        for (int a = 0; a < g.n_v; ++a)
            for (int b = 0; b < g.n_v; ++b)
                for (int c = 0; c < g.n_v; ++c) {
                    const Vec3 v = g.v_at(a, b, c);
                    f.at(xs, g.v_index(a, b, c)) =
                        1.0 + 0.5 * v.x + 0.25 * v.y - 0.125 * v.z + 0.1 * g.x_at(xs).x;
                }

    // Stored value at a node.
    const Vec3 vn = g.v_at(3, 4, 5);
    CHECK(interpolate(f, {g.x_node(2), 0, 0}, vn) ==
          doctest::Approx(f.at(2, g.v_index(3, 4, 5))).epsilon(1e-14));

    // Multilinear function reproduced at cell midpoints (velocity part).
    const Vec3 vm{0.5 * (g.v_node(3) + g.v_node(4)), g.v_node(6), g.v_node(2)};
    const double expect = 1.0 + 0.5 * vm.x + 0.25 * vm.y - 0.125 * vm.z + 0.1 * g.x_node(2);
    CHECK(interpolate(f, {g.x_node(2), 0, 0}, vm) == doctest::Approx(expect).epsilon(1e-13));

    // Periodic wrap: shifting x by L changes nothing.
    const Vec3 xq{1.3, 0, 0};
    CHECK(interpolate(f, xq, vm) ==
          doctest::Approx(interpolate(f, {xq.x + g.L, 0, 0}, vm)).epsilon(1e-13));

    // Outside the velocity cube: clamped to zero.
    CHECK(interpolate(f, xq, {2.99, 2.99, 3.4}) == 0.0);
}

TEST_CASE("interpolate: Gaussian accuracy is second order") {
    auto run = [](int nv) {
        PhaseGrid g = make_grid(0, 0.0, 1, 4.0, nv);
        DistributionField f = make_field(g, -1.0);
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c)
                    f.at(0, g.v_index(a, b, c)) = std::exp(-g.v_at(a, b, c).norm2());
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const double s = -1.5 + 3.0 * k / 99.0;
            const Vec3 v{s, 0.3 * s, -0.2 * s};
            worst = std::max(worst, std::fabs(interpolate(f, {}, v) - std::exp(-v.norm2())));
        }
        return worst;
    };
    const double e16 = run(16), e32 = run(32);
    CHECK(e32 < e16 / 3.0); // roughly O(h^2)
    CHECK(e32 < 0.06);
}

TEST_CASE("ul_norm: zero field, weights, and monotonicity") {
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 16);
    DistributionField z = make_field(g, -1.0);
    CHECK(ul_norm(z, 0, 0).value_Hkl == 0.0);
    CHECK(ul_norm(z, 4, 2).value_Hkl == 0.0);

    DistributionField f = make_field(g, -1.0);
    for (int a = 0; a < g.n_v; ++a)
        for (int b = 0; b < g.n_v; ++b)
            for (int c = 0; c < g.n_v; ++c)
                f.at(0, g.v_index(a, b, c)) = std::exp(-bracket2(g.v_at(a, b, c)));

    const double h00 = ul_norm(f, 0, 0).value_Hkl;
    const double h01 = ul_norm(f, 0, 1).value_Hkl;
    const double h10 = ul_norm(f, 1, 0).value_Hkl;
    CHECK(h01 >= h00); // <v> >= 1
    CHECK(h10 >= h00); // derivative sum includes the k=0 term

    CHECK_THROWS_AS(ul_norm(f, 5, 0), invalid_input);
    DistributionField bad = f;
    bad.values[7] = std::nan("");
    CHECK_THROWS_AS(ul_norm(bad, 0, 0), invalid_input);
}

TEST_CASE("ul_norm: Gaussian value against the radial quadrature oracle") {
    // Homogeneous field exp(-<v>^2): the k=l=0 value is the discrete L2^2, which
    // approximates int exp(-2<v>^2) dv = e^{-2} int exp(-2|v|^2) dv.
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 48);
    DistributionField f = make_field(g, -1.0);
    for (int a = 0; a < g.n_v; ++a)
        for (int b = 0; b < g.n_v; ++b)
            for (int c = 0; c < g.n_v; ++c)
                f.at(0, g.v_index(a, b, c)) = std::exp(-bracket2(g.v_at(a, b, c)));
    const auto ref = oracle::radial_kernel_integral(
        0.0, [](double s) { return std::exp(-2.0 * (1.0 + s * s)); }, 5.0);
    const double got = ul_norm(f, 0, 0).value_Hkl;
    CHECK(std::fabs(got - ref.value) / ref.value < 1e-4);
}

TEST_CASE("ul_norm: homogeneous field on a spatial grid carries ||phi||_2^2") {
    // Constant-in-x field: windowed value = ||phi||^2_{L2} * (discrete L2_v)^2.
    PhaseGrid g1 = make_grid(1, 16.0, 64, 3.0, 8);
    DistributionField f = make_field(g1, -1.0);
    for (std::int64_t xs = 0; xs < g1.spatial_count(); ++xs)
        for (int a = 0; a < g1.n_v; ++a)
            for (int b = 0; b < g1.n_v; ++b)
                for (int c = 0; c < g1.n_v; ++c)
                    f.at(xs, g1.v_index(a, b, c)) = std::exp(-g1.v_at(a, b, c).norm2());

    PhaseGrid g0 = make_grid(0, 0.0, 1, 3.0, 8);
    DistributionField f0 = make_field(g0, -1.0);
    for (std::int64_t k = 0; k < g0.velocity_count(); ++k) f0.at(0, k) = f.at(0, k);

    // 1-D discrete ||phi||^2 on this x-grid.
    double phi2 = 0.0;
    for (int i = 0; i < g1.n_x; ++i) {
        const double d = g1.torus_delta(g1.x_node(i), 0.0);
        const double p = bump_phi(std::fabs(d));
        phi2 += p * p * g1.h_x;
    }
    const double got = ul_norm(f, 0, 0).value_Hkl;
    const double expect = phi2 * ul_norm(f0, 0, 0).value_Hkl;
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("ul_norm: grid refinement converges at second order") {
    auto value = [](int nv) {
        PhaseGrid g = make_grid(0, 0.0, 1, 4.0, nv);
        DistributionField f = make_field(g, -1.0);
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c)
                    f.at(0, g.v_index(a, b, c)) = std::exp(-g.v_at(a, b, c).norm2());
        return ul_norm(f, 0, 0).value_Hkl;
    };
    const double v1 = value(12), v2 = value(24), v3 = value(48);
    // Richardson: the error ratio between successive halvings approaches 4.
    const double ratio = std::fabs(v1 - v2) / std::fabs(v2 - v3);
    CHECK(ratio > 2.5);
}

TEST_CASE("cutoffs: bump support and domain-cutoff gradient bound") {
    CHECK(bump_phi(0.5) == 1.0);
    CHECK(bump_phi(1.0) == 1.0);
    CHECK(bump_phi(2.0) == 0.0);
    CHECK(bump_phi(1.5) > 0.0);
    CHECK(bump_phi(1.5) < 1.0);

    // |d chi_R / ds| <= 2 sampled finely (the paper's n = 1 derivative bound).
    const double R = 5.0;
    double worst = 0.0;
    for (int i = 0; i < 4000; ++i) {
        const double s = 2.0 + 4.0 * i / 4000.0;
        const double d = (chi_domain(s + 5e-6, R) - chi_domain(s - 5e-6, R)) / 1e-5;
        worst = std::max(worst, std::fabs(d));
    }
    CHECK(worst <= 2.0);
}

TEST_CASE("field serialization round-trips") {
    PhaseGrid g = make_grid(1, 2.0, 4, 2.0, 8);
    DistributionField f = make_field(g, -1.5);
    f.t = 0.375;
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = std::sin(0.1 * i);
    const std::string path = (std::filesystem::temp_directory_path() / "ll_field.f64").string();
    save_field(f, path);
    DistributionField r = load_field(path);
    CHECK(r.grid.same_shape(g));
    CHECK(r.t == f.t);
    CHECK(r.gamma == f.gamma);
    REQUIRE(r.values.size() == f.values.size());
    for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(r.values[i] == f.values[i]);
}
