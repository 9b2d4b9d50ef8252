#include <doctest.h>

#include <cmath>
#include <random>

#include "landau/kernel.hpp"
#include "oracles/oracles.hpp"

using namespace landau;

namespace {

DistributionField gaussian_field(const PhaseGrid& g, double gamma, double width2 = 1.0) {
    DistributionField f = make_field(g, gamma);
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs)
        for (int a = 0; a < g.n_v; ++a)
            for (int b = 0; b < g.n_v; ++b)
                for (int c = 0; c < g.n_v; ++c)
                    f.at(xs, g.v_index(a, b, c)) =
                        std::exp(-g.v_at(a, b, c).norm2() / width2);
    return f;
}

} // namespace

TEST_CASE("precompute_stencil: gamma range and singular-cell integral") {
    PhaseGrid g = make_grid(0, 0.0, 1, 2.0, 8);
    CHECK_THROWS_AS(precompute_stencil(g, 0.5), invalid_input);
    CHECK_THROWS_AS(precompute_stencil(g, -3.5), invalid_input);

    // gamma = -2: the origin-cell integral of |w|^{-2} via spherical shells:
    // int_cell |w|^{-2} dw = int_0^{sqrt(3) a} omega(a/s) ds with omega(u) the
    // solid angle of directions staying inside the cube of half-width a out to
    // radius s. Exact in the face regime, 1-D quadrature in the corner regime.
    const double gamma = -2.0;
    KernelStencil st = precompute_stencil(g, gamma);
    const double h = g.h_v;
    const double a = h / 2.0;

    // area{x > u and y > u} on the unit sphere (pairwise cap overlap).
    auto pairwise = [](double u) {
        if (2.0 * u * u >= 1.0) return 0.0;
        const double zmax = std::sqrt(1.0 - 2.0 * u * u);
        const int n = 4000;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double z = -zmax + 2.0 * zmax * i / n;
            const double rho = std::sqrt(std::max(1.0 - z * z, 0.0));
            const double arg = std::clamp(u / std::max(rho, 1e-300), -1.0, 1.0);
            const double arc = std::max(0.0, std::acos(arg) - std::asin(arg));
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc += w * arc;
        }
        return acc * (2.0 * zmax / n) / 3.0;
    };
    auto omega = [&](double u) {
        if (u >= 1.0) return 4.0 * M_PI;
        if (u * u >= 0.5) return 4.0 * M_PI - 12.0 * M_PI * (1.0 - u);
        return 4.0 * M_PI - 12.0 * M_PI * (1.0 - u) + 12.0 * pairwise(u);
    };
    // Self-check: the solid angle closes at the cube corner.
    CHECK(std::fabs(omega(1.0 / std::sqrt(3.0) + 1e-12)) < 1e-6);

    double reference = 4.0 * M_PI * a;                                      // s <= a
    reference += -8.0 * M_PI * (std::sqrt(2.0) - 1.0) * a +
                 12.0 * M_PI * a * std::log(std::sqrt(2.0));                // face regime
    {
        const int n = 800; // corner regime, Simpson over s
        const double lo = std::sqrt(2.0) * a, hi = std::sqrt(3.0) * a;
        double acc = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double s = lo + (hi - lo) * i / n;
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc += w * omega(a / s);
        }
        reference += acc * ((hi - lo) / n) / 3.0;
    }
    CHECK(std::fabs(st.singular_cell_c - reference) / reference < 1e-6);

    // The corrected origin weight stays within a few percent of the plain cell
    // integral (the moment corrections are O(h^2)-scale adjustments).
    const double w0 = st.c_w[st.off_index(0, 0, 0)];
    CHECK(std::fabs(w0 - st.singular_cell_c) / reference < 0.1);
}

TEST_CASE("stencil weights: projection structure and trace at far offsets") {
    PhaseGrid g = make_grid(0, 0.0, 1, 3.0, 12);
    const double gamma = -1.0;
    KernelStencil st = precompute_stencil(g, gamma);
    const double h = g.h_v;

    // Cell averaging perturbs the pointwise projection identities at relative
    // order (h/|w|)^2; check with that scaled tolerance at a spread of offsets.
    for (const auto& o : {std::array<int, 3>{4, 0, 0}, {3, 3, 0}, {2, 4, 5}, {8, 1, 1}}) {
        const Vec3 w{o[0] * h, o[1] * h, o[2] * h};
        const double tol = 4.0 * (h * h) / w.norm2();
        const std::int64_t idx = st.off_index(o[0], o[1], o[2]);
        SymMat3 aw{{st.a_w[0][idx], st.a_w[1][idx], st.a_w[2][idx], st.a_w[3][idx],
                    st.a_w[4][idx], st.a_w[5][idx]}};
        const double cell = h * h * h;
        const double scale = std::pow(w.norm(), gamma + 2.0) * cell;

        // a(w) . w ~ 0 (the projection annihilates its axis).
        const Vec3 aww = aw.mul(w * (1.0 / w.norm()));
        CHECK(aww.norm() / scale < tol);

        // tr a(w) ~ 2 |w|^{gamma+2}.
        CHECK(std::fabs(aw.trace() - 2.0 * scale) / (2.0 * scale) < tol);

        // c >= 0 and b(w) ~ -2 |w|^gamma w.
        CHECK(st.c_w[idx] >= 0.0);
        const Vec3 bw{st.b_w[0][idx], st.b_w[1][idx], st.b_w[2][idx]};
        const Vec3 bref = w * (-2.0 * std::pow(w.norm2(), 0.5 * gamma) * cell);
        CHECK((bw - bref).norm() / bref.norm() < tol);
    }
}

TEST_CASE("compute_coefficients: zero field, frame and sign validation") {
    PhaseGrid g = make_grid(0, 0.0, 1, 3.0, 12);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField z = make_field(g, -1.0);
    CoefficientField cf = compute_coefficients(z, st);
    for (int s = 0; s < 6; ++s)
        for (double v : cf.a[s]) CHECK(v == 0.0);
    for (double v : cf.c) CHECK(v == 0.0);

    DistributionField f = gaussian_field(g, -1.0);
    DistributionField framed = f;
    framed.frame = Frame::Framed;
    CHECK_THROWS_AS(compute_coefficients(framed, st), invalid_input);

    DistributionField neg = f;
    neg.values[3] = -1e-3;
    CHECK_THROWS_AS(compute_coefficients(neg, st), invalid_input);
}

TEST_CASE("FFT path matches the direct-summation oracle to 1e-10") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 16);
    const double gamma = -1.5;
    KernelStencil st = precompute_stencil(g, gamma);
    DistributionField f = gaussian_field(g, gamma);
    CoefficientField cf = compute_coefficients(f, st);

    std::mt19937 rng(7);
    std::uniform_int_distribution<int> pick(0, g.n_v - 1);
    for (int k = 0; k < 10; ++k) {
        const int a = pick(rng), b = pick(rng), c = pick(rng);
        const OraclePoint op = quadrature_oracle(f, 0, g.v_at(a, b, c), st);
        const std::int64_t vl = g.v_index(a, b, c);
        const SymMat3 am = cf.a_at(0, vl);
        for (int s = 0; s < 6; ++s)
            CHECK(std::fabs(am.m[s] - op.abar.m[s]) <=
                  1e-10 * std::max(1.0, op.abar.frob_norm()));
        CHECK(std::fabs(cf.c_at(0, vl) - op.cbar) <= 1e-10 * std::max(1.0, std::fabs(op.cbar)));
        const Vec3 bg = cf.b_at(0, vl);
        for (int s = 0; s < 3; ++s)
            CHECK(std::fabs(bg[s] - op.bbar[s]) <= 1e-10 * std::max(1.0, op.bbar.norm()));
    }
}

TEST_CASE("radial data: isotropy at the center and radial-quadrature value") {
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 32);
    const double gamma = -1.0;
    KernelStencil st = precompute_stencil(g, gamma);
    const double wid = 2.0;
    DistributionField f = gaussian_field(g, gamma, wid);
    auto prof = [&](double s) { return std::exp(-s * s / wid); };

    // v = 0 is off-lattice (even n_v): the oracle evaluates there directly.
    const OraclePoint op = quadrature_oracle(f, 0, Vec3{}, st);

    // Isotropy: off-diagonals are tiny relative to the diagonal.
    const double diag = op.abar(0, 0);
    CHECK(std::fabs(op.abar(0, 1)) < 1e-10 * diag);
    CHECK(std::fabs(op.abar(0, 2)) < 1e-10 * diag);
    CHECK(std::fabs(op.abar(1, 2)) < 1e-10 * diag);
    CHECK(op.abar(1, 1) == doctest::Approx(diag).epsilon(1e-10));

    // abar(0) = (2/3) int |w|^{gamma+2} f dw * I.
    // The off-lattice oracle integrates cells without moment corrections, so
    // this check is at its second-order accuracy; the sharp 1e-4 comparisons
    // against the radial-reduction oracle are node-based below.
    const auto ref = oracle::radial_kernel_integral(gamma + 2.0, prof, 5.0);
    CHECK(std::fabs(diag - (2.0 / 3.0) * ref.value) / ((2.0 / 3.0) * ref.value) < 1e-2);

    // The FFT-computed coefficients at grid nodes match the 1-D radial
    // reduction oracle to 1e-4 (parallel/perpendicular components and cbar).
    CoefficientField cf = compute_coefficients(f, st);
    for (int i : {18, 22, 26}) {
        const Vec3 v = g.v_at(i, 16, 16);
        const double r = v.norm();
        const auto rc = oracle::radial_landau_coefficients(gamma, prof, r, 8.0, st.c_gamma());
        const std::int64_t p = g.v_index(i, 16, 16);
        const SymMat3 am = cf.a_at(0, p);
        const Vec3 vh = v * (1.0 / r);
        const double apar = am.quad(vh);
        const double aperp = 0.5 * (am.trace() - apar);
        CHECK(std::fabs(apar - rc.a_par) / rc.a_par < 1e-4);
        CHECK(std::fabs(aperp - rc.a_perp) / rc.a_perp < 1e-4);
        CHECK(std::fabs(cf.c_at(0, p) - rc.cbar) / rc.cbar < 1e-4);
    }
}

TEST_CASE("linearity and translation equivariance of the coefficients") {
    PhaseGrid g = make_grid(0, 0.0, 1, 4.0, 16);
    KernelStencil st = precompute_stencil(g, -2.0);

    DistributionField f1 = make_field(g, -2.0), f2 = make_field(g, -2.0);
    for (int a = 0; a < g.n_v; ++a)
        for (int b = 0; b < g.n_v; ++b)
            for (int c = 0; c < g.n_v; ++c) {
                const Vec3 v = g.v_at(a, b, c);
                f1.at(0, g.v_index(a, b, c)) = std::exp(-(v - Vec3{1, 0, 0}).norm2() * 2.0);
                f2.at(0, g.v_index(a, b, c)) = std::exp(-(v + Vec3{0, 1, 0}).norm2() * 1.5);
            }
    DistributionField sum = f1;
    for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] += f2.values[i];

    CoefficientField c1 = compute_coefficients(f1, st);
    CoefficientField c2 = compute_coefficients(f2, st);
    CoefficientField cs = compute_coefficients(sum, st);
    double worst = 0.0, scale = 0.0;
    for (std::int64_t p = 0; p < g.phase_count(); ++p) {
        worst = std::max(worst, std::fabs(cs.a[0][p] - c1.a[0][p] - c2.a[0][p]));
        worst = std::max(worst, std::fabs(cs.c[p] - c1.c[p] - c2.c[p]));
        scale = std::max({scale, std::fabs(cs.a[0][p]), std::fabs(cs.c[p])});
    }
    CHECK(worst <= 1e-12 * scale);

    // Shift a compactly supported bump by one cell: coefficients shift exactly.
    DistributionField bump = make_field(g, -2.0);
    DistributionField bump_shift = make_field(g, -2.0);
    for (int a = 2; a < g.n_v - 3; ++a)
        for (int b = 2; b < g.n_v - 2; ++b)
            for (int c = 2; c < g.n_v - 2; ++c) {
                const Vec3 v = g.v_at(a, b, c);
                const double val = std::exp(-4.0 * (v - Vec3{0.3, -0.2, 0.1}).norm2());
                if (val < 1e-6) continue;
                bump.at(0, g.v_index(a, b, c)) = val;
                bump_shift.at(0, g.v_index(a + 1, b, c)) = val;
            }
    CoefficientField cb = compute_coefficients(bump, st);
    CoefficientField cbs = compute_coefficients(bump_shift, st);
    double worst2 = 0.0, scale2 = 0.0;
    for (int a = 1; a < g.n_v - 1; ++a)
        for (int b = 1; b < g.n_v - 1; ++b)
            for (int c = 1; c < g.n_v - 1; ++c) {
                const double va = cb.a[0][g.v_index(a, b, c)];
                const double vb = cbs.a[0][g.v_index(a + 1, b, c)];
                worst2 = std::max(worst2, std::fabs(va - vb));
                scale2 = std::max(scale2, std::fabs(va));
            }
    CHECK(worst2 <= 1e-11 * scale2);
}

TEST_CASE("PSD of abar for nonnegative data") {
    PhaseGrid g = make_grid(0, 0.0, 1, 5.0, 24);
    for (double gamma : {-1.0, -2.5, -3.0}) {
        KernelStencil st = precompute_stencil(g, gamma);
        DistributionField f = gaussian_field(g, gamma);
        CoefficientField cf = compute_coefficients(f, st);
        double worst = 0.0;
        for (std::int64_t p = 0; p < g.phase_count(); ++p) {
            SymMat3 am{{cf.a[0][p], cf.a[1][p], cf.a[2][p], cf.a[3][p], cf.a[4][p], cf.a[5][p]}};
            const auto w = sym3_eigenvalues(am);
            worst = std::min(worst, w[0] / std::max(w[2], 1e-300));
            CHECK(cf.c[p] >= 0.0);
        }
        CHECK(worst >= -1e-12);
    }
}

TEST_CASE("anisotropic upper-bound exponents for a unit Gaussian") {
    PhaseGrid g = make_grid(0, 0.0, 1, 6.0, 32);
    const double gamma = -1.0;
    KernelStencil st = precompute_stencil(g, gamma);
    DistributionField f = gaussian_field(g, gamma);
    CoefficientField cf = compute_coefficients(f, st);

    std::vector<double> lx, ly_sup, ly_par;
    for (int i = 0; i < 10; ++i) {
        const double r = 2.0 + (0.8 * g.V_max - 2.0) * i / 9.0;
        // Sample along a lattice-friendly direction.
        const Vec3 v{r, 0.0, 0.0};
        const OraclePoint op = quadrature_oracle(f, 0, v, st);
        double sup_e = 0.0;
        for (const Vec3 e : {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}})
            sup_e = std::max(sup_e, op.abar.quad(e));
        lx.push_back(std::log(bracket(v)));
        ly_sup.push_back(std::log(sup_e));
        ly_par.push_back(std::log(op.abar.quad(v) / v.norm2()));
    }
    double slope;
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const std::size_t n = lx.size();
        for (std::size_t i = 0; i < n; ++i) {
            sx += lx[i];
            sy += ly_sup[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * ly_sup[i];
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    CHECK(slope == doctest::Approx(gamma + 2.0).epsilon(0.3 / std::fabs(gamma + 2.0)));
    {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const std::size_t n = lx.size();
        for (std::size_t i = 0; i < n; ++i) {
            sx += lx[i];
            sy += ly_par[i];
            sxx += lx[i] * lx[i];
            sxy += lx[i] * ly_par[i];
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    }
    CHECK(std::fabs(slope - gamma) <= 0.3);
}

TEST_CASE("divergence-form consistency: convergence and the wrong constant") {
    const double gamma = -1.0;
    auto residual = [&](int nv, double cg) {
        PhaseGrid g = make_grid(0, 0.0, 1, 4.0, nv);
        KernelStencil st = precompute_stencil(g, gamma);
        DistributionField f = gaussian_field(g, gamma);
        return divergence_form_consistency(f, st, cg);
    };
    const double r16 = residual(16, -1.0);
    const double r24 = residual(24, -1.0);
    const double order = std::log(r16 / r24) / std::log(24.0 / 16.0);
    CHECK(order >= 1.8); // the acceptance suite re-checks at n_v in {24, 32, 48}

    // Deliberate wrong constant c_gamma = (gamma + 3): residual stalls.
    const double w16 = residual(16, gamma + 3.0);
    const double w24 = residual(24, gamma + 3.0);
    CHECK(w24 > 0.3 * w16); // no second-order decay
    CHECK(w24 > 5.0 * r24);
}

TEST_CASE("gamma = -3: c is the local term 8 pi f") {
    PhaseGrid g = make_grid(0, 0.0, 1, 3.0, 12);
    KernelStencil st = precompute_stencil(g, -3.0);
    DistributionField f = gaussian_field(g, -3.0);
    CoefficientField cf = compute_coefficients(f, st);
    for (std::int64_t k = 0; k < g.velocity_count(); ++k)
        CHECK(cf.c[k] == doctest::Approx(8.0 * M_PI * f.at(0, k)).epsilon(1e-13));
    // The a-kernel stays |w|^{-1}(I - w^ (x) w^): still integrable and PSD.
    const auto w = sym3_eigenvalues(cf.a_at(0, g.v_index(6, 6, 6)));
    CHECK(w[0] >= -1e-12 * w[2]);
}

TEST_CASE("coefficient serialization round-trips") {
    PhaseGrid g = make_grid(0, 0.0, 1, 2.0, 8);
    KernelStencil st = precompute_stencil(g, -1.0);
    DistributionField f = gaussian_field(g, -1.0);
    CoefficientField cf = compute_coefficients(f, st);
    cf.t = 0.25;
    const std::string path = "/tmp/ll_coeffs";
    save_coefficients(cf, path);
    CoefficientField r = load_coefficients(path);
    CHECK(r.t == cf.t);
    for (int s = 0; s < 6; ++s)
        for (std::size_t i = 0; i < cf.a[s].size(); ++i) CHECK(r.a[s][i] == cf.a[s][i]);
    for (std::size_t i = 0; i < cf.c.size(); ++i) CHECK(r.c[i] == cf.c[i]);
}
