#include <doctest.h>

#include <cmath>

#include "oracles/oracles.hpp"

using namespace landau;
using namespace landau::oracle;

TEST_CASE("radial_kernel_integral: closed forms") {
    // int_{B_1} |w|^{gamma+2} dw = 4 pi / (gamma + 5); gamma = -1 -> pi.
    auto ind = [](double s) { return s <= 1.0 ? 1.0 : 0.0; };
    const auto r1 = radial_kernel_integral(1.0, ind, 1.0);
    CHECK(r1.value == doctest::Approx(M_PI).epsilon(1e-10));
    CHECK(r1.error_estimate < 1e-8);

    // int_{B_1} |w|^gamma dw = 4 pi / (gamma + 3); gamma = -2 -> 4 pi.
    const auto r2 = radial_kernel_integral(-2.0, ind, 1.0);
    CHECK(r2.value == doctest::Approx(4.0 * M_PI).epsilon(1e-10));

    CHECK_THROWS_AS(radial_kernel_integral(-3.0, ind, 1.0), invalid_input);
}

TEST_CASE("radial_kernel_integral: Gaussian-weighted vs series expansion") {
    for (double p : {-1.0, -2.0, -2.5, 0.5}) {
        const auto got = radial_kernel_integral(
            p, [](double s) { return std::exp(-s * s); }, 1.0);
        const double ref = gaussian_ball_series(p);
        CHECK(std::fabs(got.value - ref) / std::fabs(ref) < 1e-8);
    }
}

TEST_CASE("ito_moments: initial values, scaling, cross-covariance") {
    const Vec3 x{1, 2, 3}, v{-1, 0.5, 0};
    const auto m0 = ito_moments(x, v, 0.0);
    CHECK(m0.mean_V.x == v.x);
    CHECK(m0.cov_V_diag == 0.0);
    CHECK(m0.mean_X.x == x.x);
    CHECK(m0.var_X_diag == 0.0);

    const auto m1 = ito_moments(x, v, 0.5);
    const auto m2 = ito_moments(x, v, 1.0);
    CHECK(m2.var_X_diag == doctest::Approx(8.0 * m1.var_X_diag).epsilon(1e-14));
    CHECK(m1.cov_XV_diag == doctest::Approx(-0.125).epsilon(1e-14));
    CHECK(m1.mean_X.x == doctest::Approx(x.x - 0.5 * v.x).epsilon(1e-14));
}

TEST_CASE("jacobi_eigen agrees with hand values") {
    SymMat3 m{{4.0, 0.0, 0.0, 1.0, 0.0, 0.25}};
    std::array<double, 3> w;
    std::array<Vec3, 3> q;
    jacobi_eigen(m, w, q);
    CHECK(w[0] == doctest::Approx(0.25).epsilon(1e-13));
    CHECK(w[1] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(w[2] == doctest::Approx(4.0).epsilon(1e-13));
}
