#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "landau/grid.hpp"
#include "landau/util.hpp"

namespace landau {

/// Quadrature weights for the nonlocal collision kernels, tabulated per offset
/// cell o in [-(n_v-1), n_v-1]^3 (offset w = o * h_v between velocity nodes).
///
/// Weights are product-quadrature weights: each entry is the cell integral of
/// the kernel plus centered-difference moment corrections, so that
///   sum_o W(o) f(v - o h)  =  integral k(w) f(v-w) dw + O(h^4)
/// for smooth f. The cell containing w = 0 is integrated exactly (the kernels
/// are locally integrable for gamma > -3; for the a-kernel also at gamma = -3).
///
/// Channels: a = |w|^{gamma+2} (I - w^ (x) w^) (six components, order
/// a11,a12,a13,a22,a23,a33), c = |w|^gamma (unscaled; the constant c_gamma is
/// applied at assembly), b_j = -2 |w|^gamma w_j (the divergence of the a-kernel,
/// used by the flux form of the operator).
struct KernelStencil {
    double gamma = -1.0;
    double h_v = 0.0;
    int n_v = 0;
    int noff = 0; ///< 2 n_v - 1 offsets per axis

    std::array<std::vector<double>, 6> a_w;
    std::vector<double> c_w;
    std::array<std::vector<double>, 3> b_w;

    /// Exact integrals over the singular cell (diagnostic / test hooks).
    double singular_cell_c = 0.0;     ///< integral of |w|^gamma over the origin cell
    double singular_cell_a_diag = 0.0; ///< diagonal entry of the a-kernel origin integral

    std::int64_t off_index(int oi, int oj, int ok) const {
        const int m = n_v - 1;
        return (static_cast<std::int64_t>(oi + m) * noff + (oj + m)) * noff + (ok + m);
    }

    double c_gamma() const { return 2.0 * (gamma + 3.0); }
    static constexpr double c3_coulomb() { return 8.0 * M_PI; } ///< local-term constant at gamma = -3

    // FFT images of the embedded kernels, built lazily and shared.
    struct FftPlans;
    std::shared_ptr<FftPlans> fft;
};

/// Per-phase-point collision coefficients: abar (symmetric 3x3), cbar (scalar)
/// and bbar (the divergence-form drift, bbar_j = sum_i d_i abar_ij at kernel level).
struct CoefficientField {
    PhaseGrid grid;
    double t = 0.0;
    double gamma = -1.0;
    bool cutoff_applied = false; ///< set by cutoff_coefficients (eq-aR form)
    double r_cut = 0.0;
    double eps = 0.0;

    std::array<std::vector<double>, 6> a;
    std::vector<double> c;
    std::array<std::vector<double>, 3> b;

    SymMat3 a_at(std::int64_t xs, std::int64_t v_lin) const {
        const std::int64_t p = grid.index(xs, v_lin);
        return SymMat3{{a[0][p], a[1][p], a[2][p], a[3][p], a[4][p], a[5][p]}};
    }
    Vec3 b_at(std::int64_t xs, std::int64_t v_lin) const {
        const std::int64_t p = grid.index(xs, v_lin);
        return {b[0][p], b[1][p], b[2][p]};
    }
    double c_at(std::int64_t xs, std::int64_t v_lin) const {
        return c[grid.index(xs, v_lin)];
    }
};

CoefficientField make_coefficient_field(const PhaseGrid& grid, double gamma);

/// Tabulates the stencil for the grid spacing; gamma in [-3, 0).
KernelStencil precompute_stencil(const PhaseGrid& grid, double gamma);

/// abar = a_gamma (kernel * f), cbar = c_gamma (|w|^gamma * f) with a_gamma = 1,
/// c_gamma = 2(gamma+3); at gamma = -3 the c-channel is the local term 8 pi f.
/// Computed by zero-padded (linear) FFT convolution per spatial node.
/// `c_gamma_override`, when >= 0, replaces the derived constant (used by the
/// divergence-form negative control only).
CoefficientField compute_coefficients(const DistributionField& f, const KernelStencil& st,
                                      double c_gamma_override = -1.0);

struct OraclePoint {
    SymMat3 abar;
    Vec3 bbar;
    double cbar = 0.0;
};

/// Direct summation over velocity cells at one phase point. On grid nodes it
/// uses the same stencil weights as the FFT path (different summation order);
/// off-lattice v (far-field queries) falls back to pointwise kernel midpoint
/// quadrature, adequate when v is well separated from supp f.
OraclePoint quadrature_oracle(const DistributionField& f, std::int64_t xs, const Vec3& v,
                              const KernelStencil& st, double c_gamma_override = -1.0);

/// Max-norm over interior nodes of the difference between the nondivergence
/// form tr(abar D^2 f) + cbar f and the divergence form
/// div(abar grad f - bbar_fd f) with bbar_fd,j = sum_i D_i abar_ij taken by
/// centered differences. Converges at 2nd order iff c_gamma = 2(gamma+3).
double divergence_form_consistency(const DistributionField& f, const KernelStencil& st,
                                   double c_gamma_override = -1.0);

/// Serialization: <path>.abar.f64 (six components per node, component-fastest,
/// order a11,a12,a13,a22,a23,a33), <path>.cbar.f64, <path>.bbar.f64, and a JSON
/// sidecar <path>.json mirroring the field header.
void save_coefficients(const CoefficientField& cf, const std::string& path);
CoefficientField load_coefficients(const std::string& path);

} // namespace landau
