#pragma once

#include <memory>

#include "landau/grid.hpp"
#include "landau/kernel.hpp"

namespace landau {

/// Time-dependent Gaussian frame mu(t,v) = exp(-(rho0 - kappa t) <v>^2),
/// valid up to T_max = rho0/(2 kappa), where the decay rate has halved.
struct GaussianWeight {
    double rho0 = 0.0;
    double kappa = 0.0;

    double T_max() const { return rho0 / (2.0 * kappa); }
    double rate(double t) const { return rho0 - kappa * t; }
};

GaussianWeight make_weight(double rho0, double kappa);

/// mu(t, v); rejects t outside [0, T_max].
double weight(const GaussianWeight& w, double t, const Vec3& v);

/// g = mu^{-1} f (physical -> framed) and f = mu g (framed -> physical).
DistributionField to_frame(const DistributionField& f, const GaussianWeight& w, double t);
DistributionField from_frame(const DistributionField& g, const GaussianWeight& w, double t);

/// Coefficients of the framed equation
///   dt g + v.grad_x g + kappa <v>^2 g = tr(A D_v^2 g) + B.grad_v g + C g:
/// A = abar[mu g], B_j = 2 abar_ij (-2(rho0-kappa t) v_i),
/// C = cbar + abar_ij (-2(rho0-kappa t) d_ij + 4 (rho0-kappa t)^2 v_i v_j).
struct FramedCoefficients {
    PhaseGrid grid;
    double t = 0.0;
    double gamma = -1.0;
    std::array<std::vector<double>, 6> A;
    std::array<std::vector<double>, 3> B;
    std::vector<double> C;

    /// Physical-frame coefficients these were derived from (abar/bbar/cbar of
    /// mu*g); retained so the flux-form solver path can use them directly.
    std::shared_ptr<const CoefficientField> source;

    SymMat3 A_at(std::int64_t xs, std::int64_t v_lin) const {
        const std::int64_t p = grid.index(xs, v_lin);
        return SymMat3{{A[0][p], A[1][p], A[2][p], A[3][p], A[4][p], A[5][p]}};
    }
    Vec3 B_at(std::int64_t xs, std::int64_t v_lin) const {
        const std::int64_t p = grid.index(xs, v_lin);
        return {B[0][p], B[1][p], B[2][p]};
    }
};

/// `coeffs` must be the collision coefficients of the physical density mu * g.
FramedCoefficients frame_coefficients(const CoefficientField& coeffs, const GaussianWeight& w,
                                      double t);

/// Convenience: mu*g -> compute_coefficients -> frame_coefficients.
FramedCoefficients coefficients_of_iterate(const DistributionField& g_framed,
                                           const GaussianWeight& w, double t,
                                           const KernelStencil& st);

} // namespace landau
