#pragma once

#include <memory>
#include <vector>

#include "landau/diagnostics.hpp"
#include "landau/kernel.hpp"

namespace landau {

struct SdeConfig {
    double R_cut = 0.0;       ///< velocity cutoff radius of the truncated coefficients
    double eps = 1e-3;        ///< viscosity floor (> 0 required)
    double ds = 1e-3;         ///< Euler-Maruyama step
    std::int64_t n_paths = 10000;
    std::uint64_t seed = 1;
    bool antithetic = false;  ///< velocity increments mirrored across path pairs
};

/// A batch of kinetic SDE trajectories at the terminal time, with the
/// accumulated integral of cbar along each path.
struct ParticleEnsemble {
    double t = 0.0;
    std::int64_t n_paths = 0;
    std::vector<Vec3> X;
    std::vector<Vec3> V;
    std::vector<double> W_c;
    std::vector<std::uint8_t> alive;   ///< 0 when the NaN guard aborted the path
    std::vector<double> max_speed;     ///< per-path sup |V_s| (exit statistics)
};

/// Truncated coefficients a_R = chi(v/R) abar + (1 - chi(v/R)) I on the grid;
/// cbar unchanged. Defines the diffusion for all v (identity beyond the grid).
CoefficientField cutoff_coefficients(const CoefficientField& coeffs, double R_cut);

/// Symmetric PD square root: sigma sigma = M + eps I, by closed-form 3x3
/// eigendecomposition. Rejects matrices with eigenvalues below -1e-12 |M|.
SymMat3 spd_sqrt(const SymMat3& M, double eps);

/// Time-indexed coefficient snapshots with linear interpolation in time and
/// multilinear interpolation in (x, v); beyond the velocity cube the diffusion
/// is the identity and cbar is zero. Snapshots must carry the cutoff form.
struct CoeffTrajectory {
    std::vector<double> times;
    std::vector<std::shared_ptr<const CoefficientField>> snaps;
    double R_cut = 0.0;
    double eps = 1e-3;

    /// abar_R (pre-eps) and cbar at (time tau, x, v).
    void eval(double tau, const Vec3& x, const Vec3& v, SymMat3& a_R, double& cbar) const;
};

CoeffTrajectory make_coeff_trajectory(std::vector<double> times,
                                      std::vector<std::shared_ptr<const CoefficientField>> snaps,
                                      double R_cut, double eps);

/// Euler-Maruyama simulation of
///   dV_s = sigma_{R,eps}(t - s, X_s, V_s) dW_s,  dX_s = -V_s ds
/// from (x, v) over s in [0, t], accumulating W_c = int cbar(t-s, X_s, V_s) ds.
/// Per-path counter-based streams: bit-identical results for any worker count.
ParticleEnsemble simulate(const Vec3& x, const Vec3& v, double t, const CoeffTrajectory& coeffs,
                          const SdeConfig& cfg);

struct FkEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::int64_t hits = 0;     ///< paths with f_in(X_t, V_t) > 0
    std::int64_t n_paths = 0;  ///< live paths entering the average
};

/// Sample mean and standard error of exp(W_c) f_in(X_t, V_t); with
/// drop_exponent the weight is omitted, a certified-direction lower bound
/// since cbar >= 0. With antithetic ensembles the error is over pair means.
FkEstimate feynman_kac(const ParticleEnsemble& ensemble, const DistributionField& f_in,
                       bool drop_exponent = false, bool antithetic = false);

struct Probe {
    double t = 0.0;
    Vec3 x{};
    Vec3 v{};
};

struct SpreadRow {
    Probe probe;
    double estimate = 0.0;
    double std_error = 0.0;
    std::int64_t hits = 0;
    std::int64_t n_paths = 0;
    bool inconclusive = false; ///< zero hits: no lower bound, NOT zero
};

/// Drop-exponent Feynman-Kac lower bounds at each probe against the core-prior
/// initial data (mass-spreading experiments).
std::vector<SpreadRow> core_spreading_experiment(const CorePrior& core,
                                                 const std::vector<Probe>& probes,
                                                 const CoeffTrajectory& coeffs,
                                                 const DistributionField& f_in,
                                                 const SdeConfig& cfg);

void write_lowerbound_csv(const std::vector<SpreadRow>& rows, const std::string& path);

} // namespace landau
