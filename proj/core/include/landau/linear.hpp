#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "landau/frame.hpp"
#include "landau/grid.hpp"

namespace landau {

/// One-step configuration for the linearized framed equation
///   dt G + v.grad_x G + kappa <v>^2 G = tr(A D_v^2 G) + B.grad_v G + C G (+ eps Lap_{x,v} G).
struct LinearStepConfig {
    double dt = 0.01;
    double theta = 1.0;   ///< implicitness of the velocity substep (1 = backward Euler)
    double eps = 0.0;     ///< added viscosity (viscous bounded-domain variant)
    double R_cut = 0.0;   ///< domain cutoff radius for the viscous variant (0 = none)
    double max_cfl = 0.45;
    double solver_tol = 1e-10;
    int solver_max_iter = 500;
    /// Velocity substep in divergence (flux) form on f = mu g, conjugated back:
    /// conserves mass to solver tolerance; requires eps == 0 and coefficients
    /// that carry their physical source (abar/bbar).
    bool conservative_flux = false;
    double blowup_factor = 1e6;        ///< abort when sqrt(H00) grows beyond this factor
    double presmooth_eps = 0.0;        ///< optional Gaussian pre-smoother width for the iterate
};

struct StepStats {
    double clamp_mass = 0.0; ///< mass added by clamping negative undershoots
    int cg_iterations = 0;   ///< worst-case iteration count over spatial nodes
};

/// Advances one step of the framed equation with frozen coefficients using
/// Strang splitting: half-step exact (spectral) x-advection, theta-implicit
/// velocity substep, half-step advection. `weight` supplies kappa and the
/// frame; pass nullptr for physical-frame problems (kappa = 0, no conjugation).
DistributionField step_linearized(const DistributionField& G, const FramedCoefficients& coeffs,
                                  const GaussianWeight* weight, const LinearStepConfig& cfg,
                                  StepStats* stats = nullptr);

/// A time-indexed sequence of fields (t = times[i] for fields[i]).
struct Trajectory {
    std::vector<double> times;
    std::vector<DistributionField> fields;

    bool empty() const { return fields.empty(); }
    /// Last snapshot with time <= t (fields are held constant within steps).
    const DistributionField& at_time(double t) const;
};

struct NormRow {
    double t = 0.0;
    double H00 = 0.0;      ///< squared L2_ul value
    double H01 = 0.0;      ///< squared <v>-weighted value
    double H20 = 0.0;      ///< squared H^{2,0}_ul value
    double Y0_accum = 0.0; ///< sup_t H00 + int H01 dt (squared accumulators)
    double clamp_mass = 0.0;
};

struct LinearSolveResult {
    Trajectory G;
    std::vector<NormRow> norms;
    double clamp_mass_total = 0.0;
};

/// Solves the linearized problem over [t0, t0+T] with coefficients frozen from
/// the iterate trajectory h (framed fields, held constant within each step).
/// Records the k=0..2 norm series and asserts nonnegativity up to the clamp
/// tolerance. Throws solver_failure on CG breakdown or on blow-up guard.
LinearSolveResult solve_linearized(const DistributionField& g_in, const Trajectory& h_frozen,
                                   double t0, double T, const LinearStepConfig& cfg,
                                   const GaussianWeight& w, const KernelStencil& st);

/// Same driver with externally supplied per-step coefficients (test hook and
/// frozen-coefficient benchmarks). `provider(step, t)` returns the coefficients
/// used for the step starting at absolute time t.
LinearSolveResult solve_linearized_with(
    const DistributionField& g_in, double t0, double T, const LinearStepConfig& cfg,
    const GaussianWeight* weight,
    const std::function<const FramedCoefficients&(int, double)>& provider);

/// Multiplies by the smooth domain cutoff chi_R (== 1 on Omega_{R-2}, == 0
/// outside Omega_{R-1}, |grad chi_R| <= 2), measured on the 6-D radius
/// sqrt(|x|^2 + |v|^2) with x taken as the minimal-image displacement from 0.
DistributionField apply_domain_cutoff(const DistributionField& field, double R_cut);

/// zeta_eps * field: Gaussian smoothing of width eps (spectral in x, truncated
/// discrete Gaussian in v). Exposed for experiments that study the eps-limit.
DistributionField gaussian_presmooth(const DistributionField& field, double eps);

/// Writes the norm series as CSV (t, H00, H01, H20, Y0_accum, clamp_mass).
void write_norm_csv(const std::vector<NormRow>& rows, const std::string& path);

} // namespace landau
