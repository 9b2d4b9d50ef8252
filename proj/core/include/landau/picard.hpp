#pragma once

#include <string>
#include <vector>

#include "landau/diagnostics.hpp"
#include "landau/linear.hpp"

namespace landau {

struct PicardConfig {
    double T_target = 0.5;
    int max_outer = 8;               ///< Picard iterations per window attempt
    double contraction_tol = 0.5;    ///< required Y0-distance ratio
    double window_shrink = 0.5;      ///< window shrink factor on contraction failure
    double window_initial = 0.0;     ///< 0: derived from T_target and the frame horizon
    double kappa = 0.0;              ///< 0: default rho0 / (4 T_target)
    LinearStepConfig step;
    double save_every = 0.05;        ///< physical snapshot cadence in solve_landau
    double p_exponent = 0.0;         ///< 0: derived from gamma with margin
    MonitorThresholds monitor;       ///< me_max == 0 disables the monitor
    double rho_rebase_floor = 0.05;  ///< lowest allowed rho/rho0 when re-basing
};

struct PicardWindowResult {
    bool converged = false;
    double achieved_T = 0.0;
    Trajectory g;                    ///< framed trajectory on the accepted window
    std::vector<double> ratios;      ///< contraction ratios of the accepted attempt
    std::vector<double> distances;   ///< Y0 distances per outer iteration
    std::vector<NormRow> norms;
    double clamp_mass = 0.0;
    int outer_iterations = 0;
};

/// Theorem-style iteration: g^0 = g_start held constant in time; g^n solves the
/// linearized problem with coefficients frozen from g^{n-1}. Accepts once the
/// Y0 contraction ratio stays below contraction_tol for two consecutive
/// iterations; otherwise shrinks the window and restarts. Fails (converged =
/// false) when the window collapses below one step.
PicardWindowResult picard_window(const DistributionField& g_start, const GaussianWeight& w,
                                 double t0, double T_window, const PicardConfig& cfg,
                                 const KernelStencil& st);

enum class SolveStatus { Converged, WindowCollapse, MonitorBreach };

struct MomentRow {
    double t = 0.0;
    double mass = 0.0;
    double energy = 0.0;
    double entropy = 0.0;
    Vec3 momentum{};
    double sup_ME = 0.0;
    double sup_P = 0.0;
    double sup_Finf = 0.0;
};

struct SolveResult {
    SolveStatus status = SolveStatus::Converged;
    std::string message;
    Trajectory f;                    ///< physical snapshots (save cadence)
    std::vector<MomentRow> moments;
    std::vector<double> contraction_log; ///< all accepted-window ratios in order
    double clamp_mass_total = 0.0;
    double achieved_T = 0.0;
    std::vector<double> rho_history; ///< frame decay rate per window
};

/// Chains picard_window over successive windows, re-basing the Gaussian frame
/// at each window start. Monitors the continuation quantities when thresholds
/// are set and aborts with a labeled cause on breach.
SolveResult solve_landau(const DistributionField& f_in, double gamma, double rho0,
                         double T_target, const PicardConfig& cfg, const KernelStencil& st);

/// sqrt of (sup_t H00 + int H01 dt) of the difference of two trajectories that
/// share step times; the k = 0 discrete Y-distance used for contraction control.
double y0_distance(const Trajectory& a, const Trajectory& b);

void write_moments_csv(const std::vector<MomentRow>& rows, const std::string& path);

} // namespace landau
