#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "landau/kernel.hpp"

namespace landau {

/// A quantified mass core: f_in >= delta0 on B_r0(x0) x B_r0(v0).
struct CorePrior {
    Vec3 x0{};
    Vec3 v0{};
    double r0 = 0.0;
    double delta0 = 0.0;
};

/// Physical per-spatial-node quantities for the continuation criterion.
struct MomentField {
    PhaseGrid grid;
    double t = 0.0;
    double p_exponent = 0.0;
    std::vector<double> M;    ///< mass density
    std::vector<double> E;    ///< energy density (int |v|^2 f dv)
    std::vector<double> H;    ///< entropy density (0 log 0 := 0)
    std::vector<double> P;    ///< p-th moment
    std::vector<double> Finf; ///< sup_v f(x, v)

    double sup_ME() const;
    double sup_P() const;
    double sup_Finf() const;
    double total_M() const; ///< mass integrated over x (cell sum)
    double total_E() const;
    double total_H() const;
    Vec3 total_momentum() const;

    std::vector<Vec3> momentum; ///< int v f dv per spatial node
};

/// Threshold for the p-th moment exponent: p > 3|gamma| / (5 + gamma).
double p_exponent_threshold(double gamma);

MomentField moments(const DistributionField& f, double p_exponent);

struct WellDistributedReport {
    bool holds = false;
    std::int64_t failing_x = -1;           ///< spatial index of the first failure
    std::vector<Vec3> witness_x;           ///< per spatial node
    std::vector<Vec3> witness_v;
};

/// Searches, for every spatial node x, grid-aligned centers x_m in B_R(x)
/// (torus metric) and v_m in B_R(0) such that f >= delta at all nodes within
/// distance r of (x_m, v_m). Rejects under-resolved r (requires h <= r/3).
WellDistributedReport well_distributed_check(const DistributionField& f, double R, double delta,
                                             double r);

/// Coefficient source used by the verification routines: either grid-backed
/// (multilinear in the stored field) or oracle-backed (direct quadrature).
using CoeffProvider = std::function<OraclePoint(const Vec3& x, const Vec3& v)>;

CoeffProvider grid_provider(std::shared_ptr<const CoefficientField> cf);

struct EllipticityReport {
    double c_fit_all = 0.0;   ///< fitted prefactor of the worst-direction bound
    double c_fit_perp = 0.0;
    double slope_all = 0.0;   ///< fitted exponent of min_e e.abar e vs (1+|v|)
    double slope_perp = 0.0;  ///< same for e perpendicular to v
    double r2_all = 0.0;
    double r2_perp = 0.0;
    double floor_all = 0.0;   ///< min over samples of amin / (1+|v|)^gamma
    double floor_perp = 0.0;  ///< min over samples of amin_perp / (1+|v|)^{gamma+2}
    std::pair<double, double> v_range{0.0, 0.0};
};

/// Fits the anisotropic lower-bound exponents of abar over the sampled
/// velocities (directions: a deterministic sphere mesh plus the exact parallel
/// and perpendicular axes). Rejects fit windows narrower than a factor 8 in |v|.
EllipticityReport ellipticity_verify(const CoeffProvider& coeffs, const CorePrior& core,
                                     const std::vector<Vec3>& v_samples, double gamma);

struct TailFit {
    double nu = 0.0;
    double rho = 0.0;
    double beta = 0.0;
    double r2 = 0.0;
    std::pair<double, double> window{0.0, 0.0};
    bool ok = false;
};

/// Joint (nu, rho, beta) fit of f ~ nu exp(-rho |v|^beta) on a radial shell at
/// one spatial node: linear least squares of log(-log(f/nu)) vs log|v| with a
/// golden-section outer search over nu. Radially bin-averages first.
/// Errors: nonpositive values in the window; window shorter than half a decade.
TailFit fit_tail(const DistributionField& f, std::int64_t xs, double v_lo, double v_hi);

struct SubsolutionReport {
    double c1 = 0.0;                 ///< smallest C1 with full node compliance
    double compliance_at_c1 = 0.0;   ///< fraction of nodes with L f_lower <= tol
    double compliance_at_zero = 0.0; ///< control at C1 = 0
    bool found = false;
};

/// Sign check for the sub-solution ansatz delta1 exp(-beta(t)|v|^{2-gamma}) with
/// beta(t) = 1 + C1/(t - t_lower/2): evaluates L f_lower with exact v-derivatives
/// of the ansatz against the grid coefficients, and bisects for the smallest
/// admissible C1.
SubsolutionReport subsolution_residual(const CoefficientField& coeffs, double t, double t_lower,
                                       double delta1, double v_lo, double v_hi);

struct SupersolutionReport {
    double alpha = 0.0;
    double C = 0.0;
    double compliance = 0.0;         ///< fraction of nodes with L f_upper >= -tol
    double compliance_bprime0 = 0.0; ///< control with the beta' term dropped
    bool found = false;
};

/// Mirror check for the super-solution K exp(alpha t - beta(t)|v|^{2-gamma}),
/// beta(t) = rho/(2 rho C t + 1); searches a C-grid and the smallest alpha.
SupersolutionReport supersolution_residual(const CoefficientField& coeffs, double t, double rho,
                                           double v_lo, double v_hi);

struct MonitorThresholds {
    double me_max = 0.0;   ///< bound on sup_x (M + E)
    double p_max = 0.0;    ///< bound on sup_x P (gamma <= -2 only)
    double finf_max = 0.0; ///< bound on sup_x ||f(x,.)||_inf (gamma <= -2 only)
};

struct MonitorStatus {
    double t = 0.0;
    double sup_ME = 0.0;
    double sup_P = 0.0;
    double sup_Finf = 0.0;
    bool includes_p_terms = false; ///< gamma in [-3,-2] also monitors P and ||f||_inf
    bool breach = false;
    std::string quantity; ///< which quantity breached
};

/// Pure, stateless per-snapshot continuation monitor.
MonitorStatus continuation_monitor(const MomentField& mom, double gamma,
                                   const MonitorThresholds& th);

/// Least-squares line fit y = a + b x; returns (b, a, R^2).
void linear_fit(const std::vector<double>& x, const std::vector<double>& y, double& slope,
                double& intercept, double& r2);

} // namespace landau
