#include "landau/sde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "landau/philox.hpp"

namespace landau {

CoefficientField cutoff_coefficients(const CoefficientField& coeffs, double R_cut) {
    if (!(R_cut >= 1.0)) throw invalid_input("cutoff_coefficients: R_cut must be >= 1");
    CoefficientField out = coeffs;
    out.cutoff_applied = true;
    out.r_cut = R_cut;
    const PhaseGrid& g = coeffs.grid;
    const int nv = g.n_v;
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs)
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const std::int64_t p = g.index(xs, g.v_index(a, b, c));
                    const double chi = chi_unit(g.v_at(a, b, c).norm() / R_cut);
                    for (int s = 0; s < 6; ++s) {
                        const double id = (s == 0 || s == 3 || s == 5) ? 1.0 : 0.0;
                        out.a[s][p] = chi * coeffs.a[s][p] + (1.0 - chi) * id;
                    }
                }
    return out;
}

SymMat3 spd_sqrt(const SymMat3& M, double eps) {
    if (eps < 0.0) throw invalid_input("spd_sqrt: eps must be >= 0");
    std::array<double, 3> w;
    std::array<Vec3, 3> q;
    sym3_eigendecompose(M, w, q);
    const double scale = std::max({std::fabs(w[0]), std::fabs(w[2]), 1e-300});
    for (double& wi : w) {
        if (wi + eps < -1e-12 * scale)
            throw invalid_input("spd_sqrt: eigenvalue below tolerance, matrix not PSD");
        wi = std::sqrt(std::max(wi + eps, 0.0));
    }
    SymMat3 s = SymMat3::zero();
    for (int k = 0; k < 3; ++k)
        for (int i = 0; i < 3; ++i)
            for (int j = i; j < 3; ++j) s.at(i, j) += w[k] * q[k][i] * q[k][j];

    // Contract check: sigma sigma = M + eps I to 1e-10 relative.
    SymMat3 ss = SymMat3::zero();
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += s(i, k) * s(k, j);
            ss.at(i, j) = acc;
        }
    SymMat3 target = M;
    for (int d : {0, 3, 5}) target.m[d] += eps;
    double diff = 0.0;
    for (int k = 0; k < 6; ++k) diff = std::max(diff, std::fabs(ss.m[k] - target.m[k]));
    if (diff > 1e-10 * std::max(target.frob_norm(), 1e-300))
        throw solver_failure("spd_sqrt: reconstruction tolerance exceeded");
    return s;
}

void CoeffTrajectory::eval(double tau, const Vec3& x, const Vec3& v, SymMat3& a_R,
                           double& cbar) const {
    const PhaseGrid& g = snaps.front()->grid;
    const double chi = chi_unit(v.norm() / R_cut);
    const bool inside = std::fabs(v.x) <= g.V_max && std::fabs(v.y) <= g.V_max &&
                        std::fabs(v.z) <= g.V_max;

    if (!inside || chi == 0.0) {
        a_R = SymMat3::identity();
        cbar = 0.0;
        return;
    }

    // Bracket tau in the snapshot times (clamped).
    std::size_t i1 = 0;
    double wt = 0.0;
    if (tau <= times.front()) {
        i1 = 0;
    } else if (tau >= times.back()) {
        i1 = times.size() - 1;
    } else {
        while (i1 + 1 < times.size() && times[i1 + 1] <= tau) ++i1;
        if (i1 + 1 < times.size()) wt = (tau - times[i1]) / (times[i1 + 1] - times[i1]);
    }

    DistributionField probe;
    probe.grid = g;
    auto interp = [&](const std::vector<double>& c0, const std::vector<double>& c1) {
        probe.values.assign(c0.begin(), c0.end());
        const double v0 = interpolate(probe, x, v);
        if (wt == 0.0) return v0;
        probe.values.assign(c1.begin(), c1.end());
        return (1.0 - wt) * v0 + wt * interpolate(probe, x, v);
    };

    const CoefficientField& s0 = *snaps[i1];
    const CoefficientField& s1 = *snaps[std::min(i1 + 1, snaps.size() - 1)];
    SymMat3 araw;
    for (int s = 0; s < 6; ++s) araw.m[s] = interp(s0.a[s], s1.a[s]);
    cbar = std::max(0.0, interp(s0.c, s1.c));
    for (int s = 0; s < 6; ++s) {
        const double id = (s == 0 || s == 3 || s == 5) ? 1.0 : 0.0;
        a_R.m[s] = chi * araw.m[s] + (1.0 - chi) * id;
    }
}

CoeffTrajectory make_coeff_trajectory(std::vector<double> times,
                                      std::vector<std::shared_ptr<const CoefficientField>> snaps,
                                      double R_cut, double eps) {
    if (times.empty() || times.size() != snaps.size())
        throw invalid_input("make_coeff_trajectory: times/snapshots mismatch");
    if (!(eps > 0.0)) throw invalid_input("make_coeff_trajectory: eps must be positive");
    if (!(R_cut >= 1.0)) throw invalid_input("make_coeff_trajectory: R_cut must be >= 1");
    const PhaseGrid& g = snaps.front()->grid;
    if (2.0 * R_cut > g.V_max * (1.0 + 1e-12))
        throw invalid_input("make_coeff_trajectory: need 2 R_cut <= V_max so the cutoff "
                            "completes inside the grid");
    CoeffTrajectory tr;
    tr.times = std::move(times);
    tr.snaps = std::move(snaps);
    tr.R_cut = R_cut;
    tr.eps = eps;
    return tr;
}

ParticleEnsemble simulate(const Vec3& x, const Vec3& v, double t, const CoeffTrajectory& coeffs,
                          const SdeConfig& cfg) {
    // eps > 0 is enforced on the production path (config and trajectory
    // construction); eps == 0 is admitted here for degenerate benchmarks.
    if (cfg.eps < 0.0) throw invalid_input("simulate: eps must be >= 0");
    if (!(cfg.ds > 0.0)) throw invalid_input("simulate: ds must be positive");
    if (cfg.n_paths <= 0) throw invalid_input("simulate: n_paths must be positive");
    if (!(t > 0.0)) throw invalid_input("simulate: horizon must be positive");

    const PhaseGrid& g = coeffs.snaps.front()->grid;
    const int n_steps = std::max<int>(1, static_cast<int>(std::ceil(t / cfg.ds - 1e-12)));

    ParticleEnsemble ens;
    ens.t = t;
    ens.n_paths = cfg.n_paths;
    ens.X.assign(cfg.n_paths, Vec3{});
    ens.V.assign(cfg.n_paths, Vec3{});
    ens.W_c.assign(cfg.n_paths, 0.0);
    ens.alive.assign(cfg.n_paths, 1);
    ens.max_speed.assign(cfg.n_paths, 0.0);

    parallel_for(cfg.n_paths, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            const std::uint64_t stream = cfg.antithetic ? static_cast<std::uint64_t>(p >> 1)
                                                        : static_cast<std::uint64_t>(p);
            const double sign = (cfg.antithetic && (p & 1)) ? -1.0 : 1.0;
            Vec3 X = x, V = v;
            double Wc = 0.0, vmax = v.norm();
            bool ok = true;
            double s = 0.0;
            for (int k = 0; k < n_steps; ++k) {
                const double hstep = std::min(cfg.ds, t - s);
                const double tau = t - s; // time-reversed coefficients
                SymMat3 aR;
                double cb;
                coeffs.eval(tau, X, V, aR, cb);
                SymMat3 sig;
                try {
                    sig = spd_sqrt(aR, cfg.eps);
                } catch (const std::exception&) {
                    ok = false;
                    break;
                }
                double xi[3];
                philox_normal3(cfg.seed, stream, static_cast<std::uint64_t>(k), xi);
                const Vec3 noise{sign * xi[0], sign * xi[1], sign * xi[2]};
                const double sq = std::sqrt(hstep);
                V += sig.mul(noise) * sq;
                X = X - V * hstep;
                Wc += cb * hstep;
                if (!std::isfinite(V.norm2()) || !std::isfinite(X.norm2()) ||
                    !std::isfinite(Wc)) {
                    ok = false;
                    break;
                }
                vmax = std::max(vmax, V.norm());
                s += hstep;
            }
            // Wrap X periodically for storage (interpolation wraps anyway).
            if (g.d_x >= 1 && ok)
                for (int d = 0; d < g.d_x; ++d) X[d] -= g.L * std::floor(X[d] / g.L);
            ens.X[p] = X;
            ens.V[p] = V;
            ens.W_c[p] = Wc;
            ens.alive[p] = ok ? 1 : 0;
            ens.max_speed[p] = vmax;
        }
    });
    return ens;
}

FkEstimate feynman_kac(const ParticleEnsemble& ensemble, const DistributionField& f_in,
                       bool drop_exponent, bool antithetic) {
    if (ensemble.n_paths == 0) throw invalid_input("feynman_kac: empty ensemble");

    std::vector<double> vals;
    vals.reserve(ensemble.n_paths);
    std::int64_t hits = 0;
    for (std::int64_t p = 0; p < ensemble.n_paths; ++p) {
        if (!ensemble.alive[p]) continue;
        const double fv = interpolate(f_in, ensemble.X[p], ensemble.V[p]);
        if (fv > 0.0) ++hits;
        vals.push_back(drop_exponent ? fv : std::exp(ensemble.W_c[p]) * fv);
    }
    if (vals.empty()) throw invalid_input("feynman_kac: no live paths");

    // With antithetic pairing, average pairs first.
    std::vector<double> samples;
    if (antithetic && vals.size() % 2 == 0) {
        samples.reserve(vals.size() / 2);
        for (std::size_t i = 0; i + 1 < vals.size(); i += 2)
            samples.push_back(0.5 * (vals[i] + vals[i + 1]));
    } else {
        samples = std::move(vals);
    }

    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= samples.size();
    double var = 0.0;
    for (double v : samples) var += (v - mean) * (v - mean);
    var = samples.size() > 1 ? var / (samples.size() - 1.0) : 0.0;

    FkEstimate est;
    est.estimate = mean;
    est.std_error = std::sqrt(var / samples.size());
    est.hits = hits;
    est.n_paths = static_cast<std::int64_t>(samples.size());
    return est;
}

std::vector<SpreadRow> core_spreading_experiment(const CorePrior& core,
                                                 const std::vector<Probe>& probes,
                                                 const CoeffTrajectory& coeffs,
                                                 const DistributionField& f_in,
                                                 const SdeConfig& cfg) {
    if (!(core.r0 > 0.0) || !(core.delta0 > 0.0))
        throw invalid_input("core_spreading_experiment: core radius and height must be positive");
    std::vector<SpreadRow> rows;
    rows.reserve(probes.size());
    for (const Probe& pr : probes) {
        ParticleEnsemble ens = simulate(pr.x, pr.v, pr.t, coeffs, cfg);
        FkEstimate est = feynman_kac(ens, f_in, /*drop_exponent=*/true, cfg.antithetic);
        SpreadRow row;
        row.probe = pr;
        row.estimate = est.estimate;
        row.std_error = est.std_error;
        row.hits = est.hits;
        row.n_paths = est.n_paths;
        row.inconclusive = est.hits == 0;
        rows.push_back(row);
    }
    return rows;
}

void write_lowerbound_csv(const std::vector<SpreadRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_lowerbound_csv: cannot open " + path);
    out << "t,x1,x2,x3,v1,v2,v3,estimate,std_error,hits,n_paths\r\n";
    char buf[512];
    for (const SpreadRow& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld,%lld\r\n",
                      r.probe.t, r.probe.x.x, r.probe.x.y, r.probe.x.z, r.probe.v.x, r.probe.v.y,
                      r.probe.v.z, r.estimate, r.std_error, static_cast<long long>(r.hits),
                      static_cast<long long>(r.n_paths));
        out << buf;
    }
}

} // namespace landau
