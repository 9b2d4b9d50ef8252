#include "landau/picard.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace landau {

double y0_distance(const Trajectory& a, const Trajectory& b) {
    if (a.fields.size() != b.fields.size())
        throw invalid_input("y0_distance: trajectories must share step times");
    double sup_h00 = 0.0, int_h01 = 0.0, prev_h01 = 0.0;
    for (std::size_t i = 0; i < a.fields.size(); ++i) {
        DistributionField diff = a.fields[i];
        for (std::size_t k = 0; k < diff.values.size(); ++k)
            diff.values[k] -= b.fields[i].values[k];
        const double h00 = ul_norm(diff, 0, 0).value_Hkl;
        const double h01 = ul_norm(diff, 0, 1).value_Hkl;
        sup_h00 = std::max(sup_h00, h00);
        if (i > 0) int_h01 += 0.5 * (prev_h01 + h01) * (a.times[i] - a.times[i - 1]);
        prev_h01 = h01;
    }
    return std::sqrt(sup_h00) + std::sqrt(int_h01);
}

namespace {

// Constant-in-time trajectory sampled on the step grid of the window.
Trajectory constant_trajectory(const DistributionField& g, double t0, double T, double dt) {
    const int n = std::max(1, static_cast<int>(std::ceil(T / dt - 1e-9)));
    const double dte = T / n;
    Trajectory tr;
    for (int k = 0; k <= n; ++k) {
        tr.times.push_back(t0 + k * dte);
        tr.fields.push_back(g);
        tr.fields.back().t = tr.times.back();
    }
    return tr;
}

double field_scale(const DistributionField& f) {
    return std::sqrt(ul_norm(f, 0, 0).value_Hkl);
}

} // namespace

PicardWindowResult picard_window(const DistributionField& g_start, const GaussianWeight& w,
                                 double t0, double T_window, const PicardConfig& cfg,
                                 const KernelStencil& st) {
    if (g_start.frame != Frame::Framed)
        throw invalid_input("picard_window: g_start must be framed");
    if (t0 + T_window > w.T_max() * (1.0 + 1e-12))
        throw invalid_input("picard_window: window exceeds the frame horizon T_max");

    PicardWindowResult res;
    double Twin = T_window;
    const double scale0 = field_scale(g_start);

    while (Twin >= cfg.step.dt * (1.0 - 1e-12)) {
        Trajectory prev = constant_trajectory(g_start, t0, Twin, cfg.step.dt);
        std::vector<double> dists, ratios;
        LinearSolveResult last;
        bool accepted = false;

        for (int n = 1; n <= cfg.max_outer; ++n) {
            last = solve_linearized(g_start, prev, t0, Twin, cfg.step, w, st);
            const double dist = y0_distance(last.G, prev);
            dists.push_back(dist);

            // Fixed point reached to rounding (e.g. g == 0).
            if (dist <= 1e-13 * std::max(scale0, 1e-300)) {
                accepted = true;
            } else if (dists.size() >= 2) {
                const double prev_dist = dists[dists.size() - 2];
                ratios.push_back(prev_dist > 0.0 ? dist / prev_dist : 0.0);
                const std::size_t m = ratios.size();
                if (m >= 2 && ratios[m - 1] <= cfg.contraction_tol &&
                    ratios[m - 2] <= cfg.contraction_tol)
                    accepted = true;
            }
            prev = last.G;
            if (accepted) {
                res.converged = true;
                res.achieved_T = Twin;
                res.g = std::move(last.G);
                res.ratios = ratios;
                res.distances = dists;
                res.norms = last.norms;
                res.clamp_mass = last.clamp_mass_total;
                res.outer_iterations = n;
                return res;
            }
        }
        Twin *= cfg.window_shrink;
    }

    res.converged = false;
    res.achieved_T = 0.0;
    return res;
}

namespace {

double max_weighted(const DistributionField& f, double rho) {
    const PhaseGrid& g = f.grid;
    double m = 0.0;
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs)
        for (int a = 0; a < g.n_v; ++a)
            for (int b = 0; b < g.n_v; ++b)
                for (int c = 0; c < g.n_v; ++c)
                    m = std::max(m, f.at(xs, g.v_index(a, b, c)) *
                                        std::exp(rho * bracket2(g.v_at(a, b, c))));
    return m;
}

MomentRow moment_row(const DistributionField& f, double p_exp) {
    const MomentField mom = moments(f, p_exp);
    MomentRow row;
    row.t = f.t;
    row.mass = mom.total_M();
    row.energy = mom.total_E();
    row.entropy = mom.total_H();
    row.momentum = mom.total_momentum();
    row.sup_ME = mom.sup_ME();
    row.sup_P = mom.sup_P();
    row.sup_Finf = mom.sup_Finf();
    return row;
}

} // namespace

SolveResult solve_landau(const DistributionField& f_in, double gamma, double rho0,
                         double T_target, const PicardConfig& cfg, const KernelStencil& st) {
    if (f_in.frame != Frame::Physical)
        throw invalid_input("solve_landau: f_in must be physical");
    if (!(rho0 > 0.0) || !(T_target > 0.0))
        throw invalid_input("solve_landau: rho0 and T_target must be positive");
    if (f_in.min_value() < 0.0) throw invalid_input("solve_landau: f_in must be nonnegative");

    // Gaussian-decay hypothesis, checked numerically.
    const double m0_weighted = max_weighted(f_in, rho0);
    if (!std::isfinite(m0_weighted))
        throw invalid_input("solve_landau: exp(rho0 <v>^2) f_in overflows on the grid");

    const double p_exp = cfg.p_exponent > 0.0 ? cfg.p_exponent
                                              : p_exponent_threshold(gamma) + 0.5;

    SolveResult res;
    DistributionField f = f_in;
    f.gamma = gamma;
    f.t = 0.0;

    res.f.times.push_back(0.0);
    res.f.fields.push_back(f);
    res.moments.push_back(moment_row(f, p_exp));

    double rho = rho0;
    double t = 0.0;
    double next_save = cfg.save_every;
    double window_hint = cfg.window_initial;

    while (t < T_target - 1e-12) {
        const double remaining = T_target - t;
        const double kappa = cfg.kappa > 0.0 ? cfg.kappa : rho / (4.0 * T_target);
        const GaussianWeight w = make_weight(rho, kappa);
        double request = window_hint > 0.0 ? window_hint : std::min(remaining, 0.5 * w.T_max());
        request = std::min({request, remaining, w.T_max()});

        DistributionField g = to_frame(f, w, 0.0);
        PicardWindowResult win = picard_window(g, w, 0.0, request, cfg, st);
        if (!win.converged) {
            res.status = SolveStatus::WindowCollapse;
            res.message = "picard window collapsed below one step at t = " + std::to_string(t);
            res.achieved_T = t;
            return res;
        }
        res.rho_history.push_back(rho);
        for (double r : win.ratios) res.contraction_log.push_back(r);
        res.clamp_mass_total += win.clamp_mass;

        // Walk the window trajectory, converting snapshots to the physical frame.
        for (std::size_t i = 1; i < win.g.fields.size(); ++i) {
            const double t_abs = t + win.g.times[i];
            if (t_abs >= next_save - 1e-12 || i + 1 == win.g.fields.size()) {
                DistributionField snap = from_frame(win.g.fields[i], w, win.g.times[i]);
                snap.t = t_abs;
                snap.gamma = gamma;
                res.f.times.push_back(t_abs);
                res.f.fields.push_back(snap);
                res.moments.push_back(moment_row(snap, p_exp));
                while (next_save <= t_abs + 1e-12) next_save += cfg.save_every;

                if (cfg.monitor.me_max > 0.0) {
                    const MomentField mom = moments(snap, p_exp);
                    const MonitorStatus ms = continuation_monitor(mom, gamma, cfg.monitor);
                    if (ms.breach) {
                        res.status = SolveStatus::MonitorBreach;
                        res.message = "continuation monitor breach (" + ms.quantity +
                                      ") at t = " + std::to_string(t_abs);
                        res.achieved_T = t_abs;
                        return res;
                    }
                }
            }
        }

        f = from_frame(win.g.fields.back(), w, win.g.times.back());
        t += win.achieved_T;
        f.t = t;
        f.gamma = gamma;

        // Re-base the frame: the largest rho (as a fraction of the current one)
        // keeping the weighted sup within 1e3 of the initial analog.
        double rho_new = rho * cfg.rho_rebase_floor;
        for (double frac = 1.0; frac >= cfg.rho_rebase_floor - 1e-12; frac -= 0.05) {
            const double cand = rho * frac;
            const double mw = max_weighted(f, cand);
            if (std::isfinite(mw) && mw <= 1e3 * m0_weighted) {
                rho_new = cand;
                break;
            }
        }
        rho = rho_new;

        // Grow the next request toward the initial hint after a successful window.
        window_hint = win.achieved_T < request ? win.achieved_T : std::min(remaining, request * 2.0);
    }

    res.status = SolveStatus::Converged;
    res.achieved_T = t;
    res.message = "converged";
    return res;
}

void write_moments_csv(const std::vector<MomentRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_moments_csv: cannot open " + path);
    out << "t,mass,energy,entropy,momentum_x,momentum_y,momentum_z,sup_ME,sup_P,sup_Finf\r\n";
    char buf[512];
    for (const MomentRow& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\r\n", r.t,
                      r.mass, r.energy, r.entropy, r.momentum.x, r.momentum.y, r.momentum.z,
                      r.sup_ME, r.sup_P, r.sup_Finf);
        out << buf;
    }
}

} // namespace landau
