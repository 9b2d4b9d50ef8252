#include "landau/frame.hpp"

#include <cmath>

namespace landau {

GaussianWeight make_weight(double rho0, double kappa) {
    if (!(rho0 > 0.0) || !(kappa > 0.0))
        throw invalid_input("make_weight: rho0 and kappa must be positive");
    return GaussianWeight{rho0, kappa};
}

namespace {
void check_time(const GaussianWeight& w, double t, const char* who) {
    if (t < 0.0 || t > w.T_max() * (1.0 + 1e-12))
        throw invalid_input(std::string(who) + ": t outside [0, T_max]");
}
} // namespace

double weight(const GaussianWeight& w, double t, const Vec3& v) {
    check_time(w, t, "weight");
    return std::exp(-w.rate(t) * bracket2(v));
}

DistributionField to_frame(const DistributionField& f, const GaussianWeight& w, double t) {
    check_time(w, t, "to_frame");
    if (f.frame != Frame::Physical) throw invalid_input("to_frame: field is already framed");
    DistributionField g = f;
    g.frame = Frame::Framed;
    g.rho0 = w.rho0;
    g.kappa = w.kappa;
    g.t = t;
    const PhaseGrid& gr = f.grid;
    const int nv = gr.n_v;
    const std::int64_t nsp = gr.spatial_count();
    std::vector<double> inv_mu(gr.velocity_count());
    for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
            for (int c = 0; c < nv; ++c)
                inv_mu[gr.v_index(a, b, c)] = std::exp(w.rate(t) * bracket2(gr.v_at(a, b, c)));
    for (std::int64_t xs = 0; xs < nsp; ++xs)
        for (std::int64_t vv = 0; vv < gr.velocity_count(); ++vv)
            g.at(xs, vv) = f.at(xs, vv) * inv_mu[vv];
    return g;
}

DistributionField from_frame(const DistributionField& g, const GaussianWeight& w, double t) {
    check_time(w, t, "from_frame");
    if (g.frame != Frame::Framed) throw invalid_input("from_frame: field is not framed");
    DistributionField f = g;
    f.frame = Frame::Physical;
    f.rho0 = 0.0;
    f.kappa = 0.0;
    f.t = t;
    const PhaseGrid& gr = g.grid;
    const int nv = gr.n_v;
    const std::int64_t nsp = gr.spatial_count();
    std::vector<double> mu(gr.velocity_count());
    for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
            for (int c = 0; c < nv; ++c)
                mu[gr.v_index(a, b, c)] = std::exp(-w.rate(t) * bracket2(gr.v_at(a, b, c)));
    for (std::int64_t xs = 0; xs < nsp; ++xs)
        for (std::int64_t vv = 0; vv < gr.velocity_count(); ++vv)
            f.at(xs, vv) = g.at(xs, vv) * mu[vv];
    return f;
}

FramedCoefficients frame_coefficients(const CoefficientField& coeffs, const GaussianWeight& w,
                                      double t) {
    check_time(w, t, "frame_coefficients");
    const PhaseGrid& gr = coeffs.grid;
    const double rho = w.rate(t);

    FramedCoefficients fc;
    fc.grid = gr;
    fc.t = t;
    fc.gamma = coeffs.gamma;
    fc.A = coeffs.a;
    for (auto& ch : fc.B) ch.assign(gr.phase_count(), 0.0);
    fc.C.assign(gr.phase_count(), 0.0);
    fc.source = std::make_shared<CoefficientField>(coeffs);

    const int nv = gr.n_v;
    const std::int64_t nsp = gr.spatial_count();
    parallel_for(nsp, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t xs = lo; xs < hi; ++xs) {
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < nv; ++c) {
                        const std::int64_t vv = gr.v_index(a, b, c);
                        const std::int64_t p = gr.index(xs, vv);
                        const Vec3 v = gr.v_at(a, b, c);
                        const SymMat3 av = coeffs.a_at(xs, vv);
                        const Vec3 grad_mu_over_mu = v * (-2.0 * rho);
                        const Vec3 Bv = av.mul(grad_mu_over_mu) * 2.0;
                        fc.B[0][p] = Bv.x;
                        fc.B[1][p] = Bv.y;
                        fc.B[2][p] = Bv.z;
                        // abar_ij (d2 mu / mu)_ij = -2 rho tr(abar) + 4 rho^2 v.abar v
                        fc.C[p] = coeffs.c[p] - 2.0 * rho * av.trace() +
                                  4.0 * rho * rho * av.quad(v);
                    }
        }
    });
    return fc;
}

FramedCoefficients coefficients_of_iterate(const DistributionField& g_framed,
                                           const GaussianWeight& w, double t,
                                           const KernelStencil& st) {
    if (g_framed.frame != Frame::Framed)
        throw invalid_input("coefficients_of_iterate: expected a framed field");
    DistributionField f = from_frame(g_framed, w, t);
    CoefficientField coeffs = compute_coefficients(f, st);
    return frame_coefficients(coeffs, w, t);
}

} // namespace landau
