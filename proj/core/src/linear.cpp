#include "landau/linear.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <mutex>

#include <fftw3.h>

namespace landau {

namespace {

// ---------------------------------------------------------------------------
// 1-D FFT (FFTW, serial, cached plans per length)
// ---------------------------------------------------------------------------

std::mutex& plan_mutex() {
    static std::mutex mu;
    return mu;
}

struct Fft1 {
    int n = 0;
    fftw_plan fwd = nullptr, bwd = nullptr;
    explicit Fft1(int n_) : n(n_) {
        std::lock_guard<std::mutex> lock(plan_mutex());
        fftw_complex* tmp = fftw_alloc_complex(n);
        fwd = fftw_plan_dft_1d(n, tmp, tmp, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        bwd = fftw_plan_dft_1d(n, tmp, tmp, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
        fftw_free(tmp);
    }
    ~Fft1() {
        std::lock_guard<std::mutex> lock(plan_mutex());
        if (fwd) fftw_destroy_plan(fwd);
        if (bwd) fftw_destroy_plan(bwd);
    }
    void forward(std::complex<double>* d) const {
        fftw_execute_dft(fwd, reinterpret_cast<fftw_complex*>(d),
                         reinterpret_cast<fftw_complex*>(d));
    }
    void backward(std::complex<double>* d) const {
        fftw_execute_dft(bwd, reinterpret_cast<fftw_complex*>(d),
                         reinterpret_cast<fftw_complex*>(d));
    }
};

const Fft1& cached_fft1(int n) {
    static std::mutex mu;
    static std::vector<std::unique_ptr<Fft1>> cache;
    std::lock_guard<std::mutex> lock(mu);
    for (auto& p : cache)
        if (p->n == n) return *p;
    cache.push_back(std::make_unique<Fft1>(n));
    return *cache.back();
}

// Spectral periodic shift x -> x - delta along one axis, with optional
// viscous damping exp(-eps k^2 tau). Exact for grid-aligned shifts.
void spectral_shift_line(std::complex<double>* line, int n, double L, double delta,
                         double eps_tau, const Fft1& fft) {
    fft.forward(line);
    for (int j = 0; j < n; ++j) {
        const int k = j <= n / 2 ? j : j - n;
        const double kt = 2.0 * M_PI * k / L;
        const double damp = eps_tau > 0.0 ? std::exp(-eps_tau * kt * kt) : 1.0;
        std::complex<double> factor;
        if (2 * j == n) {
            factor = std::complex<double>(std::cos(kt * delta) * damp, 0.0); // Nyquist stays real
        } else {
            factor = std::polar(damp, -kt * delta);
        }
        line[j] *= factor;
    }
    fft.backward(line);
    const double inv = 1.0 / n;
    for (int j = 0; j < n; ++j) line[j] *= inv;
}

// Transport substep: f(x, v) <- f(x - v tau, v), axis by axis.
void transport(DistributionField& f, double tau, double eps) {
    const PhaseGrid& g = f.grid;
    if (g.d_x == 0 || tau == 0.0) return;
    const int nx = g.n_x;
    const std::int64_t nvel = g.velocity_count();
    const Fft1& fft = cached_fft1(nx);
    const double eps_tau = eps * tau;

    for (int axis = 0; axis < g.d_x; ++axis) {
        // Lines along `axis`: index by remaining spatial axes x velocity node.
        const std::int64_t other = g.spatial_count() / nx;
        parallel_for(other * nvel, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<std::complex<double>> line(nx);
            for (std::int64_t w = lo; w < hi; ++w) {
                const std::int64_t vv = w % nvel;
                const std::int64_t rest = w / nvel;

                // Velocity component along this axis decides the shift.
                const int iv0 = static_cast<int>(vv / (static_cast<std::int64_t>(g.n_v) * g.n_v));
                const int iv1 = static_cast<int>((vv / g.n_v) % g.n_v);
                const int iv2 = static_cast<int>(vv % g.n_v);
                const double vd = g.v_at(iv0, iv1, iv2)[axis];
                const double delta = vd * tau;

                // Spatial stride of the line.
                std::int64_t base_xs = 0, stride_xs = 0;
                if (g.d_x == 1) {
                    base_xs = 0;
                    stride_xs = 1;
                } else {
                    // d_x == 3: xs = (i n_x + j) n_x + k
                    const std::int64_t r0 = rest / nx, r1 = rest % nx;
                    if (axis == 0) {
                        base_xs = r0 * nx + r1;
                        stride_xs = static_cast<std::int64_t>(nx) * nx;
                    } else if (axis == 1) {
                        base_xs = r0 * nx * nx + r1;
                        stride_xs = nx;
                    } else {
                        base_xs = (r0 * nx + r1) * nx;
                        stride_xs = 1;
                    }
                }
                for (int i = 0; i < nx; ++i)
                    line[i] = f.values[g.index(base_xs + i * stride_xs, vv)];
                spectral_shift_line(line.data(), nx, g.L, delta, eps_tau, fft);
                for (int i = 0; i < nx; ++i)
                    f.values[g.index(base_xs + i * stride_xs, vv)] = line[i].real();
            }
        });
    }
}

// ---------------------------------------------------------------------------
// Velocity substep operators (per spatial node, matrix-free)
// ---------------------------------------------------------------------------

struct NodeView {
    const double* A[6]; // framed A (or physical abar in flux mode)
    const double* Bv[3];
    const double* C = nullptr;
    const double* bb[3]; // flux drift bbar
    const double* kv2 = nullptr; // kappa <v>^2 per velocity node (generic mode)
    int nv = 0;
    double h = 0.0;
    double eps = 0.0;
    bool flux_mode = false;
    // Flux (conservative) mode: the unknown is the framed g with f = mu g;
    // mu is evaluated analytically at faces from (rho, V_max).
    double rho = 0.0;   // frame decay rate at the implicit time level
    double V_max = 0.0; // to map indices to velocity coordinates
    const double* mu_diag = nullptr; // mu at the cell centers (implicit level)
};

inline std::int64_t vidx(int nv, int a, int b, int c) {
    return (static_cast<std::int64_t>(a) * nv + b) * nv + c;
}

// Enumerates the entries of the spatial operator L acting on the velocity cube
// for row (a,b,c); emit(q, coef) may be called repeatedly for the same q.
template <typename Emit>
inline void enum_row_generic(const NodeView& nd, int a, int b, int c, Emit&& emit) {
    const int nv = nd.nv;
    const double h = nd.h;
    const double invh2 = 1.0 / (h * h);
    const std::int64_t p = vidx(nv, a, b, c);
    const int id[3] = {a, b, c};

    static constexpr int aidx[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

    double diag = nd.C[p] - nd.kv2[p];
    for (int d = 0; d < 3; ++d) {
        const double add = nd.A[aidx[d][d]][p] + nd.eps;
        diag -= 2.0 * add * invh2;
        // diffusion neighbors
        if (id[d] + 1 < nv) {
            int q[3] = {a, b, c};
            q[d]++;
            emit(vidx(nv, q[0], q[1], q[2]), add * invh2);
        }
        if (id[d] - 1 >= 0) {
            int q[3] = {a, b, c};
            q[d]--;
            emit(vidx(nv, q[0], q[1], q[2]), add * invh2);
        }
        // upwinded drift: forward difference for B > 0, backward for B < 0
        const double Bd = nd.Bv[d][p];
        if (Bd > 0.0) {
            diag -= Bd / h;
            if (id[d] + 1 < nv) {
                int q[3] = {a, b, c};
                q[d]++;
                emit(vidx(nv, q[0], q[1], q[2]), Bd / h);
            }
        } else if (Bd < 0.0) {
            diag += Bd / h;
            if (id[d] - 1 >= 0) {
                int q[3] = {a, b, c};
                q[d]--;
                emit(vidx(nv, q[0], q[1], q[2]), -Bd / h);
            }
        }
    }
    // cross-diffusion terms, centered
    for (int d1 = 0; d1 < 3; ++d1)
        for (int d2 = d1 + 1; d2 < 3; ++d2) {
            const double coef = nd.A[aidx[d1][d2]][p] * invh2 * 0.5;
            if (coef == 0.0) continue;
            for (int s1 = -1; s1 <= 1; s1 += 2)
                for (int s2 = -1; s2 <= 1; s2 += 2) {
                    int q[3] = {a, b, c};
                    q[d1] += s1;
                    q[d2] += s2;
                    if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= nv || q[1] >= nv ||
                        q[2] >= nv)
                        continue;
                    emit(vidx(nv, q[0], q[1], q[2]), s1 * s2 * coef);
                }
        }
    emit(p, diag);
}

// Bernoulli function x / (e^x - 1) used by the exponential-fitted flux.
inline double bernoulli_fn(double x) {
    if (std::fabs(x) < 1e-5) return 1.0 - 0.5 * x + x * x / 12.0;
    if (x > 500.0) return 0.0;
    return x / std::expm1(x);
}

// Divergence (flux) form on f = mu g with g as the unknown:
//   L~ g = (1/h) sum_j [Phi_j(p, p+e_j) - Phi_j(p-e_j, p)],
//   Phi_j(face) = mu_face [ a^f_jj SG(g_r, g_s; xi) + cross - Bt_j g_face ],
// where Bt = bbar + 2 rho abar v is the drift seen by g (the Gaussian factor
// of the frame absorbed analytically into mu_face = mu(v_face)), SG is the
// exponential-fitted two-point formula
//   a_jj SG = (a^f_jj/h) [B(xi) g_s - B(-xi) g_r],  xi = Bt_j h / a^f_jj,
// and the cross terms are centered on g:
//   cross = sum_{i != j} a^f_ij (g_{r+e_i}-g_{r-e_i}+g_{s+e_i}-g_{s-e_i})/(4h).
// g varies slowly where f is Gaussian-decaying, so the truncation constants
// stay small out to the cube corners. Faces on the boundary carry zero flux,
// making the total mass sum_p mu_p g_p an exact invariant of L~.
template <typename Emit>
inline void enum_row_flux(const NodeView& nd, int a, int b, int c, Emit&& emit) {
    const int nv = nd.nv;
    const double h = nd.h;
    static constexpr int aidx[3][3] = {{0, 1, 2}, {1, 3, 4}, {2, 4, 5}};

    const int id[3] = {a, b, c};
    for (int j = 0; j < 3; ++j) {
        for (int side = 0; side < 2; ++side) { // 0: face (p, p+e_j), 1: face (p-e_j, p)
            int r[3] = {a, b, c};
            if (side == 1) r[j]--;
            int s[3] = {r[0], r[1], r[2]};
            s[j]++;
            if (r[j] < 0 || s[j] >= nv) continue; // boundary face: no flux
            const double orient = (side == 0 ? 1.0 : -1.0) / h;

            const std::int64_t pr = vidx(nv, r[0], r[1], r[2]);
            const std::int64_t ps = vidx(nv, s[0], s[1], s[2]);
            const double ajj = 0.5 * (nd.A[aidx[j][j]][pr] + nd.A[aidx[j][j]][ps]);

            // Face center coordinates and the analytic Gaussian weight there.
            Vec3 vf{-nd.V_max + (r[0] + 0.5) * h, -nd.V_max + (r[1] + 0.5) * h,
                    -nd.V_max + (r[2] + 0.5) * h};
            vf[j] += 0.5 * h;
            const double mu_face = std::exp(-nd.rho * bracket2(vf));

            // Drift of g: Bt_j = bbar_j + 2 rho (abar v)_j at the face.
            double av_j = 0.0;
            for (int i = 0; i < 3; ++i)
                av_j += 0.5 * (nd.A[aidx[i][j]][pr] + nd.A[aidx[i][j]][ps]) * vf[i];
            const double bt = 0.5 * (nd.bb[j][pr] + nd.bb[j][ps]) + 2.0 * nd.rho * av_j;

            const double w_face = orient * mu_face;
            if (ajj > 1e-14 * std::fabs(bt) * h && ajj > 0.0) {
                const double xi = bt * h / ajj;
                emit(ps, w_face * (ajj / h) * bernoulli_fn(xi));
                emit(pr, w_face * (-(ajj / h) * bernoulli_fn(-xi)));
            } else {
                // Degenerate diffusion: the exact two-point flux is -Bt g from
                // the side the exponential solution weights.
                if (bt > 0.0)
                    emit(pr, w_face * (-bt));
                else
                    emit(ps, w_face * (-bt));
            }

            for (int i = 0; i < 3; ++i) {
                if (i == j) continue;
                const double aij = 0.5 * (nd.A[aidx[i][j]][pr] + nd.A[aidx[i][j]][ps]);
                if (aij == 0.0) continue;
                const double cc = w_face * aij / (4.0 * h);
                int q[3];
                auto try_emit = [&](const int* base, int di, double w) {
                    q[0] = base[0];
                    q[1] = base[1];
                    q[2] = base[2];
                    q[i] += di;
                    if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= nv || q[1] >= nv ||
                        q[2] >= nv)
                        return;
                    emit(vidx(nv, q[0], q[1], q[2]), w);
                };
                try_emit(r, +1, cc);
                try_emit(r, -1, -cc);
                try_emit(s, +1, cc);
                try_emit(s, -1, -cc);
            }
        }
    }
    (void)id;
}

struct VelocitySolve {
    NodeView nd;
    double theta = 1.0;
    double dt = 0.0;

    template <typename Emit>
    void enum_row(int a, int b, int c, Emit&& emit) const {
        if (nd.flux_mode)
            enum_row_flux(nd, a, b, c, emit);
        else
            enum_row_generic(nd, a, b, c, emit);
    }

    double mass_diag(std::int64_t p) const {
        return nd.flux_mode && nd.mu_diag ? nd.mu_diag[p] : 1.0;
    }

    // y = D u - theta dt L u with D = diag(mu) in flux mode, identity otherwise
    void apply(const std::vector<double>& u, std::vector<double>& y) const {
        const int nv = nd.nv;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const std::int64_t p = vidx(nv, a, b, c);
                    double acc = 0.0;
                    enum_row(a, b, c, [&](std::int64_t q, double coef) { acc += coef * u[q]; });
                    y[p] = mass_diag(p) * u[p] - theta * dt * acc;
                }
    }

    // y = (D - theta dt L)^T u
    void apply_transpose(const std::vector<double>& u, std::vector<double>& y) const {
        const int nv = nd.nv;
        std::fill(y.begin(), y.end(), 0.0);
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const std::int64_t p = vidx(nv, a, b, c);
                    const double up = u[p];
                    y[p] += mass_diag(p) * up;
                    if (up == 0.0) continue;
                    enum_row(a, b, c,
                             [&](std::int64_t q, double coef) { y[q] -= theta * dt * coef * up; });
                }
    }

    // y = D u + (1-theta) dt L u (the explicit side of the theta scheme)
    void explicit_rhs(const std::vector<double>& u, std::vector<double>& y) const {
        const int nv = nd.nv;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const std::int64_t p = vidx(nv, a, b, c);
                    double acc = 0.0;
                    if (theta < 1.0)
                        enum_row(a, b, c,
                                 [&](std::int64_t q, double coef) { acc += coef * u[q]; });
                    y[p] = mass_diag(p) * u[p] + (1.0 - theta) * dt * acc;
                }
    }

    double max_explicit_rate() const {
        const int nv = nd.nv;
        double worst = 0.0;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    double diag = 0.0;
                    enum_row(a, b, c, [&](std::int64_t q, double coef) {
                        if (q == vidx(nv, a, b, c)) diag += coef;
                    });
                    worst = std::max(worst, std::fabs(diag));
                }
        return worst;
    }

    // diag(D - theta dt L), for Jacobi scaling.
    void diagonal(std::vector<double>& d) const {
        const int nv = nd.nv;
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const std::int64_t p = vidx(nv, a, b, c);
                    double acc = 0.0;
                    enum_row(a, b, c, [&](std::int64_t q, double coef) {
                        if (q == p) acc += coef;
                    });
                    d[p] = mass_diag(p) - theta * dt * acc;
                    if (std::fabs(d[p]) < 1e-300) d[p] = 1.0;
                }
    }
};

// Jacobi-preconditioned CGNR: CG on the normal equations of M D^{-1} (right
// diagonal scaling), minimizing the true residual |M x - rhs|. Used as the
// fallback when BiCGStab stagnates.
int cgnr_solve(const VelocitySolve& op, const std::vector<double>& rhs, std::vector<double>& x,
               double tol, int max_iter) {
    const std::size_t n = rhs.size();
    std::vector<double> r(n), z(n), p(n), mp(n), diag(n), tmp(n);
    op.diagonal(diag);

    double bnorm = 0.0;
    for (double v : rhs) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return 0;
    }

    // Scaled system A y = rhs with A = M D^{-1}, x = D^{-1} y.
    auto apply_A = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) tmp[i] = v[i] / diag[i];
        op.apply(tmp, out);
    };
    auto apply_At = [&](const std::vector<double>& v, std::vector<double>& out) {
        op.apply_transpose(v, out);
        for (std::size_t i = 0; i < n; ++i) out[i] /= diag[i];
    };

    // Warm start y = D x0 with x0 = rhs (M is a perturbation of the identity).
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = rhs[i] * diag[i];
    apply_A(y, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - r[i];

    apply_At(r, z);
    p = z;
    double zz = 0.0;
    for (std::size_t i = 0; i < n; ++i) zz += z[i] * z[i];

    int used = max_iter;
    for (int it = 1; it <= max_iter; ++it) {
        double rn = 0.0;
        for (std::size_t i = 0; i < n; ++i) rn += r[i] * r[i];
        if (std::sqrt(rn) <= tol * bnorm) {
            used = it - 1;
            break;
        }
        apply_A(p, mp);
        double mp2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) mp2 += mp[i] * mp[i];
        if (mp2 == 0.0) break;
        const double alpha = zz / mp2;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] += alpha * p[i];
            r[i] -= alpha * mp[i];
        }
        apply_At(r, z);
        double zz_new = 0.0;
        for (std::size_t i = 0; i < n; ++i) zz_new += z[i] * z[i];
        const double beta = zz_new / zz;
        zz = zz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }

    for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / diag[i];
    double rn = 0.0;
    op.apply(x, r);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = rhs[i] - r[i];
        rn += d * d;
    }
    if (std::sqrt(rn) > tol * bnorm)
        throw solver_failure("velocity substep: CGNR failed to reach tolerance");
    return used;
}

// Right Jacobi-preconditioned BiCGStab on M x = rhs; falls back to CGNR on
// breakdown or stagnation. Returns iterations used.
int krylov_solve(const VelocitySolve& op, const std::vector<double>& rhs, std::vector<double>& x,
                 double tol, int max_iter) {
    const std::size_t n = rhs.size();
    std::vector<double> diag(n);
    op.diagonal(diag);

    double bnorm = 0.0;
    for (double v : rhs) bnorm += v * v;
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        return 0;
    }

    std::vector<double> tmp(n), y(n), r(n), rhat(n), p(n, 0.0), v(n, 0.0), s(n), t(n);
    auto apply_A = [&](const std::vector<double>& in, std::vector<double>& out) {
        for (std::size_t i = 0; i < n; ++i) tmp[i] = in[i] / diag[i];
        op.apply(tmp, out);
    };

    // Warm start x0 = D^{-1} rhs (y0 = rhs).
    y = rhs;
    apply_A(y, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - r[i];
    rhat = r;

    double rho = 1.0, alpha = 1.0, omega = 1.0;
    bool ok = false;
    int used = 0;
    for (int it = 1; it <= max_iter; ++it) {
        double rho1 = 0.0;
        for (std::size_t i = 0; i < n; ++i) rho1 += rhat[i] * r[i];
        if (std::fabs(rho1) < 1e-300) break; // breakdown
        if (it == 1) {
            p = r;
        } else {
            const double beta = (rho1 / rho) * (alpha / omega);
            for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        rho = rho1;
        apply_A(p, v);
        double rv = 0.0;
        for (std::size_t i = 0; i < n; ++i) rv += rhat[i] * v[i];
        if (std::fabs(rv) < 1e-300) break;
        alpha = rho1 / rv;
        for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
        double snorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) snorm += s[i] * s[i];
        if (std::sqrt(snorm) <= tol * bnorm) {
            for (std::size_t i = 0; i < n; ++i) y[i] += alpha * p[i];
            used = it;
            ok = true;
            break;
        }
        apply_A(s, t);
        double ts = 0.0, tt = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ts += t[i] * s[i];
            tt += t[i] * t[i];
        }
        if (tt < 1e-300) break;
        omega = ts / tt;
        if (std::fabs(omega) < 1e-300) break;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] += alpha * p[i] + omega * s[i];
            r[i] = s[i] - omega * t[i];
        }
        double rnorm = 0.0;
        for (std::size_t i = 0; i < n; ++i) rnorm += r[i] * r[i];
        if (std::sqrt(rnorm) <= tol * bnorm) {
            used = it;
            ok = true;
            break;
        }
    }

    if (ok) {
        for (std::size_t i = 0; i < n; ++i) x[i] = y[i] / diag[i];
        // True-residual verification (BiCGStab recurrences can drift).
        op.apply(x, r);
        double rn = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = rhs[i] - r[i];
            rn += d * d;
        }
        if (std::sqrt(rn) <= 10.0 * tol * bnorm) return used;
    }
    return cgnr_solve(op, rhs, x, tol, max_iter);
}

double clamp_negatives(DistributionField& f, const GaussianWeight* weight) {
    const PhaseGrid& g = f.grid;
    const double cell = std::pow(g.h_x, g.d_x) * g.h_v * g.h_v * g.h_v;
    std::vector<double> mu;
    if (weight && f.frame == Frame::Framed) {
        mu.resize(g.velocity_count());
        for (int a = 0; a < g.n_v; ++a)
            for (int b = 0; b < g.n_v; ++b)
                for (int c = 0; c < g.n_v; ++c)
                    mu[g.v_index(a, b, c)] =
                        std::exp(-weight->rate(f.t) * bracket2(g.v_at(a, b, c)));
    }
    double clamped = 0.0;
    const std::int64_t nvel = g.velocity_count();
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs)
        for (std::int64_t vv = 0; vv < nvel; ++vv) {
            double& val = f.values[g.index(xs, vv)];
            if (val < 0.0) {
                clamped += -val * cell * (mu.empty() ? 1.0 : mu[vv]);
                val = 0.0;
            }
        }
    return clamped;
}

} // namespace

DistributionField step_linearized(const DistributionField& G, const FramedCoefficients& coeffs,
                                  const GaussianWeight* weight, const LinearStepConfig& cfg,
                                  StepStats* stats) {
    const PhaseGrid& g = G.grid;
    if (!g.same_shape(coeffs.grid)) throw invalid_input("step_linearized: grid mismatch");
    if (!(cfg.dt > 0.0)) throw invalid_input("step_linearized: dt must be positive");
    if (cfg.theta < 0.0 || cfg.theta > 1.0)
        throw invalid_input("step_linearized: theta must lie in [0, 1]");
    if (cfg.eps > 0.0 && cfg.conservative_flux)
        throw invalid_input("step_linearized: the flux form does not support eps > 0");
    if (cfg.conservative_flux && !coeffs.source)
        throw invalid_input("step_linearized: flux form needs coefficients with a physical source");

    const double kappa = weight ? weight->kappa : 0.0;
    const int nv = g.n_v;
    const std::int64_t nvel = g.velocity_count();

    // kappa <v>^2 per velocity node (generic mode reaction).
    std::vector<double> kv2(nvel, 0.0);
    if (!cfg.conservative_flux && kappa != 0.0)
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c)
                    kv2[g.v_index(a, b, c)] = kappa * bracket2(g.v_at(a, b, c));

    DistributionField cur = G;
    transport(cur, 0.5 * cfg.dt, cfg.eps);

    // Gaussian weights at both time levels for the flux (conservative) mode:
    // the unknown is g itself, with cell masses mu g.
    const double rho_now = weight ? weight->rate(G.t) : 0.0;
    const double rho_next = weight ? weight->rate(G.t + cfg.dt) : 0.0;
    std::vector<double> mu_now, mu_next;
    if (cfg.conservative_flux) {
        mu_now.resize(nvel);
        mu_next.resize(nvel);
        for (int a = 0; a < nv; ++a)
            for (int b = 0; b < nv; ++b)
                for (int c = 0; c < nv; ++c) {
                    const double br = bracket2(g.v_at(a, b, c));
                    mu_now[g.v_index(a, b, c)] = std::exp(-rho_now * br);
                    mu_next[g.v_index(a, b, c)] = std::exp(-rho_next * br);
                }
    }

    DistributionField out = cur;
    std::vector<int> iters(g.spatial_count(), 0);

    parallel_for(g.spatial_count(), [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> u(nvel), b(nvel), x(nvel);
        for (std::int64_t xs = lo; xs < hi; ++xs) {
            VelocitySolve vs;
            vs.theta = cfg.theta;
            vs.dt = cfg.dt;
            vs.nd.nv = nv;
            vs.nd.h = g.h_v;
            vs.nd.kv2 = kv2.data();
            const std::int64_t off = g.index(xs, 0);
            if (cfg.conservative_flux) {
                const CoefficientField& src = *coeffs.source;
                for (int s = 0; s < 6; ++s) vs.nd.A[s] = src.a[s].data() + off;
                for (int s = 0; s < 3; ++s) vs.nd.bb[s] = src.b[s].data() + off;
                vs.nd.C = src.c.data() + off; // unused in flux mode
                for (int s = 0; s < 3; ++s) vs.nd.Bv[s] = nullptr;
                vs.nd.flux_mode = true;
                vs.nd.eps = 0.0;
                vs.nd.rho = rho_next;
                vs.nd.V_max = g.V_max;
                vs.nd.mu_diag = mu_next.data();
            } else {
                for (int s = 0; s < 6; ++s) vs.nd.A[s] = coeffs.A[s].data() + off;
                for (int s = 0; s < 3; ++s) vs.nd.Bv[s] = coeffs.B[s].data() + off;
                vs.nd.C = coeffs.C.data() + off;
                for (int s = 0; s < 3; ++s) vs.nd.bb[s] = nullptr;
                vs.nd.flux_mode = false;
                vs.nd.eps = cfg.eps;
            }

            if (cfg.theta < 0.5) {
                const double rate = vs.max_explicit_rate();
                if ((1.0 - cfg.theta) * cfg.dt * rate > cfg.max_cfl)
                    throw solver_failure("step_linearized: CFL bound violated for theta < 1/2");
            }

            for (std::int64_t vv = 0; vv < nvel; ++vv) u[vv] = cur.values[off + vv];

            if (cfg.conservative_flux) {
                // Explicit side evaluated with the weights of the current level.
                VelocitySolve vs_now = vs;
                vs_now.nd.rho = rho_now;
                vs_now.nd.mu_diag = mu_now.data();
                vs_now.explicit_rhs(u, b);
            } else {
                vs.explicit_rhs(u, b);
            }
            iters[xs] = krylov_solve(vs, b, x, cfg.solver_tol, cfg.solver_max_iter);
            for (std::int64_t vv = 0; vv < nvel; ++vv) out.values[off + vv] = x[vv];
        }
    });

    out.t = G.t + cfg.dt;
    transport(out, 0.5 * cfg.dt, cfg.eps);
    const double clamped = clamp_negatives(out, weight);

    if (stats) {
        stats->clamp_mass = clamped;
        stats->cg_iterations = *std::max_element(iters.begin(), iters.end());
    }
    return out;
}

const DistributionField& Trajectory::at_time(double t) const {
    if (fields.empty()) throw invalid_input("Trajectory::at_time: empty trajectory");
    std::size_t best = 0;
    for (std::size_t i = 0; i < times.size(); ++i)
        if (times[i] <= t + 1e-12) best = i;
    return fields[best];
}

LinearSolveResult solve_linearized_with(
    const DistributionField& g_in, double t0, double T, const LinearStepConfig& cfg,
    const GaussianWeight* weight,
    const std::function<const FramedCoefficients&(int, double)>& provider) {
    if (!(T > 0.0)) throw invalid_input("solve_linearized: T must be positive");
    const int n_steps = std::max(1, static_cast<int>(std::ceil(T / cfg.dt - 1e-9)));
    LinearStepConfig step_cfg = cfg;
    step_cfg.dt = T / n_steps;

    LinearSolveResult res;
    DistributionField cur = g_in;
    cur.t = t0;

    // Y0 accumulators: sup_t H00 + int_0^t H01 dt (squared quantities, trapezoid).
    double sup_h00 = 0.0, int_h01 = 0.0;
    auto push_norms = [&](const DistributionField& f, double clamp_mass) {
        NormRow row;
        row.t = f.t;
        row.H00 = ul_norm(f, 0, 0).value_Hkl;
        row.H01 = ul_norm(f, 0, 1).value_Hkl;
        row.H20 = ul_norm(f, 2, 0).value_Hkl;
        row.clamp_mass = clamp_mass;
        if (res.norms.empty()) {
            sup_h00 = row.H00;
        } else {
            sup_h00 = std::max(sup_h00, row.H00);
            int_h01 += 0.5 * (res.norms.back().H01 + row.H01) * (row.t - res.norms.back().t);
        }
        row.Y0_accum = sup_h00 + int_h01;
        res.norms.push_back(row);
    };

    push_norms(cur, 0.0);
    const double h00_initial = res.norms.front().H00;

    res.G.times.push_back(cur.t);
    res.G.fields.push_back(cur);

    for (int k = 0; k < n_steps; ++k) {
        const double t = t0 + k * step_cfg.dt;
        const FramedCoefficients& coeffs = provider(k, t);
        StepStats st;
        cur = step_linearized(cur, coeffs, weight, step_cfg, &st);
        res.clamp_mass_total += st.clamp_mass;
        push_norms(cur, st.clamp_mass);

        if (h00_initial > 0.0 &&
            std::sqrt(res.norms.back().H00 / h00_initial) > cfg.blowup_factor)
            throw solver_failure("solve_linearized: Y0 blow-up guard triggered");

        res.G.times.push_back(cur.t);
        res.G.fields.push_back(cur);
    }
    return res;
}

LinearSolveResult solve_linearized(const DistributionField& g_in, const Trajectory& h_frozen,
                                   double t0, double T, const LinearStepConfig& cfg,
                                   const GaussianWeight& w, const KernelStencil& st) {
    if (h_frozen.empty()) throw invalid_input("solve_linearized: empty iterate trajectory");

    struct Cache {
        int snapshot = -1;
        FramedCoefficients coeffs;
    };
    auto cache = std::make_shared<Cache>();

    auto provider = [&h_frozen, &w, &st, &cfg, cache](int, double t) -> const FramedCoefficients& {
        // Identify the snapshot in force at time t.
        int idx = 0;
        for (std::size_t i = 0; i < h_frozen.times.size(); ++i)
            if (h_frozen.times[i] <= t + 1e-12) idx = static_cast<int>(i);
        if (cache->snapshot != idx || cache->coeffs.C.empty() ||
            std::fabs(cache->coeffs.t - t) > 1e-12) {
            DistributionField h = h_frozen.fields[idx];
            if (cfg.presmooth_eps > 0.0) h = gaussian_presmooth(h, cfg.presmooth_eps);
            cache->coeffs = coefficients_of_iterate(h, w, t, st);
            cache->snapshot = idx;
        }
        return cache->coeffs;
    };
    return solve_linearized_with(g_in, t0, T, cfg, &w, provider);
}

DistributionField apply_domain_cutoff(const DistributionField& field, double R_cut) {
    if (!(R_cut >= 3.0)) throw invalid_input("apply_domain_cutoff: R_cut must be >= 3");
    const PhaseGrid& g = field.grid;
    DistributionField out = field;
    for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs) {
        const Vec3 x = g.x_at(xs);
        double x2 = 0.0;
        for (int d = 0; d < g.d_x; ++d) {
            const double dd = g.torus_delta(x[d], 0.0);
            x2 += dd * dd;
        }
        for (int a = 0; a < g.n_v; ++a)
            for (int b = 0; b < g.n_v; ++b)
                for (int c = 0; c < g.n_v; ++c) {
                    const std::int64_t vv = g.v_index(a, b, c);
                    const double s = std::sqrt(x2 + g.v_at(a, b, c).norm2());
                    out.at(xs, vv) = field.at(xs, vv) * chi_domain(s, R_cut);
                }
    }
    return out;
}

DistributionField gaussian_presmooth(const DistributionField& field, double eps) {
    if (!(eps > 0.0)) return field;
    const PhaseGrid& g = field.grid;
    DistributionField out = field;

    // Separable truncated Gaussian in v (zero extension outside the cube).
    const int half = std::max(1, static_cast<int>(std::ceil(4.0 * eps / g.h_v)));
    std::vector<double> kern(2 * half + 1);
    double sum = 0.0;
    for (int i = -half; i <= half; ++i) {
        kern[i + half] = std::exp(-0.5 * (i * g.h_v) * (i * g.h_v) / (eps * eps));
        sum += kern[i + half];
    }
    for (double& kv : kern) kv /= sum;

    const int nv = g.n_v;
    std::vector<double> cur = field.values, nxt(field.values.size());
    for (int axis = 0; axis < 3; ++axis) {
        const std::int64_t stride =
            axis == 0 ? static_cast<std::int64_t>(nv) * nv : (axis == 1 ? nv : 1);
        for (std::int64_t xs = 0; xs < g.spatial_count(); ++xs) {
            const std::int64_t base = g.index(xs, 0);
            for (int a = 0; a < nv; ++a)
                for (int b = 0; b < nv; ++b)
                    for (int c = 0; c < nv; ++c) {
                        const int pos = axis == 0 ? a : (axis == 1 ? b : c);
                        const std::int64_t vv = g.v_index(a, b, c);
                        double acc = 0.0;
                        for (int i = -half; i <= half; ++i) {
                            const int pi = pos + i;
                            if (pi < 0 || pi >= nv) continue;
                            acc += kern[i + half] * cur[base + vv + i * stride];
                        }
                        nxt[base + vv] = acc;
                    }
        }
        cur.swap(nxt);
    }
    out.values = cur;

    // Spectral Gaussian in x.
    if (g.d_x >= 1) {
        const Fft1& fft = cached_fft1(g.n_x);
        for (int axis = 0; axis < g.d_x; ++axis) {
            const std::int64_t other = g.spatial_count() / g.n_x;
            const std::int64_t nvel = g.velocity_count();
            parallel_for(other * nvel, [&](std::int64_t lo, std::int64_t hi) {
                std::vector<std::complex<double>> line(g.n_x);
                for (std::int64_t wdx = lo; wdx < hi; ++wdx) {
                    const std::int64_t vv = wdx % nvel;
                    const std::int64_t rest = wdx / nvel;
                    std::int64_t base_xs = 0, stride_xs = 1;
                    if (g.d_x == 1) {
                        base_xs = 0;
                        stride_xs = 1;
                    } else {
                        const std::int64_t r0 = rest / g.n_x, r1 = rest % g.n_x;
                        if (axis == 0) {
                            base_xs = r0 * g.n_x + r1;
                            stride_xs = static_cast<std::int64_t>(g.n_x) * g.n_x;
                        } else if (axis == 1) {
                            base_xs = r0 * g.n_x * g.n_x + r1;
                            stride_xs = g.n_x;
                        } else {
                            base_xs = (r0 * g.n_x + r1) * g.n_x;
                            stride_xs = 1;
                        }
                    }
                    for (int i = 0; i < g.n_x; ++i)
                        line[i] = out.values[g.index(base_xs + i * stride_xs, vv)];
                    fft.forward(line.data());
                    for (int j = 0; j < g.n_x; ++j) {
                        const int k = j <= g.n_x / 2 ? j : j - g.n_x;
                        const double kt = 2.0 * M_PI * k / g.L;
                        line[j] *= std::exp(-0.5 * eps * eps * kt * kt);
                    }
                    fft.backward(line.data());
                    for (int i = 0; i < g.n_x; ++i)
                        out.values[g.index(base_xs + i * stride_xs, vv)] =
                            line[i].real() / g.n_x;
                }
            });
        }
    }
    return out;
}

void write_norm_csv(const std::vector<NormRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_norm_csv: cannot open " + path);
    out << "t,H00,H01,H20,Y0_accum,clamp_mass\r\n";
    char buf[256];
    for (const NormRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\r\n", r.t, r.H00,
                      r.H01, r.H20, r.Y0_accum, r.clamp_mass);
        out << buf;
    }
}

} // namespace landau
