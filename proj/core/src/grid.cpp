#include "landau/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace landau {

PhaseGrid make_grid(int d_x, double L, int n_x, double V_max, int n_v) {
    if (d_x != 0 && d_x != 1 && d_x != 3)
        throw invalid_input("make_grid: d_x must be 0, 1 or 3");
    if (n_v < 8 || n_v % 2 != 0)
        throw invalid_input("make_grid: n_v must be even and >= 8");
    if (!(V_max > 0.0))
        throw invalid_input("make_grid: V_max must be positive");
    PhaseGrid g;
    g.d_x = d_x;
    g.V_max = V_max;
    g.n_v = n_v;
    g.h_v = 2.0 * V_max / n_v;
    if (d_x >= 1) {
        if (!(L > 0.0) || n_x < 2)
            throw invalid_input("make_grid: spatial extent requires L > 0 and n_x >= 2");
        g.L = L;
        g.n_x = n_x;
        g.h_x = L / n_x;
    } else {
        g.L = 0.0;
        g.n_x = 1;
        g.h_x = 0.0;
    }
    return g;
}

Vec3 PhaseGrid::x_at(std::int64_t xs) const {
    Vec3 x{0, 0, 0};
    if (d_x == 1) {
        x.x = x_node(static_cast<int>(xs));
    } else if (d_x == 3) {
        const int k = static_cast<int>(xs % n_x);
        const int j = static_cast<int>((xs / n_x) % n_x);
        const int i = static_cast<int>(xs / (static_cast<std::int64_t>(n_x) * n_x));
        x = {x_node(i), x_node(j), x_node(k)};
    }
    return x;
}

double PhaseGrid::torus_delta(double a, double b) const {
    double d = a - b;
    d -= L * std::floor(d / L + 0.5);
    return d;
}

DistributionField make_field(const PhaseGrid& grid, double gamma, Frame frame) {
    DistributionField f;
    f.grid = grid;
    f.gamma = gamma;
    f.frame = frame;
    f.values.assign(grid.phase_count(), 0.0);
    return f;
}

bool DistributionField::finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

double DistributionField::max_value() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
}

double DistributionField::min_value() const {
    double m = values.empty() ? 0.0 : values[0];
    for (double v : values) m = std::min(m, v);
    return m;
}

namespace {

// Wrap an integer index onto [0, n).
inline int wrap(int i, int n) {
    i %= n;
    return i < 0 ? i + n : i;
}

} // namespace

double interpolate(const DistributionField& field, const Vec3& x, const Vec3& v) {
    const PhaseGrid& g = field.grid;

    // Velocity cell-center coordinates: v_i = -V_max + (i + 1/2) h_v.
    double wv[3];
    int iv[3];
    for (int d = 0; d < 3; ++d) {
        const double s = (v[d] + g.V_max) / g.h_v - 0.5;
        const double fl = std::floor(s);
        iv[d] = static_cast<int>(fl);
        wv[d] = s - fl;
    }

    // Spatial cell with periodic wrap.
    int ix[3] = {0, 0, 0};
    double wx[3] = {0.0, 0.0, 0.0};
    for (int d = 0; d < g.d_x; ++d) {
        const double s = x[d] / g.h_x;
        const double fl = std::floor(s);
        ix[d] = wrap(static_cast<int>(fl), g.n_x);
        wx[d] = s - fl;
    }

    auto v_value = [&](std::int64_t xs, int a, int b, int c) -> double {
        if (a < 0 || b < 0 || c < 0 || a >= g.n_v || b >= g.n_v || c >= g.n_v) return 0.0;
        return field.at(xs, g.v_index(a, b, c));
    };

    auto corner_spatial = [&](int da, int db, int dc) -> std::int64_t {
        if (g.d_x == 0) return 0;
        if (g.d_x == 1) return wrap(ix[0] + da, g.n_x);
        const std::int64_t i = wrap(ix[0] + da, g.n_x);
        const std::int64_t j = wrap(ix[1] + db, g.n_x);
        const std::int64_t k = wrap(ix[2] + dc, g.n_x);
        return (i * g.n_x + j) * g.n_x + k;
    };

    double acc = 0.0;
    const int nx_corners = g.d_x == 0 ? 1 : (g.d_x == 1 ? 2 : 8);
    for (int cx = 0; cx < nx_corners; ++cx) {
        const int da = cx & 1, db = (cx >> 1) & 1, dc = (cx >> 2) & 1;
        double wxx = 1.0;
        if (g.d_x >= 1) wxx *= da ? wx[0] : 1.0 - wx[0];
        if (g.d_x == 3) wxx *= (db ? wx[1] : 1.0 - wx[1]) * (dc ? wx[2] : 1.0 - wx[2]);
        if (wxx == 0.0) continue;
        const std::int64_t xs = corner_spatial(da, g.d_x == 3 ? db : 0, g.d_x == 3 ? dc : 0);
        for (int cv = 0; cv < 8; ++cv) {
            const int ea = cv & 1, eb = (cv >> 1) & 1, ec = (cv >> 2) & 1;
            const double wvv = (ea ? wv[0] : 1.0 - wv[0]) * (eb ? wv[1] : 1.0 - wv[1]) *
                               (ec ? wv[2] : 1.0 - wv[2]);
            if (wvv == 0.0) continue;
            acc += wxx * wvv * v_value(xs, iv[0] + ea, iv[1] + eb, iv[2] + ec);
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// ul_norm
// ---------------------------------------------------------------------------

namespace {

// All multi-indices over `dims` variables with total order <= k, as flat digit
// strings (variable repeated per derivative order), enumerated deterministically.
void enumerate_derivs(int dims, int k, std::vector<std::vector<int>>& out) {
    out.clear();
    out.push_back({});
    std::vector<std::vector<int>> frontier = {{}};
    for (int order = 1; order <= k; ++order) {
        std::vector<std::vector<int>> next;
        for (const auto& base : frontier) {
            const int start = base.empty() ? 0 : base.back();
            for (int d = start; d < dims; ++d) {
                auto ext = base;
                ext.push_back(d);
                next.push_back(ext);
                out.push_back(ext);
            }
        }
        frontier = std::move(next);
    }
}

} // namespace

UlNormReport ul_norm(const DistributionField& field, int k, int l) {
    if (k < 0 || k > 4) throw invalid_input("ul_norm: derivative order k must be in [0, 4]");
    if (l < 0) throw invalid_input("ul_norm: weight order l must be >= 0");
    if (!field.finite()) throw invalid_input("ul_norm: field contains NaN/Inf");

    const PhaseGrid& g = field.grid;
    const std::int64_t nsp = g.spatial_count();
    const std::int64_t nvel = g.velocity_count();
    const int nv = g.n_v;

    // Variables 0..d_x-1 are spatial, d_x..d_x+2 are velocity components.
    std::vector<std::vector<int>> derivs;
    enumerate_derivs(g.d_x + 3, k, derivs);

    // <v>^{2l} per velocity node.
    std::vector<double> wgt(nvel);
    for (int a = 0; a < nv; ++a)
        for (int b = 0; b < nv; ++b)
            for (int c = 0; c < nv; ++c)
                wgt[g.v_index(a, b, c)] = std::pow(bracket2(g.v_at(a, b, c)), l);

    // S(x) = windowless weighted derivative energy per spatial node.
    std::vector<double> S(nsp, 0.0);
    std::vector<double> work, next;

    auto xs_neighbor = [&](std::int64_t xs, int axis, int step) -> std::int64_t {
        if (g.d_x == 1) return wrap(static_cast<int>(xs) + step, g.n_x);
        const int k2 = static_cast<int>(xs % g.n_x);
        const int j2 = static_cast<int>((xs / g.n_x) % g.n_x);
        const int i2 = static_cast<int>(xs / (static_cast<std::int64_t>(g.n_x) * g.n_x));
        int c[3] = {i2, j2, k2};
        c[axis] = wrap(c[axis] + step, g.n_x);
        return (static_cast<std::int64_t>(c[0]) * g.n_x + c[1]) * g.n_x + c[2];
    };

    for (const auto& der : derivs) {
        work = field.values;
        for (int var : der) {
            next.assign(work.size(), 0.0);
            if (var < g.d_x) {
                const double inv2h = 1.0 / (2.0 * g.h_x);
                for (std::int64_t xs = 0; xs < nsp; ++xs) {
                    const std::int64_t xp = xs_neighbor(xs, var, +1);
                    const std::int64_t xm = xs_neighbor(xs, var, -1);
                    for (std::int64_t vv = 0; vv < nvel; ++vv)
                        next[g.index(xs, vv)] =
                            (work[g.index(xp, vv)] - work[g.index(xm, vv)]) * inv2h;
                }
            } else {
                const int axis = var - g.d_x;
                const double inv2h = 1.0 / (2.0 * g.h_v);
                const std::int64_t stride = axis == 0 ? static_cast<std::int64_t>(nv) * nv
                                            : axis == 1 ? nv
                                                        : 1;
                for (std::int64_t xs = 0; xs < nsp; ++xs) {
                    const std::int64_t base = g.index(xs, 0);
                    for (int a = 0; a < nv; ++a)
                        for (int b = 0; b < nv; ++b)
                            for (int c = 0; c < nv; ++c) {
                                const int ai = axis == 0 ? a : (axis == 1 ? b : c);
                                const std::int64_t vv = g.v_index(a, b, c);
                                const double fp = ai + 1 < nv ? work[base + vv + stride] : 0.0;
                                const double fm = ai - 1 >= 0 ? work[base + vv - stride] : 0.0;
                                next[base + vv] = (fp - fm) * inv2h;
                            }
                }
            }
            work.swap(next);
        }
        for (std::int64_t xs = 0; xs < nsp; ++xs) {
            double acc = 0.0;
            const std::int64_t base = g.index(xs, 0);
            for (std::int64_t vv = 0; vv < nvel; ++vv) {
                const double d = work[base + vv];
                acc += wgt[vv] * d * d;
            }
            S[xs] += acc;
        }
    }

    const double cellv = g.h_v * g.h_v * g.h_v;
    UlNormReport rep;
    rep.k = k;
    rep.l = l;

    if (g.d_x == 0) {
        rep.value_Hkl = S[0] * cellv;
        return rep;
    }

    // Windowed sup over grid-aligned centers; phi enters squared.
    const double cellx = std::pow(g.h_x, g.d_x);
    double best = 0.0;
    for (std::int64_t a = 0; a < nsp; ++a) {
        const Vec3 xa = g.x_at(a);
        double acc = 0.0;
        for (std::int64_t xs = 0; xs < nsp; ++xs) {
            const Vec3 xx = g.x_at(xs);
            double r2 = 0.0;
            for (int d = 0; d < g.d_x; ++d) {
                const double dd = g.torus_delta(xx[d], xa[d]);
                r2 += dd * dd;
            }
            if (r2 >= 4.0) continue;
            const double phi = bump_phi(std::sqrt(r2));
            acc += phi * phi * S[xs];
        }
        best = std::max(best, acc);
    }
    rep.value_Hkl = best * cellx * cellv;
    return rep;
}

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

double bump_phi(double r) {
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    const double s = r - 1.0;
    const double den = 1.0 - s * s;
    if (den <= 1e-14) return 0.0;
    return std::exp(1.0 - 1.0 / den);
}

double chi_unit(double r) { return bump_phi(r); }

double smooth_ramp(double u) {
    if (u <= 0.0) return 1.0;
    if (u >= 1.0) return 0.0;
    const double u3 = u * u * u;
    return 1.0 - (10.0 * u3 - 15.0 * u3 * u + 6.0 * u3 * u * u);
}

double chi_domain(double s, double R) { return smooth_ramp(s - (R - 2.0)); }

// ---------------------------------------------------------------------------
// Serialization (little-endian hosts; payload is raw IEEE-754 doubles).
// ---------------------------------------------------------------------------

void save_field(const DistributionField& field, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_field: cannot open " + path);
    out.write(reinterpret_cast<const char*>(field.values.data()),
              static_cast<std::streamsize>(field.values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("save_field: short write to " + path);

    nlohmann::json j;
    j["d_x"] = field.grid.d_x;
    j["L"] = field.grid.L;
    j["n_x"] = field.grid.n_x;
    j["V_max"] = field.grid.V_max;
    j["n_v"] = field.grid.n_v;
    j["t"] = field.t;
    j["gamma"] = field.gamma;
    j["frame"] = field.frame == Frame::Physical ? "physical" : "framed";
    j["rho0"] = field.rho0;
    j["kappa"] = field.kappa;
    std::ofstream js(path + ".json");
    js << j.dump(2) << "\n";
}

DistributionField load_field(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) throw std::runtime_error("load_field: missing sidecar " + path + ".json");
    nlohmann::json j;
    js >> j;

    PhaseGrid g = make_grid(j.at("d_x").get<int>(), j.at("L").get<double>(),
                            j.at("n_x").get<int>(), j.at("V_max").get<double>(),
                            j.at("n_v").get<int>());
    DistributionField f = make_field(g, j.at("gamma").get<double>());
    f.t = j.at("t").get<double>();
    f.frame = j.at("frame").get<std::string>() == "framed" ? Frame::Framed : Frame::Physical;
    f.rho0 = j.value("rho0", 0.0);
    f.kappa = j.value("kappa", 0.0);

    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_field: cannot open " + path);
    in.read(reinterpret_cast<char*>(f.values.data()),
            static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(f.values.size() * sizeof(double)))
        throw std::runtime_error("load_field: payload size mismatch for " + path);
    return f;
}

} // namespace landau
