#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "landau/util.hpp"

namespace landau {

/// Discretization of (x, v) phase space: periodic spatial torus of period L
/// per axis (d_x in {0, 1, 3}; 0 = spatially homogeneous) times the velocity
/// cube [-V_max, V_max]^3. Velocity nodes are cell centers, so with even n_v
/// the singular point v = 0 is never a node.
struct PhaseGrid {
    int d_x = 0;
    double L = 0.0;
    int n_x = 1;
    double V_max = 0.0;
    int n_v = 0;
    double h_x = 0.0;
    double h_v = 0.0;

    std::int64_t spatial_count() const {
        std::int64_t n = 1;
        for (int d = 0; d < d_x; ++d) n *= n_x;
        return n;
    }
    std::int64_t velocity_count() const {
        return static_cast<std::int64_t>(n_v) * n_v * n_v;
    }
    std::int64_t phase_count() const { return spatial_count() * velocity_count(); }

    double x_node(int i) const { return i * h_x; }
    double v_node(int i) const { return -V_max + (i + 0.5) * h_v; }

    Vec3 v_at(int iv, int jv, int kv) const {
        return {v_node(iv), v_node(jv), v_node(kv)};
    }

    std::int64_t v_index(int iv, int jv, int kv) const {
        return (static_cast<std::int64_t>(iv) * n_v + jv) * n_v + kv;
    }
    /// Storage is x-major, v-minor: value(xs, v) = values[xs * n_v^3 + v].
    std::int64_t index(std::int64_t xs, std::int64_t v_lin) const {
        return xs * velocity_count() + v_lin;
    }

    /// Spatial node coordinates from the linear spatial index (x3-fastest).
    Vec3 x_at(std::int64_t xs) const;

    /// Minimal-image displacement a - b on the torus, per axis in [-L/2, L/2).
    double torus_delta(double a, double b) const;

    bool same_shape(const PhaseGrid& o) const {
        return d_x == o.d_x && L == o.L && n_x == o.n_x && V_max == o.V_max && n_v == o.n_v;
    }

    /// Bytes for one scalar field (used for planning / the CLI echo).
    std::int64_t field_bytes() const { return phase_count() * 8; }
};

/// d_x = 0 ignores L and n_x. Rejects odd n_v and nonpositive extents.
PhaseGrid make_grid(int d_x, double L, int n_x, double V_max, int n_v);

enum class Frame : std::uint8_t { Physical = 0, Framed = 1 };

/// Nonnegative grid samples of f (physical) or g (framed) at one time.
/// Framed fields carry the Gaussian-frame parameters (rho0, kappa).
struct DistributionField {
    PhaseGrid grid;
    double t = 0.0;
    double gamma = -1.0;
    Frame frame = Frame::Physical;
    double rho0 = 0.0;
    double kappa = 0.0;
    std::vector<double> values;

    double& at(std::int64_t xs, std::int64_t v_lin) { return values[grid.index(xs, v_lin)]; }
    double at(std::int64_t xs, std::int64_t v_lin) const { return values[grid.index(xs, v_lin)]; }

    bool finite() const;
    double max_value() const;
    double min_value() const;
};

DistributionField make_field(const PhaseGrid& grid, double gamma, Frame frame = Frame::Physical);

/// Multilinear interpolation at (x, v); x is wrapped periodically, and the
/// field is treated as 0 outside the velocity cube (distribution fields decay
/// by construction). Exact at nodes and on multilinear functions.
double interpolate(const DistributionField& field, const Vec3& x, const Vec3& v);

/// Discrete uniformly-local Sobolev diagnostic. The returned value is the
/// standard squared quantity
///   sum_{|alpha|+|beta|<=k} sup_a  sum_nodes phi(x-a)^2 <v>^{2l} |D^(alpha,beta) f|^2 h^dx h_v^3,
/// with phi the fixed smooth bump (identically 1 on B_1, supported in B_2)
/// and all derivatives 2nd-order centered differences. On the torus the sup
/// ranges over all grid-aligned centers; for d_x = 0 the window factor is 1.
struct UlNormReport {
    int k = 0;
    int l = 0;
    double value_Hkl = 0.0;  ///< squared H^{k,l}_ul value of one snapshot
    double value_Yk = 0.0;   ///< squared Y^k accumulator when filled by a trajectory
};

UlNormReport ul_norm(const DistributionField& field, int k, int l);

// ---------------------------------------------------------------------------
// Fixed cutoff functions shared across modules.
// ---------------------------------------------------------------------------

/// The spatial window: phi(r) = 1 for r<=1, exp(1 - 1/(1-(r-1)^2)) on (1,2), 0 beyond.
double bump_phi(double r);

/// Velocity cutoff chi for the coefficient truncation: chi ≡ 1 on B_1,
/// ≡ 0 outside B_2, smooth monotone in between (same profile as bump_phi).
double chi_unit(double r);

/// Quintic ramp: 1 for u<=0, 0 for u>=1, max |d/du| = 15/8 < 2.
double smooth_ramp(double u);

/// Domain cutoff chi_R on the 6-D ball scale s = sqrt(|x|^2+|v|^2):
/// ≡ 1 for s <= R-2, ≡ 0 for s >= R-1, |grad| <= 2 by construction.
double chi_domain(double s, double R);

// ---------------------------------------------------------------------------
// Serialization: raw little-endian float64 payload in x-major v-minor order
// plus a JSON sidecar {d_x, L, n_x, V_max, n_v, t, gamma, frame, rho0, kappa}.
// `path` names the payload file; the sidecar is path + ".json".
// ---------------------------------------------------------------------------

void save_field(const DistributionField& field, const std::string& path);
DistributionField load_field(const std::string& path);

} // namespace landau
