#include "landau/util.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>

namespace landau {

std::array<double, 3> sym3_eigenvalues(const SymMat3& a) {
    // Trigonometric solution for the roots of det(a - w I) = 0.
    const double p1 = a.m[1] * a.m[1] + a.m[2] * a.m[2] + a.m[4] * a.m[4];
    const double q = a.trace() / 3.0;
    const double d0 = a.m[0] - q, d1 = a.m[3] - q, d2 = a.m[5] - q;
    const double p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    const double p = std::sqrt(std::max(p2 / 6.0, 0.0));
    if (p <= 0.0 || p2 < 1e-300) return {q, q, q};

    // B = (a - q I) / p, r = det(B)/2 clamped to [-1, 1].
    const double b00 = d0 / p, b11 = d1 / p, b22 = d2 / p;
    const double b01 = a.m[1] / p, b02 = a.m[2] / p, b12 = a.m[4] / p;
    double r = 0.5 * (b00 * (b11 * b22 - b12 * b12) - b01 * (b01 * b22 - b12 * b02) +
                      b02 * (b01 * b12 - b11 * b02));
    r = std::clamp(r, -1.0, 1.0);

    const double phi = std::acos(r) / 3.0;
    const double w2 = q + 2.0 * p * std::cos(phi);
    const double w0 = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    const double w1 = 3.0 * q - w0 - w2;
    return {w0, w1, w2};
}

namespace {

// One column of the adjugate of (a - w I); the column with the largest norm is
// an eigenvector candidate.
Vec3 adjugate_column(const SymMat3& a, double w, int col) {
    const double m00 = a.m[0] - w, m11 = a.m[3] - w, m22 = a.m[5] - w;
    const double m01 = a.m[1], m02 = a.m[2], m12 = a.m[4];
    switch (col) {
        case 0:
            return {m11 * m22 - m12 * m12, m02 * m12 - m01 * m22, m01 * m12 - m02 * m11};
        case 1:
            return {m02 * m12 - m01 * m22, m00 * m22 - m02 * m02, m01 * m02 - m00 * m12};
        default:
            return {m01 * m12 - m02 * m11, m01 * m02 - m00 * m12, m00 * m11 - m01 * m01};
    }
}

Vec3 normalize_or(const Vec3& v, const Vec3& fallback) {
    const double n = v.norm();
    if (n < 1e-300) return fallback;
    return v * (1.0 / n);
}

Vec3 any_orthogonal(const Vec3& u) {
    Vec3 t = std::fabs(u.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 w{u.y * t.z - u.z * t.y, u.z * t.x - u.x * t.z, u.x * t.y - u.y * t.x};
    return normalize_or(w, {0, 0, 1});
}

} // namespace

void sym3_eigendecompose(const SymMat3& a, std::array<double, 3>& w, std::array<Vec3, 3>& q) {
    w = sym3_eigenvalues(a);
    const double scale = std::max({std::fabs(w[0]), std::fabs(w[2]), 1e-300});

    // Near-isotropic matrix: any orthonormal frame diagonalizes it.
    if (w[2] - w[0] <= 1e-14 * scale) {
        q = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
        return;
    }

    // Pick the two best-separated eigenvalues, get eigenvectors from the
    // adjugate, and complete the frame by a cross product.
    auto eigvec = [&](double wi) {
        Vec3 best{0, 0, 0};
        double best_n2 = -1.0;
        for (int c = 0; c < 3; ++c) {
            Vec3 cand = adjugate_column(a, wi, c);
            const double n2 = cand.norm2();
            if (n2 > best_n2) {
                best_n2 = n2;
                best = cand;
            }
        }
        return normalize_or(best, {1, 0, 0});
    };

    const bool low_isolated = (w[1] - w[0]) >= (w[2] - w[1]);
    if (low_isolated) {
        q[0] = eigvec(w[0]);
        if (w[2] - w[1] <= 1e-14 * scale) {
            q[1] = any_orthogonal(q[0]);
        } else {
            q[2] = eigvec(w[2]);
            // Re-orthogonalize against q0 for robustness near degeneracy.
            Vec3 v = q[2] - q[0] * q[0].dot(q[2]);
            q[2] = normalize_or(v, any_orthogonal(q[0]));
            q[1] = {q[2].y * q[0].z - q[2].z * q[0].y, q[2].z * q[0].x - q[2].x * q[0].z,
                    q[2].x * q[0].y - q[2].y * q[0].x};
            return;
        }
        q[2] = {q[0].y * q[1].z - q[0].z * q[1].y, q[0].z * q[1].x - q[0].x * q[1].z,
                q[0].x * q[1].y - q[0].y * q[1].x};
    } else {
        q[2] = eigvec(w[2]);
        if (w[1] - w[0] <= 1e-14 * scale) {
            q[1] = any_orthogonal(q[2]);
        } else {
            q[0] = eigvec(w[0]);
            Vec3 v = q[0] - q[2] * q[2].dot(q[0]);
            q[0] = normalize_or(v, any_orthogonal(q[2]));
            q[1] = {q[0].y * q[2].z - q[0].z * q[2].y, q[0].z * q[2].x - q[0].x * q[2].z,
                    q[0].x * q[2].y - q[0].y * q[2].x};
            return;
        }
        q[0] = {q[1].y * q[2].z - q[1].z * q[2].y, q[1].z * q[2].x - q[1].x * q[2].z,
                q[1].x * q[2].y - q[1].y * q[2].x};
    }
}

namespace {
std::atomic<int> g_thread_hint{0};
}

int thread_hint() {
    int h = g_thread_hint.load();
    if (h > 0) return h;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void set_thread_hint(int n) { g_thread_hint.store(n); }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body) {
    if (n <= 0) return;
    const int workers =
        std::max(1, static_cast<int>(std::min<std::int64_t>(thread_hint(), n)));
    if (workers == 1) {
        body(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min<std::int64_t>(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi] { body(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xF];
        h >>= 4;
    }
    return s;
}

} // namespace landau
