#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace landau {

/// Thrown when a caller violates a documented precondition.
class invalid_input : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative solve fails its tolerance contract.
class solver_failure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm2() const { return dot(*this); }
    double norm() const { return std::sqrt(norm2()); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

/// ⟨v⟩² = 1 + |v|²
inline double bracket2(const Vec3& v) { return 1.0 + v.norm2(); }
inline double bracket(const Vec3& v) { return std::sqrt(bracket2(v)); }

/// Symmetric 3x3 matrix stored as the six independent components
/// in the order a11, a12, a13, a22, a23, a33.
struct SymMat3 {
    std::array<double, 6> m{};

    static constexpr int idx(int i, int j) {
        // (0,0)->0 (0,1)->1 (0,2)->2 (1,1)->3 (1,2)->4 (2,2)->5
        if (i > j) std::swap(i, j);
        return i == 0 ? j : (i == 1 ? 2 + j : 5);
    }

    double operator()(int i, int j) const { return m[idx(i, j)]; }
    double& at(int i, int j) { return m[idx(i, j)]; }

    static SymMat3 identity() { return SymMat3{{1, 0, 0, 1, 0, 1}}; }
    static SymMat3 zero() { return SymMat3{}; }

    SymMat3 operator+(const SymMat3& o) const {
        SymMat3 r;
        for (int k = 0; k < 6; ++k) r.m[k] = m[k] + o.m[k];
        return r;
    }
    SymMat3 operator*(double s) const {
        SymMat3 r;
        for (int k = 0; k < 6; ++k) r.m[k] = m[k] * s;
        return r;
    }
    SymMat3& operator+=(const SymMat3& o) {
        for (int k = 0; k < 6; ++k) m[k] += o.m[k];
        return *this;
    }

    Vec3 mul(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[1] * v.x + m[3] * v.y + m[4] * v.z,
                m[2] * v.x + m[4] * v.y + m[5] * v.z};
    }
    double quad(const Vec3& e) const { return e.dot(mul(e)); }
    double trace() const { return m[0] + m[3] + m[5]; }

    double frob_norm() const {
        double s = m[0] * m[0] + m[3] * m[3] + m[5] * m[5] +
                   2.0 * (m[1] * m[1] + m[2] * m[2] + m[4] * m[4]);
        return std::sqrt(s);
    }

    double max_abs_offdiag() const {
        return std::max({std::fabs(m[1]), std::fabs(m[2]), std::fabs(m[4])});
    }
};

/// Eigenvalues of a symmetric 3x3 matrix by the trigonometric solution of the
/// characteristic cubic, returned in ascending order.
std::array<double, 3> sym3_eigenvalues(const SymMat3& a);

/// Full eigendecomposition a = Q diag(w) Q^T; columns of q are eigenvectors.
/// Closed-form (non-iterative) path with a deterministic tie-breaking rule.
void sym3_eigendecompose(const SymMat3& a, std::array<double, 3>& w,
                         std::array<Vec3, 3>& q);

// ---------------------------------------------------------------------------
// Deterministic data parallelism.
//
// Work is split into fixed chunks by index; each chunk writes to disjoint
// output slots and no cross-thread reductions happen, so results are
// bit-identical for any worker count.
// ---------------------------------------------------------------------------

/// Global worker-count hint (from --threads / env); never changes results.
int thread_hint();
void set_thread_hint(int n);

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

/// FNV-1a 64-bit hash, used for config/content fingerprints in manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 1469598103934665603ull);
std::string hex64(std::uint64_t h);

} // namespace landau
