#pragma once

#include <Eigen/Core>

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>

namespace hgs {

// Below this |n3| the split plane contains the viewing ray and the erf term
// is replaced by its sign limit.
inline constexpr double kSingularNormal = 1e-6;
// Per-splat blend weight ceiling.
inline constexpr double kMaxSplatWeight = 0.99;

namespace detail {
// Taylor coefficients of erf about node k / kErfNodesPerUnit.
struct ErfNode {
    double c0, c1, c2, c3;
};
inline constexpr int kErfNodesPerUnit = 128;
inline constexpr double kErfRange = 6.0; // erf rounds to 1 in double beyond this
inline constexpr double kRoundingShift = 6755399441055744.0; // 1.5 * 2^52
extern const ErfNode* const erf_nodes;
} // namespace detail

// erf from a cubic expansion about the nearest of 128 nodes per unit on
// [0, 6]; |error| < 1e-10, exactly odd, erf(0) = 0.
inline double kernel_erf(double x) {
    const double ax = std::abs(x);
    if (!(ax < detail::kErfRange)) return std::isnan(x) ? x : std::copysign(1.0, x);
    // Adding 1.5 * 2^52 rounds to the nearest integer and leaves it in the
    // low mantissa bits.
    const double shifted = ax * detail::kErfNodesPerUnit + detail::kRoundingShift;
    const double node = shifted - detail::kRoundingShift;
    const auto index = static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(shifted));
    const double delta = ax - node * (1.0 / detail::kErfNodesPerUnit);
    const detail::ErfNode& c = detail::erf_nodes[index];
    const double v = c.c0 + delta * (c.c1 + delta * (c.c2 + delta * c.c3));
    return std::copysign(v, x);
}

// Derivative of kernel_erf (the expansion differentiated, so it matches the
// forward values to table accuracy); zero beyond the table range.
inline double kernel_erf_derivative(double x) {
    const double ax = std::abs(x);
    if (!(ax < detail::kErfRange)) return 0.0;
    const double shifted = ax * detail::kErfNodesPerUnit + detail::kRoundingShift;
    const double node = shifted - detail::kRoundingShift;
    const auto index = static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(shifted));
    const double delta = ax - node * (1.0 / detail::kErfNodesPerUnit);
    const detail::ErfNode& c = detail::erf_nodes[index];
    return c.c1 + delta * (2.0 * c.c2 + delta * 3.0 * c.c3);
}

namespace debug {
// Negates split_erf everywhere it is used. Exists so `hgs verify` can prove
// its oracle suites catch a sign error; never set in normal operation.
inline std::atomic<bool> flip_erf_sign{false};
} // namespace debug

enum class HalfSide { Positive, Negative };

// Unnormalized Gaussian restricted to one side of the plane n^T (x - mu) = 0.
// The plane itself belongs to the positive side.
double half_gaussian_density(const Eigen::Vector3d& x, const Eigen::Vector3d& mu,
                             const Eigen::Matrix3d& sigma, const Eigen::Vector3d& normal, HalfSide side);

// erf((n1 u1 + n2 u2) / (sqrt(2) |n3|)) in [-1, 1], with the sign limit for
// |n3| < kSingularNormal. Dividing by |n3| (not n3) keeps the result the
// mass fraction of the +n side for either orientation of the normal.
inline double split_erf(const Eigen::Vector3d& n_ray, const Eigen::Vector2d& u) {
    const double num = n_ray[0] * u[0] + n_ray[1] * u[1];
    const double n3 = std::abs(n_ray[2]);
    const double e = n3 < kSingularNormal ? (num > 0.0 ? 1.0 : (num < 0.0 ? -1.0 : 0.0))
                                          : kernel_erf(num / (M_SQRT2 * n3));
    return debug::flip_erf_sign.load(std::memory_order_relaxed) ? -e : e;
}

// Scaling factor of the positive half's line integral relative to half the
// full Gaussian's: 1 + split_erf, in [0, 2].
inline double erf_scale(const Eigen::Vector3d& n_ray, const Eigen::Vector2d& u) {
    return 1.0 + split_erf(n_ray, u);
}

// Everything needed to evaluate one paired half-Gaussian on screen.
struct SplatResponseParams {
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();    // inverse screen covariance
    Eigen::Vector2d mu_hat = Eigen::Vector2d::Zero();
    Eigen::Vector3d n_ray{0.0, 0.0, 1.0};
    double alpha1 = 0.5;
    double alpha2 = 0.5;
    Eigen::Matrix2d whiten2d = Eigen::Matrix2d::Identity(); // centered pixel offset -> whitened frame
};

// Opacity-weighted pair response before the weight ceiling:
// 0.5 [(a1 + a2) + (a1 - a2) e] g.
inline double paired_weight(double alpha1, double alpha2, double erf_term, double gauss) {
    return 0.5 * ((alpha1 + alpha2) + (alpha1 - alpha2) * erf_term) * gauss;
}

// Screen-space response of a paired half-Gaussian at a pixel, clamped to
// [0, kMaxSplatWeight].
double paired_response(const SplatResponseParams& p, const Eigen::Vector2d& pixel);

// Same response for a full Gaussian of opacity alpha (the alpha1 == alpha2 case).
double full_gaussian_response(const Eigen::Matrix2d& conic, const Eigen::Vector2d& mu_hat, double alpha,
                              const Eigen::Vector2d& pixel);

// Closed-form integral of alpha1 * (positive half) + alpha2 * (negative half)
// of the unnormalized Gaussian along an arbitrary ray (orthographic ray
// frame built around ray_dir). This composes the same whitening and erf
// building blocks the rasterizer uses.
double closed_form_line_integral(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                                 const Eigen::Vector3d& normal, double alpha1, double alpha2,
                                 const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir);

// Brute-force reference for closed_form_line_integral: adaptive Simpson
// quadrature of the piecewise integrand along the ray, split at the plane
// crossing, over +-8 sigma around the peak. Throws QuadratureNonConvergence.
double oracle_line_integral(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                            const Eigen::Vector3d& normal, double alpha1, double alpha2,
                            const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir);

// Axis-aligned form with per-axis deviations, for a zero-mean half-Gaussian
// of density 2 / (2 pi)^{3/2} exp(...) on the +n side:
// e^{-(x^2/sx^2 + y^2/sy^2)/2} (|sz| + sz erf((n1 x + n2 y) / (sqrt2 |n3| sz))) / (2 pi).
double general_sigma_integral(double x, double y, double sigma_x, double sigma_y, double sigma_z,
                              const Eigen::Vector3d& normal);

} // namespace hgs
