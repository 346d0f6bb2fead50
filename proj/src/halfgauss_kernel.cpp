#include "hgs/halfgauss_kernel.hpp"

#include "hgs/error.hpp"
#include "hgs/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace hgs {

namespace detail {
namespace {

std::vector<ErfNode> build_erf_nodes() {
    constexpr int n = static_cast<int>(kErfRange * kErfNodesPerUnit) + 1;
    const long double two_over_sqrt_pi = 2.0L / std::sqrt(3.14159265358979323846264338327950288L);
    std::vector<ErfNode> nodes(n);
    for (int i = 0; i < n; ++i) {
        const long double x = static_cast<long double>(i) / kErfNodesPerUnit;
        const long double d1 = two_over_sqrt_pi * std::exp(-x * x);
        const long double d2 = -2.0L * x * d1;
        const long double d3 = (4.0L * x * x - 2.0L) * d1;
        nodes[i] = {static_cast<double>(std::erf(x)), static_cast<double>(d1), static_cast<double>(d2 / 2.0L),
                    static_cast<double>(d3 / 6.0L)};
    }
    return nodes;
}

const std::vector<ErfNode> erf_storage = build_erf_nodes();

} // namespace

const ErfNode* const erf_nodes = erf_storage.data();

} // namespace detail

double half_gaussian_density(const Eigen::Vector3d& x, const Eigen::Vector3d& mu,
                             const Eigen::Matrix3d& sigma, const Eigen::Vector3d& normal, HalfSide side) {
    const Eigen::Vector3d d = x - mu;
    const bool positive = normal.dot(d) >= 0.0;
    if (positive != (side == HalfSide::Positive)) return 0.0;
    return std::exp(-0.5 * d.dot(sigma.ldlt().solve(d)));
}

double paired_response(const SplatResponseParams& p, const Eigen::Vector2d& pixel) {
    const Eigen::Vector2d d = pixel - p.mu_hat;
    const double g = std::exp(-0.5 * d.dot(p.conic * d));
    const double e = split_erf(p.n_ray, p.whiten2d * d);
    return std::clamp(paired_weight(p.alpha1, p.alpha2, e, g), 0.0, kMaxSplatWeight);
}

double full_gaussian_response(const Eigen::Matrix2d& conic, const Eigen::Vector2d& mu_hat, double alpha,
                              const Eigen::Vector2d& pixel) {
    const Eigen::Vector2d d = pixel - mu_hat;
    const double g = std::exp(-0.5 * d.dot(conic * d));
    return std::clamp(alpha * g, 0.0, kMaxSplatWeight);
}

namespace {

// Orthonormal rows (e1, e2, dir): world -> orthographic ray frame.
Eigen::Matrix3d ray_frame(const Eigen::Vector3d& dir) {
    const Eigen::Vector3d d = dir.normalized();
    const Eigen::Vector3d helper =
        std::abs(d.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    const Eigen::Vector3d e1 = (helper - helper.dot(d) * d).normalized();
    const Eigen::Vector3d e2 = d.cross(e1);
    Eigen::Matrix3d r;
    r.row(0) = e1.transpose();
    r.row(1) = e2.transpose();
    r.row(2) = d.transpose();
    return r;
}

constexpr double kQuadratureTolerance = 1e-10; // relative
constexpr int kQuadratureMaxLevels = 20;
constexpr int kQuadratureMinLevels = 4;

struct SimpsonPanel {
    double a, m, b;
    double fa, fm, fb;
    double whole;
};

double simpson(double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive_simpson(const std::function<double(double)>& f, const SimpsonPanel& p, double tol, int level) {
    const double lm = 0.5 * (p.a + p.m);
    const double rm = 0.5 * (p.m + p.b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(p.a, p.m, p.fa, flm, p.fm);
    const double right = simpson(p.m, p.b, p.fm, frm, p.fb);
    const double delta = left + right - p.whole;
    if (level >= kQuadratureMinLevels && std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    if (level >= kQuadratureMaxLevels) {
        throw Error(ErrorKind::QuadratureNonConvergence,
                    "tolerance not reached within " + std::to_string(kQuadratureMaxLevels) + " levels");
    }
    return adaptive_simpson(f, {p.a, lm, p.m, p.fa, flm, p.fm, left}, 0.5 * tol, level + 1) +
           adaptive_simpson(f, {p.m, rm, p.b, p.fm, frm, p.fb, right}, 0.5 * tol, level + 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    if (!(b > a)) return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    return adaptive_simpson(f, {a, m, b, fa, fm, fb, simpson(a, b, fa, fm, fb)}, tol, 0);
}

} // namespace

double closed_form_line_integral(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                                 const Eigen::Vector3d& normal, double alpha1, double alpha2,
                                 const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir) {
    const Eigen::Matrix3d r = ray_frame(ray_dir);
    const Eigen::Matrix3d v = r * sigma * r.transpose();
    const Eigen::Vector3d mu_ray = r * (mu - ray_origin);
    const WhitenedFrame frame = whiten_ray_space(v, r * normal);

    // The ray sits at the ray-frame origin; offset from the projected mean.
    const Eigen::Vector2d offset = -mu_ray.head<2>();
    const Eigen::Matrix2d v2 = v.topLeftCorner<2, 2>();
    const double g = std::exp(-0.5 * offset.dot(v2.inverse() * offset));
    const double e = split_erf(frame.n_ray, frame.whiten2d * offset);
    return frame.axial_scale * std::sqrt(2.0 * M_PI) * paired_weight(alpha1, alpha2, e, g);
}

double oracle_line_integral(const Eigen::Vector3d& mu, const Eigen::Matrix3d& sigma,
                            const Eigen::Vector3d& normal, double alpha1, double alpha2,
                            const Eigen::Vector3d& ray_origin, const Eigen::Vector3d& ray_dir) {
    const Eigen::Vector3d d = ray_dir.normalized();
    const Eigen::Matrix3d precision = sigma.inverse();
    const Eigen::Vector3d to_mu = mu - ray_origin;

    const double curvature = d.dot(precision * d);
    const double t_peak = d.dot(precision * to_mu) / curvature;
    const double spread = 1.0 / std::sqrt(curvature);
    const double lo = t_peak - 8.0 * spread;
    const double hi = t_peak + 8.0 * spread;

    auto gauss = [&](double t) {
        const Eigen::Vector3d off = ray_origin + t * d - mu;
        return std::exp(-0.5 * off.dot(precision * off));
    };
    auto side_weight = [&](double t) {
        const Eigen::Vector3d off = ray_origin + t * d - mu;
        return normal.dot(off) >= 0.0 ? alpha1 : alpha2;
    };

    // Tolerance relative to the size of the integral, so rays far from the
    // mean are resolved as finely as rays through it.
    const double magnitude = gauss(t_peak) * spread;
    if (magnitude == 0.0) return 0.0;
    const double tol = kQuadratureTolerance * magnitude;

    // The integrand jumps where the ray crosses the split plane; integrate
    // each smooth piece separately with the opacity of the side it lies on.
    const double nd = normal.dot(d);
    if (nd != 0.0) {
        const double t_plane = normal.dot(to_mu) / nd;
        if (t_plane > lo && t_plane < hi) {
            return side_weight(0.5 * (lo + t_plane)) * integrate(gauss, lo, t_plane, 0.5 * tol) +
                   side_weight(0.5 * (t_plane + hi)) * integrate(gauss, t_plane, hi, 0.5 * tol);
        }
    }
    return side_weight(0.5 * (lo + hi)) * integrate(gauss, lo, hi, tol);
}

double general_sigma_integral(double x, double y, double sigma_x, double sigma_y, double sigma_z,
                              const Eigen::Vector3d& normal) {
    const double gauss = std::exp(-0.5 * (x * x / (sigma_x * sigma_x) + y * y / (sigma_y * sigma_y)));
    const double num = normal[0] * x + normal[1] * y;
    const double n3 = std::abs(normal[2]);
    double e;
    if (n3 < kSingularNormal) {
        e = num > 0.0 ? 1.0 : (num < 0.0 ? -1.0 : 0.0);
    } else {
        e = kernel_erf(num / (M_SQRT2 * n3 * sigma_z));
    }
    return gauss * (std::abs(sigma_z) + sigma_z * e) / (2.0 * M_PI);
}

} // namespace hgs
