#pragma once

// Scalar-generic projection of one primitive into a view. Instantiated with
// double for rendering and with ceres::Jet for the backward pass, so both
// routes share one definition of the forward math.

#include "hgs/geometry.hpp"
#include "hgs/sh_color.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <span>

namespace hgs::detail {

template <typename T> using Vec2 = Eigen::Matrix<T, 2, 1>;
template <typename T> using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T> using Vec4 = Eigen::Matrix<T, 4, 1>;
template <typename T> using Mat3 = Eigen::Matrix<T, 3, 3>;

inline double value_of(double x) { return x; }
template <typename J> double value_of(const J& jet) { return jet.a; }

template <typename T> Mat3<T> quat_to_matrix(const Vec4<T>& q_raw) {
    using std::sqrt;
    const T inv = T(1.0) / sqrt(q_raw.squaredNorm());
    const T w = q_raw[0] * inv, x = q_raw[1] * inv, y = q_raw[2] * inv, z = q_raw[3] * inv;
    Mat3<T> r;
    r << T(1.0) - T(2.0) * (y * y + z * z), T(2.0) * (x * y - w * z), T(2.0) * (x * z + w * y),
        T(2.0) * (x * y + w * z), T(1.0) - T(2.0) * (x * x + z * z), T(2.0) * (y * z - w * x),
        T(2.0) * (x * z - w * y), T(2.0) * (y * z + w * x), T(1.0) - T(2.0) * (x * x + y * y);
    return r;
}

template <typename T> Mat3<T> covariance(const Vec3<T>& log_scale, const Vec4<T>& rotation) {
    using std::exp;
    const Mat3<T> r = quat_to_matrix(rotation);
    Mat3<T> m;
    for (int c = 0; c < 3; ++c) m.col(c) = r.col(c) * exp(log_scale[c]);
    Mat3<T> s;
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            s(i, j) = m.row(i).dot(m.row(j));
            s(j, i) = s(i, j);
        }
    }
    return s;
}

// Lower-triangular factor of a symmetric 3x3 matrix plus everything derived
// from it. ok == false when a pivot is not positive.
template <typename T> struct RayFrame {
    bool ok = false;
    T l00{}, l10{}, l11{}, l20{}, l21{}, l22{};
    T w00{}, w10{}, w11{}; // inverse of [[l00, 0], [l10, l11]]
    Vec3<T> n_ray = Vec3<T>::Zero();
};

template <typename T> RayFrame<T> whiten(const Mat3<T>& v, const Vec3<T>& ray_normal) {
    using std::sqrt;
    RayFrame<T> f;
    if (!(value_of(v(0, 0)) > 0.0)) return f;
    f.l00 = sqrt(v(0, 0));
    f.l10 = v(1, 0) / f.l00;
    f.l20 = v(2, 0) / f.l00;
    const T p1 = v(1, 1) - f.l10 * f.l10;
    if (!(value_of(p1) > 0.0)) return f;
    f.l11 = sqrt(p1);
    f.l21 = (v(2, 1) - f.l20 * f.l10) / f.l11;
    const T p2 = v(2, 2) - f.l20 * f.l20 - f.l21 * f.l21;
    if (!(value_of(p2) > 0.0)) return f;
    f.l22 = sqrt(p2);

    f.w00 = T(1.0) / f.l00;
    f.w11 = T(1.0) / f.l11;
    f.w10 = -f.l10 / (f.l00 * f.l11);

    // Plane normals map through the inverse transpose of the whitening
    // transform L^{-1}, i.e. through L^T.
    Vec3<T> n;
    n[0] = f.l00 * ray_normal[0] + f.l10 * ray_normal[1] + f.l20 * ray_normal[2];
    n[1] = f.l11 * ray_normal[1] + f.l21 * ray_normal[2];
    n[2] = f.l22 * ray_normal[2];
    const T len = sqrt(n.squaredNorm());
    if (!(value_of(len) > 0.0)) return f;
    f.n_ray = n / len;
    f.ok = true;
    return f;
}

inline double condition_number(const Eigen::Matrix3d& v) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver;
    solver.computeDirect(v, Eigen::EigenvaluesOnly);
    const Eigen::Vector3d ev = solver.eigenvalues();
    if (!(ev[0] > 0.0)) return std::numeric_limits<double>::infinity();
    return ev[2] / ev[0];
}

template <typename T> struct SplatGeometry {
    bool culled = true;
    bool degenerate = false;
    Vec2<T> mu_hat = Vec2<T>::Zero();
    T depth{};
    T cov00{}, cov01{}, cov11{};
    T conic00{}, conic01{}, conic11{};
    T w00{}, w10{}, w11{};
    Vec3<T> n_ray = Vec3<T>::Zero();
};

// Perspective ray-space projection. The ray-space map is the affine
// approximation x_ray = J3 (W x) with J3 the pinhole Jacobian in pixels plus
// a depth row scaled by fx / z, so the third ray-space axis is the viewing ray
// through mu and all three axes are in pixel units.
template <typename T>
SplatGeometry<T> project_splat(const Vec3<T>& mu, const Mat3<T>& sigma, const Vec3<T>& normal,
                               const CameraModel& cam, double dilation = kCovarianceDilation) {
    using std::sqrt;
    SplatGeometry<T> out;
    const Eigen::Matrix3d rv = cam.rotation();
    const Eigen::Vector3d tv = cam.translation();
    const Mat3<T> rv_t = rv.cast<T>();
    const Vec3<T> t = rv_t * mu + tv.cast<T>();
    if (!(value_of(t[2]) > cam.near_clip)) return out;
    out.culled = false;

    const T inv_z = T(1.0) / t[2];
    const T a = T(cam.fx) * inv_z;
    const T c = T(cam.fy) * inv_z;
    const T b = -T(cam.fx) * t[0] * inv_z * inv_z;
    const T d = -T(cam.fy) * t[1] * inv_z * inv_z;
    out.mu_hat[0] = T(cam.fx) * t[0] * inv_z + T(cam.cx);
    out.mu_hat[1] = T(cam.fy) * t[1] * inv_z + T(cam.cy);
    out.depth = t[2];

    Mat3<T> j3;
    j3 << a, T(0.0), b, T(0.0), c, d, T(0.0), T(0.0), a;
    const Mat3<T> m = j3 * rv_t;
    Mat3<T> v = m * sigma * m.transpose();
    v(0, 0) += T(dilation);
    v(1, 1) += T(dilation);
    // Symmetrize so the factorization sees exactly symmetric input.
    v(1, 0) = v(0, 1);
    v(2, 0) = v(0, 2);
    v(2, 1) = v(1, 2);

    out.cov00 = v(0, 0);
    out.cov01 = v(0, 1);
    out.cov11 = v(1, 1);
    const T det = out.cov00 * out.cov11 - out.cov01 * out.cov01;
    const T inv_det = T(1.0) / det;
    out.conic00 = out.cov11 * inv_det;
    out.conic01 = -out.cov01 * inv_det;
    out.conic11 = out.cov00 * inv_det;

    // Normal in camera space, then through J3^{-T}.
    const T inv_len = T(1.0) / sqrt(normal.squaredNorm());
    const Vec3<T> n_cam = rv_t * (normal * inv_len);
    Vec3<T> n_ray_space;
    n_ray_space[0] = n_cam[0] / a;
    n_ray_space[1] = n_cam[1] / c;
    n_ray_space[2] = (n_cam[2] - b * n_ray_space[0] - d * n_ray_space[1]) / a;

    Eigen::Matrix3d v_value;
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) v_value(r, k) = value_of(v(r, k));
    const RayFrame<T> frame = whiten(v, n_ray_space);
    if (!frame.ok || condition_number(v_value) > kDegenerateCondition) {
        out.degenerate = true;
        out.w00 = T(1.0);
        out.w10 = T(0.0);
        out.w11 = T(1.0);
        out.n_ray = Vec3<T>(T(0.0), T(0.0), T(1.0));
        return out;
    }
    out.w00 = frame.w00;
    out.w10 = frame.w10;
    out.w11 = frame.w11;
    out.n_ray = frame.n_ray;
    return out;
}

// View-dependent color from SH coefficients; direction from the camera
// center to mu. Floored at zero per channel.
template <typename T>
Vec3<T> sh_color(const Vec3<T>& mu, const Eigen::Vector3d& cam_center,
                 std::span<const Eigen::Vector3d> coeffs, int degree) {
    using std::sqrt;
    Vec3<T> dir = mu - cam_center.cast<T>();
    dir /= sqrt(dir.squaredNorm());
    T basis[kMaxShCoeffs];
    sh::eval_basis(dir[0], dir[1], dir[2], degree, basis);
    Vec3<T> rgb(T(0.5), T(0.5), T(0.5));
    const int count = sh_coeff_count(degree);
    for (int i = 0; i < count; ++i) rgb += basis[i] * coeffs[i].cast<T>();
    for (int k = 0; k < 3; ++k) {
        if (value_of(rgb[k]) < 0.0) rgb[k] = T(0.0);
    }
    return rgb;
}

} // namespace hgs::detail
