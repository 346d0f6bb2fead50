#pragma once

#include "hgs/sh_color.hpp"

#include <Eigen/Core>

#include <cmath>
#include <vector>

namespace hgs {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One Gaussian split by a plane through its mean into two halves that share
// position, shape and color but carry independent opacities.
struct HalfGaussianPrimitive {
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation{1.0, 0.0, 0.0, 0.0}; // (w, x, y, z)
    std::vector<Eigen::Vector3d> sh_coeffs{Eigen::Vector3d::Zero()};
    Eigen::Vector3d normal{0.0, 0.0, 1.0};        // split-plane normal, world frame
    double raw_opacity_a = 0.0;                   // logit of the opacity on the +normal side
    double raw_opacity_b = 0.0;                   // logit of the opacity on the -normal side

    double opacity_a() const { return sigmoid(raw_opacity_a); }
    double opacity_b() const { return sigmoid(raw_opacity_b); }
};

struct CameraModel {
    Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    double near_clip = 0.01;

    Eigen::Matrix3d rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_cam.topRightCorner<3, 1>(); }
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

    // Throws InvalidArgument when an invariant does not hold.
    void validate() const;
};

// Camera looking from `eye` towards `target`; +y of the image points along -up.
CameraModel look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up, double focal, int width, int height);

struct Scene {
    std::vector<HalfGaussianPrimitive> primitives;
    int sh_degree = 0;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();

    // Throws EmptyScene for no primitives, InvalidArgument for inconsistent SH
    // lengths, zero normals or zero quaternions.
    void validate() const;
};

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q);

// Sigma = R S S^T R^T with S = diag(exp(log_scale)).
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& rotation);

// Low-pass filter added to the projected covariance diagonal (pixels^2).
inline constexpr double kCovarianceDilation = 0.3;
// Ray-space frames whose covariance condition number exceeds this are
// rendered as full Gaussians.
inline constexpr double kDegenerateCondition = 1e8;

struct ProjectedCovariance {
    Eigen::Matrix2d cov2d;  // dilated screen covariance
    Eigen::Vector2d mu_hat; // pixels
    double depth = 0.0;     // camera-space z
};

// Throws CulledBehindCamera when camera-space z <= near_clip.
ProjectedCovariance project_covariance(const Eigen::Matrix3d& sigma, const Eigen::Vector3d& mu,
                                       const CameraModel& cam);

// Ray-space split normal for a primitive at mu. Throws CulledBehindCamera, or
// DegenerateFrame when the ray-space covariance is numerically singular.
Eigen::Vector3d project_normal(const Eigen::Vector3d& normal, const Eigen::Matrix3d& sigma,
                               const Eigen::Vector3d& mu, const CameraModel& cam);

// Whitening of a ray-space Gaussian whose third axis is the integration
// direction. With V = L L^T (L lower triangular) the map y = L^{-1} x keeps
// the third axis aligned, so the pixel offsets fix (y1, y2).
struct WhitenedFrame {
    Eigen::Matrix2d whiten2d; // inverse of the leading 2x2 block of L
    Eigen::Vector3d n_ray;    // unit split normal in the whitened frame
    double axial_scale = 0.0; // L(2,2): length along the ray per unit whitened z
    bool degenerate = false;
};

// ray_cov: 3x3 ray-space covariance; ray_normal: plane normal expressed in
// ray-space coordinates (need not be unit).
WhitenedFrame whiten_ray_space(const Eigen::Matrix3d& ray_cov, const Eigen::Vector3d& ray_normal);

} // namespace hgs
