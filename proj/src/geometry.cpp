#include "hgs/geometry.hpp"

#include "hgs/detail/projection.hpp"
#include "hgs/error.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <string>

namespace hgs {

void CameraModel::validate() const {
    const Eigen::Matrix3d r = rotation();
    const double ortho_err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho_err < 1e-6)) {
        throw Error(ErrorKind::InvalidArgument, "camera rotation is not orthonormal");
    }
    if (!(fx > 0.0 && fy > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidArgument, "image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw Error(ErrorKind::InvalidArgument, "principal point outside the image");
    }
    if (!(near_clip > 0.0)) throw Error(ErrorKind::InvalidArgument, "near_clip must be positive");
}

CameraModel look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up, double focal, int width, int height) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    const Eigen::Vector3d right = forward.cross(up).normalized();
    const Eigen::Vector3d down = forward.cross(right);
    Eigen::Matrix3d r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    CameraModel cam;
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = r;
    cam.world_to_cam.topRightCorner<3, 1>() = -r * eye;
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    return cam;
}

void Scene::validate() const {
    if (primitives.empty()) throw Error(ErrorKind::EmptyScene, "scene has no primitives");
    if (sh_degree < 0 || sh_degree > kMaxShDegree) {
        throw Error(ErrorKind::InvalidArgument, "sh_degree must be in [0, 3]");
    }
    const auto expected = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto& p = primitives[i];
        if (p.sh_coeffs.size() != expected) {
            throw Error(ErrorKind::InvalidArgument,
                        "primitive " + std::to_string(i) + " has " + std::to_string(p.sh_coeffs.size()) +
                            " sh coefficients, expected " + std::to_string(expected));
        }
        if (!(p.normal.norm() > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "primitive " + std::to_string(i) + " has a zero normal");
        }
        if (!(p.rotation.norm() > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "primitive " + std::to_string(i) + " has a zero quaternion");
        }
    }
}

Eigen::Matrix3d quaternion_to_matrix(const Eigen::Vector4d& q) {
    if (!(q.norm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero quaternion");
    return detail::quat_to_matrix<double>(q);
}

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& log_scale, const Eigen::Vector4d& rotation) {
    if (!(rotation.norm() > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero quaternion");
    return detail::covariance<double>(log_scale, rotation);
}

ProjectedCovariance project_covariance(const Eigen::Matrix3d& sigma, const Eigen::Vector3d& mu,
                                       const CameraModel& cam) {
    const auto g = detail::project_splat<double>(mu, sigma, Eigen::Vector3d::UnitZ(), cam);
    if (g.culled) throw Error(ErrorKind::CulledBehindCamera, "camera-space z <= near_clip");
    ProjectedCovariance out;
    out.cov2d << g.cov00, g.cov01, g.cov01, g.cov11;
    out.mu_hat = g.mu_hat;
    out.depth = g.depth;
    return out;
}

Eigen::Vector3d project_normal(const Eigen::Vector3d& normal, const Eigen::Matrix3d& sigma,
                               const Eigen::Vector3d& mu, const CameraModel& cam) {
    const auto g = detail::project_splat<double>(mu, sigma, normal, cam);
    if (g.culled) throw Error(ErrorKind::CulledBehindCamera, "camera-space z <= near_clip");
    if (g.degenerate) throw Error(ErrorKind::DegenerateFrame, "ray-space covariance is numerically singular");
    return g.n_ray;
}

WhitenedFrame whiten_ray_space(const Eigen::Matrix3d& ray_cov, const Eigen::Vector3d& ray_normal) {
    Eigen::Matrix3d v = ray_cov;
    v(1, 0) = v(0, 1);
    v(2, 0) = v(0, 2);
    v(2, 1) = v(1, 2);
    const auto f = detail::whiten<double>(v, ray_normal);
    WhitenedFrame out;
    out.degenerate = !f.ok || detail::condition_number(v) > kDegenerateCondition;
    if (!f.ok) {
        out.whiten2d.setIdentity();
        out.n_ray = Eigen::Vector3d::UnitZ();
        return out;
    }
    out.whiten2d << f.w00, 0.0, f.w10, f.w11;
    out.n_ray = f.n_ray;
    out.axial_scale = f.l22;
    return out;
}

} // namespace hgs
