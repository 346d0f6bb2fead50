#pragma once

#include "hgs/geometry.hpp"
#include "hgs/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace hgs {

inline constexpr int kTileSize = 16;
inline constexpr double kMinTransmittance = 1e-4;
// A splat contributes nothing beyond Mahalanobis distance 3, the same bound
// that sizes its tile footprint.
inline constexpr double kCutoffPower = -4.5;

enum class KernelMode {
    HalfGaussian, // paired half-Gaussians with the erf split term
    FullGaussian, // reference 3D-GS kernel with opacity (alpha1 + alpha2) / 2
};

struct RenderOptions {
    KernelMode kernel = KernelMode::HalfGaussian;
    int workers = 0; // 0: default_worker_count()
};

struct TileRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0; // half-open tile index ranges
    bool empty() const { return x1 <= x0 || y1 <= y0; }
};

// A primitive projected into one view.
struct ScreenSplat {
    int prim_index = -1;
    Eigen::Vector2d mu_hat = Eigen::Vector2d::Zero();
    double conic00 = 0.0, conic01 = 0.0, conic11 = 0.0;
    double w00 = 1.0, w10 = 0.0, w11 = 1.0; // lower-triangular whiten2d
    Eigen::Vector3d n_ray{0.0, 0.0, 1.0};
    double alpha1 = 0.0, alpha2 = 0.0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double depth = 0.0;
    bool degenerate = false;
    TileRect tile_span;
};

struct RenderOutput {
    Image color; // H x W x 3
    Image alpha; // H x W x 1
    Image depth; // H x W x 1, alpha-weighted mean camera z, 0 where alpha == 0

    // Number of sorted splats composited per pixel before the transmittance
    // cutoff, and the transmittance left after them.
    std::vector<std::uint32_t> per_pixel_terminal_index;
    std::vector<double> final_transmittance;

    // Bookkeeping replayed by render_backward.
    CameraModel camera;
    KernelMode kernel = KernelMode::HalfGaussian;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    std::size_t primitive_count = 0;
    std::vector<ScreenSplat> splats;
    std::vector<std::uint32_t> tile_instances;                  // splat indices, per tile, depth-sorted
    std::vector<std::pair<std::uint32_t, std::uint32_t>> tile_ranges; // [begin, end) into tile_instances
    int tiles_x = 0;
    int tiles_y = 0;
};

struct PrimitiveGradient {
    Eigen::Vector3d d_mu = Eigen::Vector3d::Zero();
    Eigen::Vector3d d_log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d d_rotation = Eigen::Vector4d::Zero();
    std::vector<Eigen::Vector3d> d_sh;
    Eigen::Vector3d d_normal = Eigen::Vector3d::Zero();
    double d_raw_opacity_a = 0.0;
    double d_raw_opacity_b = 0.0;
};

// Gradients aligned index-for-index with scene.primitives, plus the
// per-view density-control statistics.
struct GradientSet {
    std::vector<PrimitiveGradient> prims;
    std::vector<double> screen_grad_norm; // |dL/d mu_hat| in NDC units
    std::vector<int> touch_count;         // 1 if the primitive was rasterized in this view
};

// Throws EmptyScene, ImageTooLarge, InvalidArgument.
RenderOutput render(const Scene& scene, const CameraModel& cam, const RenderOptions& options = {});

// Gradients of sum(d_color * out.color) with respect to every learnable
// parameter. Throws MismatchedForward when out does not match scene/d_color.
GradientSet render_backward(const Scene& scene, const CameraModel& cam, const RenderOutput& out,
                            const Image& d_color, const RenderOptions& options = {});

// Camera-space normals from the depth channel, unit length, zero where
// alpha < 0.5.
Image render_depth_normalmap(const RenderOutput& out);

} // namespace hgs
