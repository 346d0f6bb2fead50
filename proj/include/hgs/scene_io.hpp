#pragma once

#include "hgs/geometry.hpp"
#include "hgs/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hgs {

// ---- point files -----------------------------------------------------------

// Binary little-endian PLY, one vertex per primitive pair. Properties, in
// order: x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3
// opacity_2, all double. f_rest is channel-major as in 3D-GS.
void save_scene(const Scene& scene, const std::filesystem::path& path);

// Throws MalformedHeader, MissingProperty (naming the field), TruncatedPayload,
// InvalidArgument for zero normals.
Scene load_scene(const std::filesystem::path& path);

// Every vertex property of a point file, converted to double, keyed by name
// in header order.
struct PlyColumns {
    std::size_t count = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> columns;

    // nullptr when absent.
    const std::vector<double>* find(const std::string& name) const;
};

PlyColumns read_ply_columns(const std::filesystem::path& path);

// True for half-Gaussian scenes (point files carrying opacity_2).
bool has_second_opacity(const std::filesystem::path& path);

enum class NormalInit { ZeroPlusJitter, RandomUnit };

// Loads a plain 3D-GS point file (single opacity). Both halves get the stored
// opacity, so the result renders like the source model; normals are drawn
// per `init` from a generator seeded with `seed`.
Scene import_3dgs(const std::filesystem::path& path, NormalInit init, std::uint64_t seed);

// Writes a plain 3D-GS point file (float32, normals zero). The single opacity
// is the logit of (alpha1 + alpha2) / 2.
void export_3dgs(const Scene& scene, const std::filesystem::path& path);

struct PointCloud {
    std::vector<Eigen::Vector3d> positions;
    std::vector<Eigen::Vector3d> colors; // [0, 1]
};

// PLY with x y z and red green blue (uchar or float).
PointCloud load_point_cloud(const std::filesystem::path& path);
void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path);

inline constexpr double kMinInitScale = 1e-7;

// One primitive per point: isotropic scale from the mean distance to the
// three nearest neighbours, identity rotation, DC color from RGB, both
// opacities 0.1, random unit normal. Throws EmptyPointCloud.
Scene init_from_points(const PointCloud& cloud, int sh_degree, std::uint64_t seed,
                       const Eigen::Vector3d& background = Eigen::Vector3d::Zero());

// ---- cameras ---------------------------------------------------------------

struct CameraEntry {
    CameraModel camera;
    std::string image; // path relative to the camera file's directory
    bool test = false;
};

// Native JSON camera file or COLMAP text model directory (cameras.txt +
// images.txt, PINHOLE / SIMPLE_PINHOLE). Entries are ordered by image name.
// Throws UnsupportedCameraModel, ParseError (with line number), IoError.
std::vector<CameraEntry> load_cameras(const std::filesystem::path& path);

void save_cameras(const std::vector<CameraEntry>& cameras, const std::filesystem::path& path);

// Unit quaternion (w, x, y, z) for a rotation matrix.
Eigen::Vector4d matrix_to_quaternion(const Eigen::Matrix3d& r);

// ---- images ----------------------------------------------------------------

// 8-bit PNG to H x W x 3 in [0, 1]. Throws DecodeError, UnsupportedBitDepth.
Image read_image(const std::filesystem::path& path);

// 1- or 3-channel image, values clamped to [0, 1] and rounded half-to-even.
void write_image(const Image& image, const std::filesystem::path& path);

// Decoded 8-bit samples for an image, exactly as write_image would store them.
std::vector<std::uint8_t> quantize_image(const Image& image);

} // namespace hgs
