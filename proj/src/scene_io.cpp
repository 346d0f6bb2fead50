#include "hgs/scene_io.hpp"

#include "hgs/error.hpp"
#include "hgs/sh_color.hpp"

#include <Eigen/Geometry>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace hgs {

static_assert(std::endian::native == std::endian::little, "point files are read by memcpy");

namespace {

// ---- minimal PLY table -------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> parse_ply_type(const std::string& s) {
    static const std::map<std::string, PlyType> types = {
        {"char", PlyType::Int8},     {"int8", PlyType::Int8},       {"uchar", PlyType::UInt8},
        {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},     {"int16", PlyType::Int16},
        {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},   {"int", PlyType::Int32},
        {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},     {"uint32", PlyType::UInt32},
        {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
        {"float64", PlyType::Float64}};
    const auto it = types.find(s);
    if (it == types.end()) return std::nullopt;
    return it->second;
}

std::size_t ply_size(PlyType t) {
    switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type;
    std::size_t offset;
};

struct PlyTable {
    std::size_t count = 0;
    std::size_t stride = 0;
    std::vector<PlyProperty> properties;
    std::vector<char> payload;

    const PlyProperty* find(const std::string& name) const {
        for (const auto& p : properties) {
            if (p.name == name) return &p;
        }
        return nullptr;
    }

    const PlyProperty& require(const std::string& name) const {
        const PlyProperty* p = find(name);
        if (!p) throw Error(ErrorKind::MissingProperty, "missing property '" + name + "'");
        return *p;
    }

    double get(std::size_t row, const PlyProperty& p) const {
        const char* src = payload.data() + row * stride + p.offset;
        auto load = [src]<typename T>(T) {
            T v;
            std::memcpy(&v, src, sizeof(T));
            return static_cast<double>(v);
        };
        switch (p.type) {
        case PlyType::Int8: return load(std::int8_t{});
        case PlyType::UInt8: return load(std::uint8_t{});
        case PlyType::Int16: return load(std::int16_t{});
        case PlyType::UInt16: return load(std::uint16_t{});
        case PlyType::Int32: return load(std::int32_t{});
        case PlyType::UInt32: return load(std::uint32_t{});
        case PlyType::Float32: return load(float{});
        case PlyType::Float64: return load(double{});
        }
        return 0.0;
    }
};

PlyTable read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());

    PlyTable table;
    std::string line;
    if (!std::getline(in, line) || line != "ply") {
        throw Error(ErrorKind::MalformedHeader, path.string() + ": missing 'ply' magic");
    }
    bool have_format = false;
    bool in_vertex = false;
    bool seen_vertex = false;
    for (;;) {
        if (!std::getline(in, line)) throw Error(ErrorKind::MalformedHeader, "header not terminated");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "end_header") break;
        if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) continue;
        if (keyword == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            if (fmt != "binary_little_endian") {
                throw Error(ErrorKind::MalformedHeader, "unsupported format '" + fmt + "'");
            }
            have_format = true;
        } else if (keyword == "element") {
            std::string name;
            long long count = -1;
            ls >> name >> count;
            if (seen_vertex || name != "vertex" || count < 0 || ls.fail()) {
                throw Error(ErrorKind::MalformedHeader, "expected a single 'element vertex <count>'");
            }
            table.count = static_cast<std::size_t>(count);
            in_vertex = seen_vertex = true;
        } else if (keyword == "property") {
            std::string type_name, name;
            ls >> type_name >> name;
            const auto type = parse_ply_type(type_name);
            if (!in_vertex || !type || name.empty()) {
                throw Error(ErrorKind::MalformedHeader, "bad property line '" + line + "'");
            }
            table.properties.push_back({name, *type, table.stride});
            table.stride += ply_size(*type);
        } else {
            throw Error(ErrorKind::MalformedHeader, "unknown header line '" + line + "'");
        }
    }
    if (!have_format || !seen_vertex) throw Error(ErrorKind::MalformedHeader, "missing format or vertex element");

    table.payload.resize(table.count * table.stride);
    in.read(table.payload.data(), static_cast<std::streamsize>(table.payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != table.payload.size()) {
        throw Error(ErrorKind::TruncatedPayload, path.string() + ": expected " +
                                                     std::to_string(table.payload.size()) + " bytes of vertex data");
    }
    return table;
}

class PlyWriter {
public:
    PlyWriter(const std::filesystem::path& path, std::size_t count, const std::vector<std::string>& names,
              const std::string& type)
        : out_(path, std::ios::binary) {
        if (!out_) throw Error(ErrorKind::IoError, "cannot write " + path.string());
        out_ << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << '\n';
        for (const auto& n : names) out_ << "property " << type << ' ' << n << '\n';
        out_ << "end_header\n";
    }
    template <typename T> void put(T v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(T)); }
    void finish(const std::filesystem::path& path) {
        out_.flush();
        if (!out_) throw Error(ErrorKind::IoError, "failed writing " + path.string());
    }

private:
    std::ofstream out_;
};

std::vector<std::string> scene_property_names(int sh_degree, bool second_opacity) {
    std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) names.push_back("f_rest_" + std::to_string(i));
    names.push_back("opacity");
    for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
    if (second_opacity) names.push_back("opacity_2");
    return names;
}

// Flattened 3D-GS property values of one primitive (without opacity_2).
std::vector<double> primitive_values(const HalfGaussianPrimitive& p, int sh_degree, double opacity) {
    std::vector<double> v = {p.mu.x(), p.mu.y(), p.mu.z(), p.normal.x(), p.normal.y(), p.normal.z()};
    for (int c = 0; c < 3; ++c) v.push_back(p.sh_coeffs[0][c]);
    const int k = sh_coeff_count(sh_degree);
    for (int c = 0; c < 3; ++c) {
        for (int i = 1; i < k; ++i) v.push_back(p.sh_coeffs[i][c]);
    }
    v.push_back(opacity);
    for (int i = 0; i < 3; ++i) v.push_back(p.log_scale[i]);
    for (int i = 0; i < 4; ++i) v.push_back(p.rotation[i]);
    return v;
}

int infer_sh_degree(const PlyTable& t) {
    int rest = 0;
    while (t.find("f_rest_" + std::to_string(rest))) ++rest;
    if (rest % 3 != 0) throw Error(ErrorKind::MalformedHeader, "f_rest count not divisible by 3");
    const int degree = sh_degree_for_count(static_cast<std::size_t>(rest / 3 + 1));
    if (degree < 0) throw Error(ErrorKind::MalformedHeader, "f_rest count does not match an SH degree <= 3");
    return degree;
}

// Reads everything except the opacities and normal.
HalfGaussianPrimitive read_common(const PlyTable& t, std::size_t row, int sh_degree) {
    HalfGaussianPrimitive p;
    const char* xyz[] = {"x", "y", "z"};
    for (int i = 0; i < 3; ++i) p.mu[i] = t.get(row, t.require(xyz[i]));
    const int k = sh_coeff_count(sh_degree);
    p.sh_coeffs.assign(static_cast<std::size_t>(k), Eigen::Vector3d::Zero());
    for (int c = 0; c < 3; ++c) p.sh_coeffs[0][c] = t.get(row, t.require("f_dc_" + std::to_string(c)));
    for (int c = 0; c < 3; ++c) {
        for (int i = 1; i < k; ++i) {
            p.sh_coeffs[i][c] = t.get(row, t.require("f_rest_" + std::to_string(c * (k - 1) + i - 1)));
        }
    }
    for (int i = 0; i < 3; ++i) p.log_scale[i] = t.get(row, t.require("scale_" + std::to_string(i)));
    for (int i = 0; i < 4; ++i) p.rotation[i] = t.get(row, t.require("rot_" + std::to_string(i)));
    return p;
}

void require_all(const PlyTable& t, const std::vector<std::string>& names) {
    for (const auto& n : names) t.require(n);
}

} // namespace

const std::vector<double>* PlyColumns::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return &columns[i];
    }
    return nullptr;
}

PlyColumns read_ply_columns(const std::filesystem::path& path) {
    const PlyTable t = read_ply(path);
    PlyColumns out;
    out.count = t.count;
    for (const auto& prop : t.properties) {
        out.names.push_back(prop.name);
        std::vector<double> col(t.count);
        for (std::size_t row = 0; row < t.count; ++row) col[row] = t.get(row, prop);
        out.columns.push_back(std::move(col));
    }
    return out;
}

bool has_second_opacity(const std::filesystem::path& path) {
    return read_ply(path).find("opacity_2") != nullptr;
}

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    scene.validate();
    const auto names = scene_property_names(scene.sh_degree, true);
    PlyWriter w(path, scene.primitives.size(), names, "double");
    for (const auto& p : scene.primitives) {
        for (double v : primitive_values(p, scene.sh_degree, p.raw_opacity_a)) w.put(v);
        w.put(p.raw_opacity_b);
    }
    w.finish(path);
}

Scene load_scene(const std::filesystem::path& path) {
    const PlyTable t = read_ply(path);
    const int degree = infer_sh_degree(t);
    require_all(t, scene_property_names(degree, true));
    const auto& opacity = t.require("opacity");
    const auto& opacity2 = t.require("opacity_2");
    const auto& nx = t.require("nx");
    const auto& ny = t.require("ny");
    const auto& nz = t.require("nz");

    Scene scene;
    scene.sh_degree = degree;
    scene.primitives.reserve(t.count);
    for (std::size_t row = 0; row < t.count; ++row) {
        HalfGaussianPrimitive p = read_common(t, row, degree);
        p.normal = Eigen::Vector3d(t.get(row, nx), t.get(row, ny), t.get(row, nz));
        if (!(p.normal.norm() > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "primitive " + std::to_string(row) + " has a zero normal");
        }
        p.raw_opacity_a = t.get(row, opacity);
        p.raw_opacity_b = t.get(row, opacity2);
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

Scene import_3dgs(const std::filesystem::path& path, NormalInit init, std::uint64_t seed) {
    const PlyTable t = read_ply(path);
    const int degree = infer_sh_degree(t);
    require_all(t, scene_property_names(degree, false));
    const auto& opacity = t.require("opacity");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal_dist(0.0, init == NormalInit::ZeroPlusJitter ? 0.01 : 1.0);
    Scene scene;
    scene.sh_degree = degree;
    scene.primitives.reserve(t.count);
    for (std::size_t row = 0; row < t.count; ++row) {
        HalfGaussianPrimitive p = read_common(t, row, degree);
        p.raw_opacity_a = p.raw_opacity_b = t.get(row, opacity);
        Eigen::Vector3d n;
        do {
            n = Eigen::Vector3d(normal_dist(rng), normal_dist(rng), normal_dist(rng));
        } while (!(n.norm() > 0.0));
        p.normal = n.normalized();
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

void export_3dgs(const Scene& scene, const std::filesystem::path& path) {
    scene.validate();
    const auto names = scene_property_names(scene.sh_degree, false);
    PlyWriter w(path, scene.primitives.size(), names, "float");
    for (const auto& p : scene.primitives) {
        HalfGaussianPrimitive plain = p;
        plain.normal.setZero();
        const double alpha = 0.5 * (p.opacity_a() + p.opacity_b());
        const double raw = p.raw_opacity_a == p.raw_opacity_b ? p.raw_opacity_a : logit(alpha);
        for (double v : primitive_values(plain, scene.sh_degree, raw)) w.put(static_cast<float>(v));
    }
    w.finish(path);
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
    const PlyTable t = read_ply(path);
    const auto& x = t.require("x");
    const auto& y = t.require("y");
    const auto& z = t.require("z");
    const auto& r = t.require("red");
    const auto& g = t.require("green");
    const auto& b = t.require("blue");
    const double color_scale = r.type == PlyType::UInt8 ? 1.0 / 255.0 : 1.0;
    PointCloud cloud;
    for (std::size_t row = 0; row < t.count; ++row) {
        cloud.positions.emplace_back(t.get(row, x), t.get(row, y), t.get(row, z));
        cloud.colors.emplace_back(t.get(row, r) * color_scale, t.get(row, g) * color_scale,
                                  t.get(row, b) * color_scale);
    }
    return cloud;
}

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.positions.size() << '\n'
        << "property double x\nproperty double y\nproperty double z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const double v = cloud.positions[i][k];
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
        for (int k = 0; k < 3; ++k) {
            const auto c = static_cast<std::uint8_t>(std::nearbyint(std::clamp(cloud.colors[i][k], 0.0, 1.0) * 255.0));
            out.write(reinterpret_cast<const char*>(&c), 1);
        }
    }
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

Scene init_from_points(const PointCloud& cloud, int sh_degree, std::uint64_t seed,
                       const Eigen::Vector3d& background) {
    if (cloud.positions.empty()) throw Error(ErrorKind::EmptyPointCloud, "no points to initialize from");
    if (cloud.colors.size() != cloud.positions.size()) {
        throw Error(ErrorKind::InvalidArgument, "point and color counts differ");
    }
    namespace bg = boost::geometry;
    namespace bgi = boost::geometry::index;
    using Point = bg::model::point<double, 3, bg::cs::cartesian>;
    using Value = std::pair<Point, std::size_t>;

    std::vector<Value> values;
    values.reserve(cloud.positions.size());
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        const auto& p = cloud.positions[i];
        values.emplace_back(Point(p.x(), p.y(), p.z()), i);
    }
    const bgi::rtree<Value, bgi::quadratic<16>> tree(values.begin(), values.end());

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal_dist(0.0, 1.0);
    Scene scene;
    scene.sh_degree = sh_degree;
    scene.background = background;
    const auto coeffs = static_cast<std::size_t>(sh_coeff_count(sh_degree));
    for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
        const auto& pos = cloud.positions[i];
        std::vector<Value> nearest;
        tree.query(bgi::nearest(values[i].first, 4), std::back_inserter(nearest));
        double dist_sum = 0.0;
        int used = 0;
        for (const auto& [pt, idx] : nearest) {
            if (idx == i) continue;
            if (used == 3) break;
            dist_sum += (cloud.positions[idx] - pos).norm();
            ++used;
        }
        const double mean_dist = used > 0 ? dist_sum / used : 0.0;

        HalfGaussianPrimitive p;
        p.mu = pos;
        p.log_scale = Eigen::Vector3d::Constant(std::log(std::max(mean_dist, kMinInitScale)));
        p.rotation = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
        p.sh_coeffs.assign(coeffs, Eigen::Vector3d::Zero());
        p.sh_coeffs[0] = (cloud.colors[i] - Eigen::Vector3d::Constant(0.5)) / sh::kC0;
        p.raw_opacity_a = p.raw_opacity_b = logit(0.1);
        Eigen::Vector3d n;
        do {
            n = Eigen::Vector3d(normal_dist(rng), normal_dist(rng), normal_dist(rng));
        } while (!(n.norm() > 0.0));
        p.normal = n.normalized();
        scene.primitives.push_back(std::move(p));
    }
    return scene;
}

// ---- cameras -----------------------------------------------------------------

Eigen::Vector4d matrix_to_quaternion(const Eigen::Matrix3d& r) {
    const Eigen::Quaterniond q(r);
    Eigen::Vector4d out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0.0) out = -out;
    return out / out.norm();
}

namespace {

CameraModel make_camera(const Eigen::Vector4d& qvec, const Eigen::Vector3d& tvec, double fx, double fy, double cx,
                        double cy, int width, int height) {
    CameraModel cam;
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = quaternion_to_matrix(qvec);
    cam.world_to_cam.topRightCorner<3, 1>() = tvec;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = width;
    cam.height = height;
    return cam;
}

// COLMAP models carry no split; every eighth image by name is held out.
constexpr std::size_t kColmapTestEvery = 8;

[[noreturn]] void parse_fail(const std::filesystem::path& file, std::size_t line, const std::string& what) {
    throw Error(ErrorKind::ParseError, file.string() + ":" + std::to_string(line) + ": " + what);
}

void sort_and_check_unique(std::vector<CameraEntry>& entries, const std::filesystem::path& source) {
    std::stable_sort(entries.begin(), entries.end(),
                     [](const CameraEntry& a, const CameraEntry& b) { return a.image < b.image; });
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].image == entries[i - 1].image) {
            throw Error(ErrorKind::ParseError, source.string() + ": duplicate image '" + entries[i].image + "'");
        }
    }
}

std::vector<CameraEntry> load_colmap(const std::filesystem::path& dir) {
    struct Intrinsics {
        int width, height;
        double fx, fy, cx, cy;
    };
    std::map<long, Intrinsics> intrinsics;

    const auto cameras_txt = dir / "cameras.txt";
    std::ifstream cin(cameras_txt);
    if (!cin) throw Error(ErrorKind::IoError, "cannot open " + cameras_txt.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(cin, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long id;
        std::string model;
        int w, h;
        if (!(ls >> id >> model >> w >> h)) parse_fail(cameras_txt, lineno, "expected CAMERA_ID MODEL WIDTH HEIGHT");
        std::vector<double> params;
        double v;
        while (ls >> v) params.push_back(v);
        Intrinsics in{w, h, 0, 0, 0, 0};
        if (model == "PINHOLE") {
            if (params.size() != 4) parse_fail(cameras_txt, lineno, "PINHOLE needs fx fy cx cy");
            in.fx = params[0];
            in.fy = params[1];
            in.cx = params[2];
            in.cy = params[3];
        } else if (model == "SIMPLE_PINHOLE") {
            if (params.size() != 3) parse_fail(cameras_txt, lineno, "SIMPLE_PINHOLE needs f cx cy");
            in.fx = in.fy = params[0];
            in.cx = params[1];
            in.cy = params[2];
        } else {
            throw Error(ErrorKind::UnsupportedCameraModel,
                        cameras_txt.string() + ":" + std::to_string(lineno) + ": camera model " + model);
        }
        if (!intrinsics.emplace(id, in).second) parse_fail(cameras_txt, lineno, "duplicate camera id");
    }

    const auto images_txt = dir / "images.txt";
    std::ifstream iin(images_txt);
    if (!iin) throw Error(ErrorKind::IoError, "cannot open " + images_txt.string());
    std::vector<CameraEntry> entries;
    std::set<std::string> names;
    lineno = 0;
    while (std::getline(iin, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        long image_id, camera_id;
        Eigen::Vector4d q;
        Eigen::Vector3d t;
        std::string name;
        if (!(ls >> image_id >> q[0] >> q[1] >> q[2] >> q[3] >> t[0] >> t[1] >> t[2] >> camera_id >> name)) {
            parse_fail(images_txt, lineno, "expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME");
        }
        const auto it = intrinsics.find(camera_id);
        if (it == intrinsics.end()) parse_fail(images_txt, lineno, "unknown camera id " + std::to_string(camera_id));
        if (!names.insert(name).second) parse_fail(images_txt, lineno, "duplicate image name '" + name + "'");
        if (!(q.norm() > 0.0)) parse_fail(images_txt, lineno, "zero quaternion");
        const Intrinsics& in = it->second;
        CameraEntry e;
        e.camera = make_camera(q, t, in.fx, in.fy, in.cx, in.cy, in.width, in.height);
        e.image = "images/" + name;
        entries.push_back(std::move(e));
        // The following line lists 2D points; skip it whatever it holds.
        if (std::getline(iin, line)) ++lineno;
    }
    sort_and_check_unique(entries, images_txt);
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i].test = i % kColmapTestEvery == 0;
    return entries;
}

std::vector<CameraEntry> load_json_cameras(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + file.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::ParseError, file.string() + ": " + e.what());
    }
    if (!doc.contains("cameras") || !doc["cameras"].is_array()) {
        throw Error(ErrorKind::ParseError, file.string() + ": expected a top-level \"cameras\" array");
    }
    std::vector<CameraEntry> entries;
    std::size_t index = 0;
    for (const auto& c : doc["cameras"]) {
        const std::string where = file.string() + ": /cameras/" + std::to_string(index++);
        try {
            CameraEntry e;
            e.image = c.at("image").get<std::string>();
            const auto q = c.at("qvec").get<std::vector<double>>();
            const auto t = c.at("tvec").get<std::vector<double>>();
            if (q.size() != 4 || t.size() != 3) throw Error(ErrorKind::ParseError, where + ": qvec/tvec size");
            const Eigen::Vector4d qv(q[0], q[1], q[2], q[3]);
            if (!(qv.norm() > 0.0)) throw Error(ErrorKind::ParseError, where + ": zero quaternion");
            e.camera = make_camera(qv, Eigen::Vector3d(t[0], t[1], t[2]), c.at("fx").get<double>(),
                                   c.at("fy").get<double>(), c.at("cx").get<double>(), c.at("cy").get<double>(),
                                   c.at("width").get<int>(), c.at("height").get<int>());
            if (c.contains("near_clip")) e.camera.near_clip = c["near_clip"].get<double>();
            const std::string split = c.value("split", std::string("train"));
            if (split != "train" && split != "test") throw Error(ErrorKind::ParseError, where + ": bad split");
            e.test = split == "test";
            e.camera.validate();
            entries.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw Error(ErrorKind::ParseError, where + ": " + ex.what());
        } catch (const Error& ex) {
            if (ex.kind() == ErrorKind::InvalidArgument) throw Error(ErrorKind::ParseError, where + ": " + ex.what());
            throw;
        }
    }
    sort_and_check_unique(entries, file);
    return entries;
}

} // namespace

std::vector<CameraEntry> load_cameras(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        if (fs::exists(path / "cameras.json")) return load_json_cameras(path / "cameras.json");
        if (fs::exists(path / "cameras.txt") && fs::exists(path / "images.txt")) return load_colmap(path);
        if (fs::exists(path / "sparse" / "0" / "cameras.txt")) return load_colmap(path / "sparse" / "0");
        throw Error(ErrorKind::IoError, "no camera file: expected " + (path / "cameras.json").string() + " or a COLMAP text model (cameras.txt, images.txt)");
    }
    if (!fs::exists(path)) throw Error(ErrorKind::IoError, "camera file not found: " + path.string());
    return load_json_cameras(path);
}

void save_cameras(const std::vector<CameraEntry>& cameras, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["cameras"] = nlohmann::json::array();
    for (const auto& e : cameras) {
        const Eigen::Vector4d q = matrix_to_quaternion(e.camera.rotation());
        const Eigen::Vector3d t = e.camera.translation();
        doc["cameras"].push_back({{"image", e.image},
                                  {"width", e.camera.width},
                                  {"height", e.camera.height},
                                  {"fx", e.camera.fx},
                                  {"fy", e.camera.fy},
                                  {"cx", e.camera.cx},
                                  {"cy", e.camera.cy},
                                  {"qvec", {q[0], q[1], q[2], q[3]}},
                                  {"tvec", {t[0], t[1], t[2]}},
                                  {"near_clip", e.camera.near_clip},
                                  {"split", e.test ? "test" : "train"}});
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

// ---- images ------------------------------------------------------------------

Image read_image(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
        throw Error(ErrorKind::DecodeError, path.string() + ": " + img.message);
    }
    if (img.format & PNG_FORMAT_FLAG_LINEAR) {
        png_image_free(&img);
        throw Error(ErrorKind::UnsupportedBitDepth, path.string() + ": only 8-bit PNG is supported");
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        throw Error(ErrorKind::DecodeError, path.string() + ": " + img.message);
    }
    Image out(static_cast<int>(img.width), static_cast<int>(img.height), 3);
    for (std::size_t i = 0; i < buffer.size(); ++i) out.data[i] = buffer[i] / 255.0;
    return out;
}

std::vector<std::uint8_t> quantize_image(const Image& image) {
    std::vector<std::uint8_t> bytes(image.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        // nearbyint rounds half to even under the default rounding mode.
        const double v = std::nearbyint(std::clamp(image.data[i], 0.0, 1.0) * 255.0);
        bytes[i] = static_cast<std::uint8_t>(v);
    }
    return bytes;
}

void write_image(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3) {
        throw Error(ErrorKind::InvalidArgument, "write_image supports 1 or 3 channels");
    }
    const auto bytes = quantize_image(image);
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width);
    img.height = static_cast<png_uint_32>(image.height);
    img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
        throw Error(ErrorKind::IoError, path.string() + ": " + img.message);
    }
}

} // namespace hgs
