#include "hgs/dataset.hpp"

#include "hgs/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

namespace hgs {

namespace fs = std::filesystem;

Dataset load_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "dataset directory not found: " + dir.string());
    Dataset ds;
    ds.name = dir.filename().string();
    for (auto& entry : load_cameras(dir)) {
        TrainView view;
        view.name = entry.image;
        view.camera = entry.camera;
        view.image = read_image(dir / entry.image);
        if (view.image.width != view.camera.width || view.image.height != view.camera.height) {
            throw Error(ErrorKind::ShapeMismatch, entry.image + ": image size differs from its camera");
        }
        (entry.test ? ds.test : ds.train).push_back(std::move(view));
    }
    if (fs::exists(dir / "points.ply")) ds.points = load_point_cloud(dir / "points.ply");
    return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir / "images");
    std::vector<CameraEntry> entries;
    auto emit = [&](const TrainView& v, bool test) {
        write_image(v.image, dir / v.name);
        entries.push_back({v.camera, v.name, test});
    };
    for (const auto& v : dataset.train) emit(v, false);
    for (const auto& v : dataset.test) emit(v, true);
    save_cameras(entries, dir / "cameras.json");
    if (dataset.points) save_point_cloud(*dataset.points, dir / "points.ply");
}

const char* to_string(FixtureKind kind) {
    switch (kind) {
    case FixtureKind::Edge: return "edge";
    case FixtureKind::Corner: return "corner";
    case FixtureKind::Sphere: return "sphere";
    }
    return "unknown";
}

std::optional<FixtureKind> parse_fixture_kind(const std::string& name) {
    if (name == "edge") return FixtureKind::Edge;
    if (name == "corner") return FixtureKind::Corner;
    if (name == "sphere") return FixtureKind::Sphere;
    return std::nullopt;
}

namespace {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

// A bounded surface that reports its color at a point.
class Surface {
public:
    virtual ~Surface() = default;
    virtual void intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& hit) const = 0;
    virtual double area() const = 0;
    virtual Eigen::Vector3d sample(std::mt19937_64& rng, Eigen::Vector3d& color) const = 0;
};

// Parallelogram origin + s*u + t*v, s, t in [0, 1], colored by texture(s, t).
class Quad : public Surface {
public:
    using Texture = Eigen::Vector3d (*)(double, double);
    Quad(Eigen::Vector3d origin, Eigen::Vector3d u, Eigen::Vector3d v, Texture texture)
        : o_(std::move(origin)), u_(std::move(u)), v_(std::move(v)), tex_(texture) {}

    void intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& hit) const override {
        const Eigen::Vector3d n = u_.cross(v_);
        const double denom = n.dot(d);
        if (std::abs(denom) < 1e-12) return;
        const double t = n.dot(o_ - o) / denom;
        if (!(t > 0.0 && t < hit.t)) return;
        const Eigen::Vector3d rel = o + t * d - o_;
        const double uu = u_.dot(u_), uv = u_.dot(v_), vv = v_.dot(v_);
        const double ru = rel.dot(u_), rv = rel.dot(v_);
        const double det = uu * vv - uv * uv;
        const double s = (ru * vv - rv * uv) / det;
        const double r = (rv * uu - ru * uv) / det;
        if (s < 0.0 || s > 1.0 || r < 0.0 || r > 1.0) return;
        hit.t = t;
        hit.color = tex_(s, r);
    }

    double area() const override { return u_.cross(v_).norm(); }

    Eigen::Vector3d sample(std::mt19937_64& rng, Eigen::Vector3d& color) const override {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double s = uni(rng), r = uni(rng);
        color = tex_(s, r);
        return o_ + s * u_ + r * v_;
    }

private:
    Eigen::Vector3d o_, u_, v_;
    Texture tex_;
};

class Sphere : public Surface {
public:
    Sphere(Eigen::Vector3d center, double radius) : c_(std::move(center)), r_(radius) {}

    void intersect(const Eigen::Vector3d& o, const Eigen::Vector3d& d, Hit& hit) const override {
        const Eigen::Vector3d oc = o - c_;
        const double a = d.dot(d);
        const double b = oc.dot(d);
        const double c = oc.dot(oc) - r_ * r_;
        const double disc = b * b - a * c;
        if (disc < 0.0) return;
        const double t = (-b - std::sqrt(disc)) / a;
        if (!(t > 0.0 && t < hit.t)) return;
        hit.t = t;
        hit.color = shade((o + t * d - c_) / r_);
    }

    double area() const override { return 4.0 * M_PI * r_ * r_; }

    Eigen::Vector3d sample(std::mt19937_64& rng, Eigen::Vector3d& color) const override {
        std::normal_distribution<double> g(0.0, 1.0);
        Eigen::Vector3d n;
        do {
            n = Eigen::Vector3d(g(rng), g(rng), g(rng));
        } while (n.norm() < 1e-9);
        n.normalize();
        color = shade(n);
        return c_ + r_ * n;
    }

private:
    static Eigen::Vector3d shade(const Eigen::Vector3d& n) {
        const Eigen::Vector3d light = Eigen::Vector3d(0.4, -0.6, 0.7).normalized();
        const Eigen::Vector3d albedo(0.85, 0.55, 0.3);
        return albedo * (0.15 + 0.85 * std::max(0.0, n.dot(light)));
    }

    Eigen::Vector3d c_;
    double r_;
};

Eigen::Vector3d band_texture(double s, double) {
    static const Eigen::Vector3d palette[] = {{0.9, 0.1, 0.1}, {0.95, 0.9, 0.2}, {0.1, 0.3, 0.9},
                                              {0.95, 0.95, 0.95}, {0.1, 0.7, 0.2}, {0.6, 0.2, 0.7}};
    const int band = std::min(static_cast<int>(s * 8.0), 7);
    return palette[band % 6];
}

Eigen::Vector3d checker_warm(double s, double t) {
    const bool odd = (static_cast<int>(s * 4.0) + static_cast<int>(t * 4.0)) % 2 != 0;
    return odd ? Eigen::Vector3d(0.9, 0.6, 0.2) : Eigen::Vector3d(0.35, 0.1, 0.05);
}

Eigen::Vector3d checker_cool(double s, double t) {
    const bool odd = (static_cast<int>(s * 4.0) + static_cast<int>(t * 4.0)) % 2 != 0;
    return odd ? Eigen::Vector3d(0.2, 0.7, 0.9) : Eigen::Vector3d(0.05, 0.15, 0.4);
}

std::vector<std::unique_ptr<Surface>> build_surfaces(FixtureKind kind) {
    std::vector<std::unique_ptr<Surface>> s;
    switch (kind) {
    case FixtureKind::Edge:
        s.push_back(std::make_unique<Quad>(Eigen::Vector3d(-1, -1, 0), Eigen::Vector3d(2, 0, 0),
                                           Eigen::Vector3d(0, 2, 0), band_texture));
        break;
    case FixtureKind::Corner:
        // Crease along the y axis, both faces receding from +z at 45 degrees.
        s.push_back(std::make_unique<Quad>(Eigen::Vector3d(0, -1, 0), Eigen::Vector3d(-1, 0, -1),
                                           Eigen::Vector3d(0, 2, 0), checker_warm));
        s.push_back(std::make_unique<Quad>(Eigen::Vector3d(0, -1, 0), Eigen::Vector3d(1, 0, -1),
                                           Eigen::Vector3d(0, 2, 0), checker_cool));
        break;
    case FixtureKind::Sphere: s.push_back(std::make_unique<Sphere>(Eigen::Vector3d::Zero(), 1.0)); break;
    }
    return s;
}

Image ray_cast(const std::vector<std::unique_ptr<Surface>>& surfaces, const CameraModel& cam,
               const Eigen::Vector3d& background, int supersample) {
    Image img(cam.width, cam.height, 3);
    const Eigen::Matrix3d rt = cam.rotation().transpose();
    const Eigen::Vector3d origin = cam.center();
    const double inv = 1.0 / (supersample * supersample);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Eigen::Vector3d acc = Eigen::Vector3d::Zero();
            for (int sy = 0; sy < supersample; ++sy) {
                for (int sx = 0; sx < supersample; ++sx) {
                    const double u = x + (sx + 0.5) / supersample - 0.5;
                    const double v = y + (sy + 0.5) / supersample - 0.5;
                    const Eigen::Vector3d d = rt * Eigen::Vector3d((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
                    Hit hit;
                    for (const auto& surf : surfaces) surf->intersect(origin, d, hit);
                    acc += std::isinf(hit.t) ? background : hit.color;
                }
            }
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = acc[c] * inv;
        }
    }
    return img;
}

} // namespace

Dataset make_fixture(FixtureKind kind, const FixtureOptions& options) {
    if (options.width <= 0 || options.height <= 0 || options.points <= 0 || options.supersample <= 0) {
        throw Error(ErrorKind::InvalidArgument, "fixture sizes must be positive");
    }
    const auto surfaces = build_surfaces(kind);
    Dataset ds;
    ds.name = to_string(kind);

    const double focal = 0.9 * options.width;
    const Eigen::Vector3d target(0.0, 0.0, kind == FixtureKind::Corner ? -0.4 : 0.0);
    const Eigen::Vector3d up(0.0, 1.0, 0.0);
    const double dist = kind == FixtureKind::Sphere ? 3.6 : 3.2;
    struct Pose {
        double azimuth, elevation;
        bool test;
    };
    const Pose poses[] = {{-0.35, 0.10, false}, {0.35, 0.15, false}, {0.0, -0.25, false}, {0.15, 0.0, true}};
    int index = 0;
    for (const Pose& p : poses) {
        const Eigen::Vector3d dir(std::sin(p.azimuth) * std::cos(p.elevation), std::sin(p.elevation),
                                  std::cos(p.azimuth) * std::cos(p.elevation));
        TrainView view;
        view.camera = look_at_camera(target + dist * dir, target, up, focal, options.width, options.height);
        view.name = "images/" + std::string(p.test ? "test_" : "train_") + std::to_string(index++) + ".png";
        view.image = ray_cast(surfaces, view.camera, ds.background, options.supersample);
        (p.test ? ds.test : ds.train).push_back(std::move(view));
    }

    std::mt19937_64 rng(options.seed);
    double total_area = 0.0;
    for (const auto& s : surfaces) total_area += s->area();
    std::uniform_real_distribution<double> pick(0.0, total_area);
    PointCloud cloud;
    for (int i = 0; i < options.points; ++i) {
        double a = pick(rng);
        std::size_t k = 0;
        while (k + 1 < surfaces.size() && a > surfaces[k]->area()) a -= surfaces[k++]->area();
        Eigen::Vector3d color;
        cloud.positions.push_back(surfaces[k]->sample(rng, color));
        cloud.colors.push_back(color);
    }
    ds.points = std::move(cloud);
    return ds;
}

} // namespace hgs
