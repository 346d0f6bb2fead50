#pragma once

#include "hgs/scene_io.hpp"
#include "hgs/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hgs {

// Cameras, images and optional initial points of one capture.
struct Dataset {
    std::string name;
    std::vector<TrainView> train;
    std::vector<TrainView> test;
    std::optional<PointCloud> points;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
};

// A directory holding cameras.json (or a COLMAP text model) with the images it
// references, plus points.ply when present. Throws IoError, ParseError,
// DecodeError, ShapeMismatch when an image disagrees with its camera size.
Dataset load_dataset(const std::filesystem::path& dir);

// Writes cameras.json, images/*.png and points.ply.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

enum class FixtureKind { Edge, Corner, Sphere };

const char* to_string(FixtureKind kind);
std::optional<FixtureKind> parse_fixture_kind(const std::string& name);

struct FixtureOptions {
    int width = 64;
    int height = 64;
    int points = 500;
    int supersample = 4; // per axis
    std::uint64_t seed = 0;
};

// Procedural scenes ray-cast to ground truth:
//   Edge   - a flat quad painted with hard-edged color bands,
//   Corner - two textured planes meeting in a concave crease,
//   Sphere - a Lambertian sphere under one directional light.
// Three training views and one held-out view; points sampled on the surfaces
// with their true colors.
Dataset make_fixture(FixtureKind kind, const FixtureOptions& options = {});

} // namespace hgs
