#pragma once

#include "hgs/scene_io.hpp"
#include "hgs/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace hgs::cli {

// Everything needed to repeat a training run.
struct RunManifest {
    TrainConfig config;
    std::string dataset;
    std::string init; // initial scene file; empty: the dataset's points.ply
    NormalInit normal_init = NormalInit::ZeroPlusJitter;
    int sh_degree = 3;
    std::string version;
    std::string started_at;
    std::string finished_at;
};

nlohmann::json to_json(const RunManifest& m);
// Throws InvalidArgument naming the offending key.
RunManifest manifest_from_json(const nlohmann::json& j);

void write_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

std::optional<TrainMode> parse_mode(const std::string& name);
const char* mode_flag(TrainMode mode);
std::optional<KernelMode> parse_kernel(const std::string& name);
const char* kernel_flag(KernelMode kernel);

// UTC, ISO 8601 with seconds.
std::string utc_timestamp();

} // namespace hgs::cli
