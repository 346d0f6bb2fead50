#include "manifest.hpp"

#include "hgs/error.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

namespace hgs::cli {

using nlohmann::json;

std::optional<TrainMode> parse_mode(const std::string& name) {
    if (name == "scratch") return TrainMode::FromScratch;
    if (name == "finetune") return TrainMode::FinetuneAll;
    if (name == "finetune-densify") return TrainMode::FinetuneAllWithDensify;
    if (name == "finetune-selective") return TrainMode::FinetuneNormalsOpacities;
    return std::nullopt;
}

const char* mode_flag(TrainMode mode) {
    switch (mode) {
    case TrainMode::FromScratch: return "scratch";
    case TrainMode::FinetuneAll: return "finetune";
    case TrainMode::FinetuneAllWithDensify: return "finetune-densify";
    case TrainMode::FinetuneNormalsOpacities: return "finetune-selective";
    }
    return "scratch";
}

std::optional<KernelMode> parse_kernel(const std::string& name) {
    if (name == "half") return KernelMode::HalfGaussian;
    if (name == "full") return KernelMode::FullGaussian;
    return std::nullopt;
}

const char* kernel_flag(KernelMode kernel) {
    return kernel == KernelMode::HalfGaussian ? "half" : "full";
}

json to_json(const RunManifest& m) {
    const TrainConfig& c = m.config;
    return {
        {"version", m.version},
        {"started_at", m.started_at},
        {"finished_at", m.finished_at},
        {"dataset", m.dataset},
        {"init", m.init},
        {"normal_init", m.normal_init == NormalInit::ZeroPlusJitter ? "jitter" : "random"},
        {"sh_degree", m.sh_degree},
        {"config",
         {
             {"total_iters", c.total_iters},
             {"densify_until", c.densify_until},
             {"densify_interval", c.densify_interval},
             {"opacity_reset_start", c.opacity_reset_start},
             {"opacity_reset_interval", c.opacity_reset_interval},
             {"opacity_reset_until", c.opacity_reset_until},
             {"lambda_ssim", c.lambda_ssim},
             {"lr_normal", c.lr_normal},
             {"lr",
              {{"mu_init", c.lr.mu_init},
               {"mu_final", c.lr.mu_final},
               {"sh_dc", c.lr.sh_dc},
               {"sh_rest", c.lr.sh_rest},
               {"opacity", c.lr.opacity},
               {"scale", c.lr.scale},
               {"rotation", c.lr.rotation}}},
             {"densify_grad_threshold", c.densify_grad_threshold},
             {"prune_opacity_threshold", c.prune_opacity_threshold},
             {"percent_dense", c.percent_dense},
             {"opacity_reset_ceiling", c.opacity_reset_ceiling},
             {"mode", mode_flag(c.mode)},
             {"kernel", kernel_flag(c.kernel)},
             {"density_control", c.density_control},
             {"max_primitives", c.max_primitives},
             {"seed", c.seed},
             {"checkpoint_interval", c.checkpoint_interval},
         }},
    };
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    std::string key;
    try {
        auto get = [&](const json& obj, const char* name, auto& out) {
            key = name;
            obj.at(name).get_to(out);
        };
        get(j, "version", m.version);
        get(j, "started_at", m.started_at);
        get(j, "finished_at", m.finished_at);
        get(j, "dataset", m.dataset);
        get(j, "init", m.init);
        std::string normal_init;
        get(j, "normal_init", normal_init);
        if (normal_init != "jitter" && normal_init != "random") throw Error(ErrorKind::InvalidArgument, "bad normal_init");
        m.normal_init = normal_init == "jitter" ? NormalInit::ZeroPlusJitter : NormalInit::RandomUnit;
        get(j, "sh_degree", m.sh_degree);

        key = "config";
        const json& cj = j.at("config");
        TrainConfig& c = m.config;
        get(cj, "total_iters", c.total_iters);
        get(cj, "densify_until", c.densify_until);
        get(cj, "densify_interval", c.densify_interval);
        get(cj, "opacity_reset_start", c.opacity_reset_start);
        get(cj, "opacity_reset_interval", c.opacity_reset_interval);
        get(cj, "opacity_reset_until", c.opacity_reset_until);
        get(cj, "lambda_ssim", c.lambda_ssim);
        get(cj, "lr_normal", c.lr_normal);
        key = "lr";
        const json& lr = cj.at("lr");
        get(lr, "mu_init", c.lr.mu_init);
        get(lr, "mu_final", c.lr.mu_final);
        get(lr, "sh_dc", c.lr.sh_dc);
        get(lr, "sh_rest", c.lr.sh_rest);
        get(lr, "opacity", c.lr.opacity);
        get(lr, "scale", c.lr.scale);
        get(lr, "rotation", c.lr.rotation);
        get(cj, "densify_grad_threshold", c.densify_grad_threshold);
        get(cj, "prune_opacity_threshold", c.prune_opacity_threshold);
        get(cj, "percent_dense", c.percent_dense);
        get(cj, "opacity_reset_ceiling", c.opacity_reset_ceiling);
        std::string mode, kernel;
        get(cj, "mode", mode);
        get(cj, "kernel", kernel);
        const auto pm = parse_mode(mode);
        const auto pk = parse_kernel(kernel);
        if (!pm) throw Error(ErrorKind::InvalidArgument, "bad mode");
        if (!pk) throw Error(ErrorKind::InvalidArgument, "bad kernel");
        c.mode = *pm;
        c.kernel = *pk;
        get(cj, "density_control", c.density_control);
        get(cj, "max_primitives", c.max_primitives);
        get(cj, "seed", c.seed);
        get(cj, "checkpoint_interval", c.checkpoint_interval);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, "manifest key '" + key + "': " + e.what());
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidArgument, "manifest key '" + key + "': " + e.what());
    }
    return m;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << to_json(m).dump(2) << '\n';
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace hgs::cli
