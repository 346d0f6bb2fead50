#pragma once

#include "hgs/geometry.hpp"
#include "hgs/image.hpp"
#include "hgs/rasterizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hgs {

enum class TrainMode {
    FromScratch,
    FinetuneAll,
    FinetuneAllWithDensify,
    FinetuneNormalsOpacities,
};

const char* to_string(TrainMode mode);

// Parameter groups with their own learning rate.
enum class ParamGroup { Mu, LogScale, Rotation, ShDc, ShRest, Normal, Opacity };

struct LearningRates {
    double mu_init = 1.6e-4; // times the scene extent
    double mu_final = 1.6e-6;
    double sh_dc = 2.5e-3;
    double sh_rest = 2.5e-3 / 20.0;
    double opacity = 5e-2;
    double scale = 5e-3;
    double rotation = 1e-3;
};

struct TrainConfig {
    int total_iters = 30000;
    int densify_until = 20000;
    int densify_interval = 100;
    int opacity_reset_start = 3000;
    int opacity_reset_interval = 3000;
    int opacity_reset_until = 20000;
    double lambda_ssim = 0.2;
    double lr_normal = 0.003;
    LearningRates lr;
    double densify_grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    double percent_dense = 0.01; // clone/split boundary, fraction of the scene extent
    double opacity_reset_ceiling = 0.01;
    TrainMode mode = TrainMode::FromScratch;

    // FullGaussian trains the alpha1 = alpha2 constrained model.
    KernelMode kernel = KernelMode::HalfGaussian;
    // Turns off densification and opacity resets in modes that would run them.
    bool density_control = true;
    std::size_t max_primitives = 0; // 0: no cap on densification growth
    std::uint64_t seed = 0;
    int checkpoint_interval = 0; // 0: final checkpoint only
    int workers = 0;

    // Throws InvalidArgument.
    void validate() const;

    bool trains(ParamGroup group) const;
    bool densifies() const;
    double group_lr(ParamGroup group, int iteration, double extent) const;
};

struct LossResult {
    double loss = 0.0;
    double l1 = 0.0;
    double ssim = 0.0;
    Image d_color;
};

// (1 - lambda) * mean|rendered - target| + lambda * (1 - SSIM). Throws
// ShapeMismatch.
LossResult compute_loss(const Image& rendered, const Image& target, double lambda_ssim);

struct TrainView {
    std::string name;
    CameraModel camera;
    Image image;
};

// Adam moments per primitive, flattened in the layout of param_count().
struct OptimizerState {
    int step_count = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    // Density-control accumulators since the last densification.
    std::vector<double> grad_accum;
    std::vector<int> grad_denom;
    std::vector<Eigen::Vector3d> mu_grad_accum;

    void resize(const Scene& scene);
    void remove_and_append(const std::vector<bool>& keep, std::size_t appended, std::size_t param_count);
};

std::size_t param_count(int sh_degree);

struct StepResult {
    double loss = 0.0;
    double psnr = 0.0;
};

// One render / backward / Adam update on a single view. Throws NonFiniteLoss.
StepResult step(Scene& scene, const TrainView& view, const TrainConfig& config, OptimizerState& state,
                int iteration, double extent);

struct DensifyReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

DensifyReport densify_and_prune(Scene& scene, OptimizerState& state, const TrainConfig& config, double extent,
                                std::mt19937_64& rng);

// Clamps both opacity logits so sigmoid <= ceiling.
void reset_opacity(Scene& scene, double ceiling = 0.01);

// Mean |alpha1 - alpha2|. Throws EmptyScene.
double opacity_disparity(const Scene& scene);

// 1.1 x the largest distance from a camera center to their mean; 1 when
// all cameras coincide.
double scene_extent(const std::vector<TrainView>& views);

struct IterationLog {
    int iteration = 0;
    double loss = 0.0;
    double psnr = 0.0;
    std::size_t primitive_count = 0;
    double opacity_disparity = 0.0;
    std::string events; // ';'-separated: densify, reset
};

struct TrainResult {
    Scene scene;
    std::vector<IterationLog> log;
};

// Runs config.total_iters steps. When out_dir is non-empty, writes
// metrics.csv, checkpoints/ and scene.ply below it.
TrainResult train(Scene scene, const std::vector<TrainView>& views, const TrainConfig& config,
                  const std::filesystem::path& out_dir = {},
                  const std::function<void(const IterationLog&)>& on_iteration = {});

} // namespace hgs
