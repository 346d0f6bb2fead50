#pragma once

#include "hgs/geometry.hpp"
#include "hgs/trainer.hpp"

#include <array>
#include <cstdint>

namespace hgs {

// A small random scene in front of a look-at camera. Opacities, colors and
// scales stay away from the clamps so the render is smooth in every
// parameter.
struct RandomSceneOptions {
    int primitives = 8;
    int size = 32; // image width and height
    int sh_degree = 1;
};

struct RandomScene {
    Scene scene;
    CameraModel camera;
};

RandomScene make_random_scene(std::uint64_t seed, const RandomSceneOptions& options = {});

// Closed-form paired line integral against adaptive quadrature over random
// covariances, normals, opacity pairs and rays.
struct OracleSuiteResult {
    int trials = 0;
    double max_rel_error = 0.0;
    int worst_trial = -1;
};

inline constexpr double kOracleTolerance = 1e-5;

OracleSuiteResult check_closed_form(int trials, std::uint64_t seed);

// Analytic gradients of the training loss against central differences.
// Errors are per primitive and parameter group: |analytic - numeric|_inf
// over max(|analytic|_inf, |numeric|_inf, kGradientFloor).
inline constexpr int kGradientGroups = 7;
inline constexpr std::array<const char*, kGradientGroups> kGradientGroupNames = {
    "mu", "log_scale", "rotation", "sh_dc", "sh_rest", "normal", "opacity"};
inline constexpr double kGradientTolerance = 1e-3;
inline constexpr double kGradientFloor = 1e-6;
inline constexpr double kGradientStep = 1e-6;

struct GradientSuiteResult {
    int scenes = 0;
    std::array<double, kGradientGroups> max_rel_error{};
    double worst() const;
};

GradientSuiteResult check_gradients(int scenes, std::uint64_t seed, KernelMode kernel = KernelMode::HalfGaussian,
                                    const RandomSceneOptions& options = {});

// max |G - I| for the Gram matrix of the degree-3 basis under exact
// spherical quadrature.
inline constexpr double kShTolerance = 1e-12;
double check_sh_orthonormality();

} // namespace hgs
