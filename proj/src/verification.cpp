#include "hgs/verification.hpp"

#include "hgs/error.hpp"
#include "hgs/halfgauss_kernel.hpp"
#include "hgs/rasterizer.hpp"

#include <Eigen/Geometry>
#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace hgs {

namespace {

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(g(rng), g(rng), g(rng));
    } while (v.norm() < 1e-6);
    return v.normalized();
}

Eigen::Vector4d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::Vector4d q;
    do {
        q = Eigen::Vector4d(g(rng), g(rng), g(rng), g(rng));
    } while (q.norm() < 1e-6);
    return q.normalized();
}

// Address of component k of one parameter group.
double* parameter(HalfGaussianPrimitive& p, int group, int k) {
    switch (group) {
    case 0: return &p.mu[k];
    case 1: return &p.log_scale[k];
    case 2: return &p.rotation[k];
    case 3: return &p.sh_coeffs[0][k];
    case 4: return &p.sh_coeffs[1 + k / 3][k % 3];
    case 5: return &p.normal[k];
    default: return k == 0 ? &p.raw_opacity_a : &p.raw_opacity_b;
    }
}

int group_size(int group, int sh_degree) {
    switch (group) {
    case 0:
    case 1:
    case 3:
    case 5: return 3;
    case 2: return 4;
    case 4: return 3 * (sh_coeff_count(sh_degree) - 1);
    default: return 2;
    }
}

double analytic(const PrimitiveGradient& g, int group, int k) {
    switch (group) {
    case 0: return g.d_mu[k];
    case 1: return g.d_log_scale[k];
    case 2: return g.d_rotation[k];
    case 3: return g.d_sh[0][k];
    case 4: return g.d_sh[1 + k / 3][k % 3];
    case 5: return g.d_normal[k];
    default: return k == 0 ? g.d_raw_opacity_a : g.d_raw_opacity_b;
    }
}

} // namespace

RandomScene make_random_scene(std::uint64_t seed, const RandomSceneOptions& options) {
    if (options.primitives <= 0 || options.size <= 0 || options.sh_degree < 0 || options.sh_degree > kMaxShDegree) {
        throw Error(ErrorKind::InvalidArgument, "random scene options out of range");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

    RandomScene out;
    out.scene.sh_degree = options.sh_degree;
    out.scene.background = Eigen::Vector3d(0.1, 0.1, 0.1);
    for (int i = 0; i < options.primitives; ++i) {
        HalfGaussianPrimitive p;
        p.mu = Eigen::Vector3d(range(-0.9, 0.9), range(-0.9, 0.9), range(-0.5, 0.5));
        p.log_scale = Eigen::Vector3d(std::log(range(0.12, 0.4)), std::log(range(0.12, 0.4)), std::log(range(0.12, 0.4)));
        p.rotation = random_rotation(rng);
        p.sh_coeffs.assign(sh_coeff_count(options.sh_degree), Eigen::Vector3d::Zero());
        for (int c = 0; c < 3; ++c) p.sh_coeffs[0][c] = (range(0.25, 0.75) - 0.5) / sh::kC0;
        for (std::size_t j = 1; j < p.sh_coeffs.size(); ++j) {
            for (int c = 0; c < 3; ++c) p.sh_coeffs[j][c] = range(-0.05, 0.05);
        }
        p.normal = random_unit(rng);
        p.raw_opacity_a = logit(range(0.1, 0.7));
        p.raw_opacity_b = logit(range(0.1, 0.7));
        out.scene.primitives.push_back(std::move(p));
    }
    const Eigen::Vector3d eye(range(-0.5, 0.5), range(-0.5, 0.5), 4.0);
    out.camera = look_at_camera(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitY(), 1.2 * options.size,
                                options.size, options.size);
    return out;
}

OracleSuiteResult check_closed_form(int trials, std::uint64_t seed) {
    if (trials <= 0) throw Error(ErrorKind::InvalidArgument, "trials must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    OracleSuiteResult result;
    result.trials = trials;
    for (int t = 0; t < trials; ++t) {
        const Eigen::Vector3d mu(gauss(rng), gauss(rng), gauss(rng));
        const Eigen::Vector3d log_scale(std::log(0.05 + 0.95 * uni(rng)), std::log(0.05 + 0.95 * uni(rng)),
                                        std::log(0.05 + 0.95 * uni(rng)));
        const Eigen::Matrix3d sigma = build_covariance(log_scale, random_rotation(rng));
        const Eigen::Vector3d normal = random_unit(rng);
        const double a1 = uni(rng), a2 = uni(rng);
        const Eigen::Vector3d dir = random_unit(rng);
        // Rays pass within about two standard deviations of the mean.
        const Eigen::LLT<Eigen::Matrix3d> llt(sigma);
        const Eigen::Vector3d offset = llt.matrixL() * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        const Eigen::Vector3d origin = mu + offset - 10.0 * dir;

        const double closed = closed_form_line_integral(mu, sigma, normal, a1, a2, origin, dir);
        const double oracle = oracle_line_integral(mu, sigma, normal, a1, a2, origin, dir);
        const double err = std::abs(closed - oracle) / std::max(oracle, 1e-12);
        if (!(err <= result.max_rel_error)) {
            result.max_rel_error = err;
            result.worst_trial = t;
        }
    }
    return result;
}

double GradientSuiteResult::worst() const {
    return *std::max_element(max_rel_error.begin(), max_rel_error.end());
}

GradientSuiteResult check_gradients(int scenes, std::uint64_t seed, KernelMode kernel,
                                    const RandomSceneOptions& options) {
    if (scenes <= 0) throw Error(ErrorKind::InvalidArgument, "scene count must be positive");
    constexpr double kLambda = 0.2;
    GradientSuiteResult result;
    result.scenes = scenes;
    const RenderOptions ro{kernel, 1};
    for (int s = 0; s < scenes; ++s) {
        RandomScene rs = make_random_scene(seed + static_cast<std::uint64_t>(s), options);
        // A noise target keeps every L1 residual away from zero.
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (s + 1)));
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        Image target(options.size, options.size, 3);
        for (double& v : target.data) v = uni(rng);

        auto loss_of = [&](const Scene& scene) {
            return compute_loss(render(scene, rs.camera, ro).color, target, kLambda).loss;
        };
        const RenderOutput out = render(rs.scene, rs.camera, ro);
        const LossResult loss = compute_loss(out.color, target, kLambda);
        const GradientSet grads = render_backward(rs.scene, rs.camera, out, loss.d_color, ro);

        for (std::size_t i = 0; i < rs.scene.primitives.size(); ++i) {
            for (int group = 0; group < kGradientGroups; ++group) {
                double diff = 0.0, scale = kGradientFloor;
                for (int k = 0; k < group_size(group, rs.scene.sh_degree); ++k) {
                    Scene probe = rs.scene;
                    double* x = parameter(probe.primitives[i], group, k);
                    const double x0 = *x;
                    *x = x0 + kGradientStep;
                    const double up = loss_of(probe);
                    *x = x0 - kGradientStep;
                    const double down = loss_of(probe);
                    const double numeric = (up - down) / (2.0 * kGradientStep);
                    const double exact = analytic(grads.prims[i], group, k);
                    diff = std::max(diff, std::abs(exact - numeric));
                    scale = std::max({scale, std::abs(exact), std::abs(numeric)});
                }
                result.max_rel_error[group] = std::max(result.max_rel_error[group], diff / scale);
            }
        }
    }
    return result;
}

double check_sh_orthonormality() {
    using Legendre = boost::math::quadrature::gauss<double, 12>;
    constexpr int kAzimuths = 16; // exact for trigonometric degree < 16
    const int n = sh_coeff_count(kMaxShDegree);
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            auto over_azimuth = [&](double cos_theta) {
                const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
                double sum = 0.0;
                for (int k = 0; k < kAzimuths; ++k) {
                    const double phi = 2.0 * M_PI * k / kAzimuths;
                    const auto basis = eval_sh_basis(
                        Eigen::Vector3d(sin_theta * std::cos(phi), sin_theta * std::sin(phi), cos_theta), kMaxShDegree);
                    sum += basis.values[i] * basis.values[j];
                }
                return sum * 2.0 * M_PI / kAzimuths;
            };
            gram(i, j) = gram(j, i) = Legendre::integrate(over_azimuth, -1.0, 1.0);
        }
    }
    return (gram - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
}

} // namespace hgs
