#include "hgs/trainer.hpp"

#include "hgs/error.hpp"
#include "hgs/metrics.hpp"
#include "hgs/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace hgs {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;
constexpr double kSplitScaleDivisor = 1.6;
constexpr double kCloneShift = 0.5; // in units of the largest standard deviation

struct Slice {
    ParamGroup group;
    std::size_t begin;
    std::size_t end;
};

std::vector<Slice> layout(int sh_degree) {
    const std::size_t rest = 3 * (static_cast<std::size_t>(sh_coeff_count(sh_degree)) - 1);
    std::vector<Slice> s;
    std::size_t at = 0;
    auto add = [&](ParamGroup g, std::size_t n) {
        s.push_back({g, at, at + n});
        at += n;
    };
    add(ParamGroup::Mu, 3);
    add(ParamGroup::LogScale, 3);
    add(ParamGroup::Rotation, 4);
    add(ParamGroup::ShDc, 3);
    add(ParamGroup::ShRest, rest);
    add(ParamGroup::Normal, 3);
    add(ParamGroup::Opacity, 2);
    return s;
}

void pack(const HalfGaussianPrimitive& p, double* out) {
    std::size_t i = 0;
    for (int k = 0; k < 3; ++k) out[i++] = p.mu[k];
    for (int k = 0; k < 3; ++k) out[i++] = p.log_scale[k];
    for (int k = 0; k < 4; ++k) out[i++] = p.rotation[k];
    for (const auto& c : p.sh_coeffs) {
        for (int k = 0; k < 3; ++k) out[i++] = c[k];
    }
    for (int k = 0; k < 3; ++k) out[i++] = p.normal[k];
    out[i++] = p.raw_opacity_a;
    out[i++] = p.raw_opacity_b;
}

void pack(const PrimitiveGradient& g, double* out) {
    std::size_t i = 0;
    for (int k = 0; k < 3; ++k) out[i++] = g.d_mu[k];
    for (int k = 0; k < 3; ++k) out[i++] = g.d_log_scale[k];
    for (int k = 0; k < 4; ++k) out[i++] = g.d_rotation[k];
    for (const auto& c : g.d_sh) {
        for (int k = 0; k < 3; ++k) out[i++] = c[k];
    }
    for (int k = 0; k < 3; ++k) out[i++] = g.d_normal[k];
    out[i++] = g.d_raw_opacity_a;
    out[i++] = g.d_raw_opacity_b;
}

void unpack(const double* in, HalfGaussianPrimitive& p) {
    std::size_t i = 0;
    for (int k = 0; k < 3; ++k) p.mu[k] = in[i++];
    for (int k = 0; k < 3; ++k) p.log_scale[k] = in[i++];
    for (int k = 0; k < 4; ++k) p.rotation[k] = in[i++];
    for (auto& c : p.sh_coeffs) {
        for (int k = 0; k < 3; ++k) c[k] = in[i++];
    }
    for (int k = 0; k < 3; ++k) p.normal[k] = in[i++];
    p.raw_opacity_a = in[i++];
    p.raw_opacity_b = in[i++];
}

bool on_schedule(int iteration, int start, int interval, int until) {
    return interval > 0 && iteration >= start && iteration < until && iteration % interval == 0;
}

} // namespace

const char* to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::FromScratch: return "from_scratch";
    case TrainMode::FinetuneAll: return "finetune_all";
    case TrainMode::FinetuneAllWithDensify: return "finetune_all_with_densify";
    case TrainMode::FinetuneNormalsOpacities: return "finetune_normals_opacities";
    }
    return "unknown";
}

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidArgument, what); };
    if (total_iters < 0) fail("total_iters must be >= 0");
    if (!(densify_until > 0 && densify_until <= std::max(total_iters, 1))) {
        fail("densify_until must satisfy 0 < densify_until <= total_iters");
    }
    if (densify_interval <= 0 || opacity_reset_interval <= 0) fail("schedule intervals must be positive");
    if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) fail("lambda_ssim must lie in [0, 1]");
    const double rates[] = {lr.mu_init, lr.mu_final, lr.sh_dc, lr.sh_rest, lr.opacity, lr.scale, lr.rotation};
    for (double r : rates) {
        if (!(r > 0.0)) fail("learning rates must be positive");
    }
    // A zero normal rate is the frozen-normal ablation.
    if (!(lr_normal >= 0.0)) fail("lr_normal must be >= 0");
    if (!(opacity_reset_ceiling > 0.0 && opacity_reset_ceiling < 1.0)) fail("opacity_reset_ceiling must lie in (0, 1)");
}

bool TrainConfig::trains(ParamGroup group) const {
    if (group == ParamGroup::Normal && (lr_normal == 0.0 || kernel == KernelMode::FullGaussian)) return false;
    if (mode == TrainMode::FinetuneNormalsOpacities) {
        return group == ParamGroup::Normal || group == ParamGroup::Opacity;
    }
    return true;
}

bool TrainConfig::densifies() const {
    return density_control && (mode == TrainMode::FromScratch || mode == TrainMode::FinetuneAllWithDensify);
}

double TrainConfig::group_lr(ParamGroup group, int iteration, double extent) const {
    switch (group) {
    case ParamGroup::Mu: {
        const double t = total_iters > 0 ? std::clamp(static_cast<double>(iteration) / total_iters, 0.0, 1.0) : 0.0;
        return std::exp(std::log(lr.mu_init) * (1.0 - t) + std::log(lr.mu_final) * t) * extent;
    }
    case ParamGroup::LogScale: return lr.scale;
    case ParamGroup::Rotation: return lr.rotation;
    case ParamGroup::ShDc: return lr.sh_dc;
    case ParamGroup::ShRest: return lr.sh_rest;
    case ParamGroup::Normal: return lr_normal;
    case ParamGroup::Opacity: return lr.opacity;
    }
    return 0.0;
}

std::size_t param_count(int sh_degree) { return 15 + 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree)); }

LossResult compute_loss(const Image& rendered, const Image& target, double lambda_ssim) {
    if (!rendered.same_shape(target)) throw Error(ErrorKind::ShapeMismatch, "rendered and target differ in shape");
    LossResult r;
    r.d_color = Image(rendered.width, rendered.height, rendered.channels);
    const double n = static_cast<double>(rendered.data.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        l1 += std::abs(d);
        r.d_color.data[i] = (1.0 - lambda_ssim) * static_cast<double>((d > 0.0) - (d < 0.0)) / n;
    }
    r.l1 = l1 / n;
    r.loss = (1.0 - lambda_ssim) * r.l1;
    if (lambda_ssim > 0.0) {
        const auto s = ssim_with_gradient(rendered, target);
        r.ssim = s.value;
        r.loss += lambda_ssim * (1.0 - s.value);
        for (std::size_t i = 0; i < r.d_color.data.size(); ++i) r.d_color.data[i] -= lambda_ssim * s.d_a.data[i];
    } else {
        r.ssim = rendered.width >= kSsimWindow && rendered.height >= kSsimWindow ? ssim(rendered, target) : 0.0;
    }
    return r;
}

void OptimizerState::resize(const Scene& scene) {
    const std::size_t n = scene.primitives.size();
    const std::size_t pc = param_count(scene.sh_degree);
    m.assign(n, std::vector<double>(pc, 0.0));
    v.assign(n, std::vector<double>(pc, 0.0));
    grad_accum.assign(n, 0.0);
    grad_denom.assign(n, 0);
    mu_grad_accum.assign(n, Eigen::Vector3d::Zero());
}

void OptimizerState::remove_and_append(const std::vector<bool>& keep, std::size_t appended, std::size_t pc) {
    std::size_t out = 0;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        if (out != i) {
            m[out] = std::move(m[i]);
            v[out] = std::move(v[i]);
        }
        ++out;
    }
    m.resize(out);
    v.resize(out);
    m.resize(out + appended, std::vector<double>(pc, 0.0));
    v.resize(out + appended, std::vector<double>(pc, 0.0));
    grad_accum.assign(out + appended, 0.0);
    grad_denom.assign(out + appended, 0);
    mu_grad_accum.assign(out + appended, Eigen::Vector3d::Zero());
}

StepResult step(Scene& scene, const TrainView& view, const TrainConfig& config, OptimizerState& state,
                int iteration, double extent) {
    const RenderOptions options{config.kernel, config.workers};
    const RenderOutput out = render(scene, view.camera, options);
    const LossResult loss = compute_loss(out.color, view.image, config.lambda_ssim);
    if (!std::isfinite(loss.loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "non-finite loss at iteration " + std::to_string(iteration));
    }
    StepResult result{loss.loss, psnr(out.color, view.image)};
    const GradientSet grads = render_backward(scene, view.camera, out, loss.d_color, options);

    const std::size_t n = scene.primitives.size();
    const std::size_t pc = param_count(scene.sh_degree);
    if (state.m.size() != n) state.resize(scene);

    for (std::size_t i = 0; i < n; ++i) {
        if (grads.touch_count[i] > 0) {
            state.grad_accum[i] += grads.screen_grad_norm[i];
            state.grad_denom[i] += 1;
            state.mu_grad_accum[i] += grads.prims[i].d_mu;
        }
    }

    ++state.step_count;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, state.step_count);
    const double bc2 = 1.0 - std::pow(kAdamBeta2, state.step_count);
    const auto slices = layout(scene.sh_degree);
    std::vector<double> params(pc), grad(pc);
    for (std::size_t i = 0; i < n; ++i) {
        auto& prim = scene.primitives[i];
        pack(prim, params.data());
        pack(grads.prims[i], grad.data());
        auto& m = state.m[i];
        auto& v = state.v[i];
        bool normal_moved = false;
        for (const Slice& s : slices) {
            if (!config.trains(s.group)) continue;
            const double lr = config.group_lr(s.group, iteration, extent);
            for (std::size_t k = s.begin; k < s.end; ++k) {
                m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * grad[k];
                v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * grad[k] * grad[k];
                params[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + kAdamEps);
            }
            if (s.group == ParamGroup::Normal) normal_moved = true;
        }
        unpack(params.data(), prim);
        if (normal_moved) {
            const double len = prim.normal.norm();
            if (len > 0.0 && std::isfinite(len)) prim.normal /= len;
        }
    }
    return result;
}

DensifyReport densify_and_prune(Scene& scene, OptimizerState& state, const TrainConfig& config, double extent,
                                std::mt19937_64& rng) {
    const std::size_t n = scene.primitives.size();
    if (state.m.size() != n) state.resize(scene);
    DensifyReport report;
    std::vector<HalfGaussianPrimitive> added;
    std::vector<bool> keep(n, true);
    const std::size_t cap = config.max_primitives;
    auto room = [&](std::size_t extra) { return cap == 0 || n + added.size() + extra <= cap; };
    std::normal_distribution<double> normal(0.0, 1.0);

    for (std::size_t i = 0; i < n; ++i) {
        if (state.grad_denom[i] == 0) continue;
        const double mean_grad = state.grad_accum[i] / state.grad_denom[i];
        if (!(mean_grad >= config.densify_grad_threshold)) continue;
        const HalfGaussianPrimitive& p = scene.primitives[i];
        const double max_scale = std::exp(p.log_scale.maxCoeff());
        if (max_scale <= config.percent_dense * extent) {
            if (!room(1)) continue;
            HalfGaussianPrimitive c = p;
            const double g = state.mu_grad_accum[i].norm();
            if (g > 0.0) c.mu -= kCloneShift * max_scale * state.mu_grad_accum[i] / g;
            added.push_back(std::move(c));
            ++report.cloned;
        } else {
            if (!room(1)) continue; // two children replace the parent
            const Eigen::Matrix3d r = quaternion_to_matrix(p.rotation);
            const Eigen::Vector3d s = p.log_scale.array().exp();
            for (int child = 0; child < 2; ++child) {
                HalfGaussianPrimitive c = p;
                const Eigen::Vector3d z(normal(rng), normal(rng), normal(rng));
                c.mu = p.mu + r * s.cwiseProduct(z);
                c.log_scale = p.log_scale.array() - std::log(kSplitScaleDivisor);
                added.push_back(std::move(c));
            }
            keep[i] = false;
            ++report.split;
        }
    }

    // Prune over survivors and new primitives alike.
    std::vector<HalfGaussianPrimitive> next;
    next.reserve(n + added.size());
    std::vector<bool> keep_old(n, false);
    auto prunable = [&](const HalfGaussianPrimitive& p) {
        return std::max(p.opacity_a(), p.opacity_b()) < config.prune_opacity_threshold ||
               std::exp(p.log_scale.maxCoeff()) > 0.1 * extent;
    };
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        if (prunable(scene.primitives[i])) {
            ++report.pruned;
            continue;
        }
        keep_old[i] = true;
        next.push_back(std::move(scene.primitives[i]));
    }
    std::size_t appended = 0;
    for (auto& p : added) {
        if (prunable(p)) {
            ++report.pruned;
            continue;
        }
        next.push_back(std::move(p));
        ++appended;
    }
    scene.primitives = std::move(next);
    state.remove_and_append(keep_old, appended, param_count(scene.sh_degree));
    return report;
}

void reset_opacity(Scene& scene, double ceiling) {
    const double cap = logit(ceiling);
    for (auto& p : scene.primitives) {
        p.raw_opacity_a = std::min(p.raw_opacity_a, cap);
        p.raw_opacity_b = std::min(p.raw_opacity_b, cap);
    }
}

double opacity_disparity(const Scene& scene) {
    if (scene.primitives.empty()) throw Error(ErrorKind::EmptyScene, "opacity_disparity of an empty scene");
    double sum = 0.0;
    for (const auto& p : scene.primitives) sum += std::abs(p.opacity_a() - p.opacity_b());
    return sum / static_cast<double>(scene.primitives.size());
}

double scene_extent(const std::vector<TrainView>& views) {
    if (views.empty()) return 1.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& v : views) mean += v.camera.center();
    mean /= static_cast<double>(views.size());
    double radius = 0.0;
    for (const auto& v : views) radius = std::max(radius, (v.camera.center() - mean).norm());
    return radius > 0.0 ? 1.1 * radius : 1.0;
}

TrainResult train(Scene scene, const std::vector<TrainView>& views, const TrainConfig& config,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const IterationLog&)>& on_iteration) {
    config.validate();
    scene.validate();
    if (views.empty()) throw Error(ErrorKind::InvalidArgument, "no training views");

    std::ofstream metrics;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir / "checkpoints");
        metrics.open(out_dir / "metrics.csv");
        if (!metrics) throw Error(ErrorKind::IoError, "cannot write " + (out_dir / "metrics.csv").string());
        metrics << "iteration,loss,psnr,primitive_count,opacity_disparity,events\n" << std::setprecision(10);
    }

    const double extent = scene_extent(views);
    std::mt19937_64 rng(config.seed);
    std::mt19937_64 densify_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    OptimizerState state;
    state.resize(scene);

    std::vector<std::size_t> order;
    std::size_t cursor = 0;
    TrainResult result;
    result.log.reserve(static_cast<std::size_t>(config.total_iters));

    for (int it = 1; it <= config.total_iters; ++it) {
        if (cursor == order.size()) {
            order.resize(views.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const TrainView& view = views[order[cursor++]];
        const StepResult sr = step(scene, view, config, state, it, extent);

        IterationLog entry;
        entry.iteration = it;
        entry.loss = sr.loss;
        entry.psnr = sr.psnr;
        std::string events;
        if (config.densifies()) {
            if (on_schedule(it, config.densify_interval, config.densify_interval, config.densify_until)) {
                const DensifyReport rep = densify_and_prune(scene, state, config, extent, densify_rng);
                events = "densify(" + std::to_string(rep.cloned) + "/" + std::to_string(rep.split) + "/" +
                         std::to_string(rep.pruned) + ")";
            }
            if (on_schedule(it, config.opacity_reset_start, config.opacity_reset_interval,
                            config.opacity_reset_until)) {
                reset_opacity(scene, config.opacity_reset_ceiling);
                for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
                    const std::size_t at = param_count(scene.sh_degree) - 2;
                    state.m[i][at] = state.m[i][at + 1] = 0.0;
                    state.v[i][at] = state.v[i][at + 1] = 0.0;
                }
                if (!events.empty()) events += ";";
                events += "reset";
            }
        }
        entry.primitive_count = scene.primitives.size();
        entry.opacity_disparity = scene.primitives.empty() ? 0.0 : opacity_disparity(scene);
        entry.events = events;

        if (metrics.is_open()) {
            metrics << entry.iteration << ',' << entry.loss << ',' << entry.psnr << ',' << entry.primitive_count
                    << ',' << entry.opacity_disparity << ',' << entry.events << '\n';
        }
        if (on_iteration) on_iteration(entry);
        result.log.push_back(std::move(entry));

        if (!out_dir.empty() && config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0 &&
            it != config.total_iters) {
            std::ostringstream name;
            name << "iter_" << std::setw(6) << std::setfill('0') << it << ".ply";
            save_scene(scene, out_dir / "checkpoints" / name.str());
        }
    }
    if (!out_dir.empty()) {
        save_scene(scene, out_dir / "scene.ply");
        metrics.flush();
        if (!metrics) throw Error(ErrorKind::IoError, "failed writing metrics.csv");
    }
    result.scene = std::move(scene);
    return result;
}

} // namespace hgs
