#include "hgs/rasterizer.hpp"

#include "hgs/detail/projection.hpp"
#include "hgs/error.hpp"
#include "hgs/halfgauss_kernel.hpp"
#include "hgs/parallel.hpp"

#include <ceres/jet.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>

namespace hgs {

namespace {

int resolve_workers(const RenderOptions& options) {
    return options.workers > 0 ? options.workers : default_worker_count();
}

// Per-splat constants for the inner loop. The weight is (s + d e) g with
// s = (a1 + a2) / 2 and d = (a1 - a2) / 2; halving is exact, so this matches
// paired_weight bit for bit, and d = 0 reproduces the full-Gaussian path.
struct SplatKernel {
    double mx, my;
    double c00, c01, c11;
    double k1, k2; // erf argument = k1 dx + k2 dy
    double s, d;
    double r, g, b, z;
    bool singular; // |n3| below threshold: erf replaced by sign
};

SplatKernel make_kernel(const ScreenSplat& sp, KernelMode mode) {
    SplatKernel k{};
    k.mx = sp.mu_hat.x();
    k.my = sp.mu_hat.y();
    k.c00 = sp.conic00;
    k.c01 = sp.conic01;
    k.c11 = sp.conic11;
    k.s = 0.5 * (sp.alpha1 + sp.alpha2);
    k.r = sp.rgb.x();
    k.g = sp.rgb.y();
    k.b = sp.rgb.z();
    k.z = sp.depth;
    if (mode == KernelMode::HalfGaussian && !sp.degenerate) {
        k.d = 0.5 * (sp.alpha1 - sp.alpha2);
        const double n3 = std::abs(sp.n_ray.z());
        k.singular = n3 < kSingularNormal;
        const double scale = k.singular ? 1.0 : 1.0 / (M_SQRT2 * n3);
        k.k1 = (sp.n_ray.x() * sp.w00 + sp.n_ray.y() * sp.w10) * scale;
        k.k2 = sp.n_ray.y() * sp.w11 * scale;
    }
    return k;
}

struct Evaluation {
    double g;   // Gaussian falloff
    double e;   // erf term in [-1, 1]
    double arg; // erf argument
    double raw; // weight before the ceiling
    double w;   // clamped weight
};

template <bool Split>
inline Evaluation evaluate(const SplatKernel& k, double dx, double dy) {
    Evaluation ev{};
    const double power = -0.5 * (k.c00 * dx * dx + k.c11 * dy * dy) - k.c01 * dx * dy;
    if (power < kCutoffPower) return ev;
    ev.g = std::exp(power);
    if constexpr (Split) {
        ev.arg = k.k1 * dx + k.k2 * dy;
        if (k.singular) {
            ev.e = ev.arg > 0.0 ? 1.0 : (ev.arg < 0.0 ? -1.0 : 0.0);
        } else {
            ev.e = kernel_erf(ev.arg);
        }
        ev.raw = (k.s + k.d * ev.e) * ev.g;
    } else {
        ev.raw = k.s * ev.g;
    }
    ev.w = std::min(ev.raw, kMaxSplatWeight);
    return ev;
}

ScreenSplat project_primitive(const HalfGaussianPrimitive& p, int index, const CameraModel& cam,
                              int sh_degree, bool& visible) {
    visible = false;
    ScreenSplat s;
    s.prim_index = index;
    const Eigen::Matrix3d sigma = detail::covariance<double>(p.log_scale, p.rotation);
    const auto g = detail::project_splat<double>(p.mu, sigma, p.normal, cam);
    if (g.culled) return s;

    s.mu_hat = g.mu_hat;
    s.conic00 = g.conic00;
    s.conic01 = g.conic01;
    s.conic11 = g.conic11;
    s.w00 = g.w00;
    s.w10 = g.w10;
    s.w11 = g.w11;
    s.n_ray = g.n_ray;
    s.degenerate = g.degenerate;
    s.depth = g.depth;
    s.alpha1 = p.opacity_a();
    s.alpha2 = p.opacity_b();
    s.rgb = detail::sh_color<double>(p.mu, cam.center(), p.sh_coeffs, sh_degree);

    // Tiles touched by the bounding box of the 3-sigma ellipse.
    const double rx = 3.0 * std::sqrt(g.cov00);
    const double ry = 3.0 * std::sqrt(g.cov11);
    const double px0 = std::max(0.0, std::ceil(g.mu_hat.x() - rx));
    const double py0 = std::max(0.0, std::ceil(g.mu_hat.y() - ry));
    const double px1 = std::min(static_cast<double>(cam.width - 1), std::floor(g.mu_hat.x() + rx));
    const double py1 = std::min(static_cast<double>(cam.height - 1), std::floor(g.mu_hat.y() + ry));
    if (!(px0 <= px1 && py0 <= py1) || !std::isfinite(rx) || !std::isfinite(ry)) return s;
    s.tile_span.x0 = static_cast<int>(px0) / kTileSize;
    s.tile_span.y0 = static_cast<int>(py0) / kTileSize;
    s.tile_span.x1 = static_cast<int>(px1) / kTileSize + 1;
    s.tile_span.y1 = static_cast<int>(py1) / kTileSize + 1;
    visible = !s.tile_span.empty();
    return s;
}

struct Instance {
    std::uint32_t tile;
    double depth;
    std::uint32_t splat;
};

template <bool Split>
void blend_tile(RenderOutput& out, const std::vector<SplatKernel>& kernels, std::size_t tile) {
    const CameraModel& cam = out.camera;
    const Eigen::Vector3d bg = out.background;
    const int tx = static_cast<int>(tile) % out.tiles_x;
    const int ty = static_cast<int>(tile) / out.tiles_x;
    const auto [begin, end] = out.tile_ranges[tile];
    // Contiguous copy of this tile's depth-ordered splats.
    std::vector<SplatKernel> local(end - begin);
    for (std::uint32_t i = begin; i < end; ++i) local[i - begin] = kernels[out.tile_instances[i]];
    const std::size_t count_all = local.size();
    const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
    const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y) {
        for (int x = tx * kTileSize; x < x_end; ++x) {
            double t = 1.0;
            double r = 0.0, g = 0.0, b = 0.0, z = 0.0, acc = 0.0;
            std::uint32_t count = 0;
            for (std::size_t i = 0; i < count_all; ++i) {
                const SplatKernel& k = local[i];
                const Evaluation ev = evaluate<Split>(k, x - k.mx, y - k.my);
                const double next_t = t * (1.0 - ev.w);
                if (next_t < kMinTransmittance) break;
                const double contrib = ev.w * t;
                r += k.r * contrib;
                g += k.g * contrib;
                b += k.b * contrib;
                z += k.z * contrib;
                acc += contrib;
                t = next_t;
                count = static_cast<std::uint32_t>(i + 1);
            }
            const std::size_t px = static_cast<std::size_t>(y) * cam.width + x;
            out.per_pixel_terminal_index[px] = count;
            out.final_transmittance[px] = t;
            out.color.at(x, y, 0) = r + t * bg.x();
            out.color.at(x, y, 1) = g + t * bg.y();
            out.color.at(x, y, 2) = b + t * bg.z();
            out.alpha.at(x, y) = acc;
            out.depth.at(x, y) = acc > 0.0 ? z / acc : 0.0;
        }
    }
}

} // namespace

RenderOutput render(const Scene& scene, const CameraModel& cam, const RenderOptions& options) {
    scene.validate();
    cam.validate();
    const auto pixels = static_cast<std::uint64_t>(cam.width) * static_cast<std::uint64_t>(cam.height);
    if (pixels > (std::uint64_t{1} << 31)) {
        throw Error(ErrorKind::ImageTooLarge, std::to_string(cam.width) + "x" + std::to_string(cam.height));
    }
    const int workers = resolve_workers(options);

    RenderOutput out;
    out.camera = cam;
    out.kernel = options.kernel;
    out.background = scene.background;
    out.primitive_count = scene.primitives.size();
    out.tiles_x = (cam.width + kTileSize - 1) / kTileSize;
    out.tiles_y = (cam.height + kTileSize - 1) / kTileSize;
    const int tile_count = out.tiles_x * out.tiles_y;

    // Project every primitive (independent per primitive).
    const std::size_t n = scene.primitives.size();
    std::vector<ScreenSplat> projected(n);
    std::vector<char> visible(n, 0);
    parallel_for(n, workers, [&](std::size_t i) {
        bool vis = false;
        projected[i] = project_primitive(scene.primitives[i], static_cast<int>(i), cam, scene.sh_degree, vis);
        visible[i] = vis ? 1 : 0;
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (visible[i]) out.splats.push_back(projected[i]);
    }

    // Bin into tiles and sort each tile front to back; ties by primitive index.
    std::vector<Instance> instances;
    for (std::size_t s = 0; s < out.splats.size(); ++s) {
        const TileRect& r = out.splats[s].tile_span;
        for (int ty = r.y0; ty < r.y1; ++ty) {
            for (int tx = r.x0; tx < r.x1; ++tx) {
                instances.push_back({static_cast<std::uint32_t>(ty * out.tiles_x + tx), out.splats[s].depth,
                                     static_cast<std::uint32_t>(s)});
            }
        }
    }
    std::sort(instances.begin(), instances.end(), [](const Instance& a, const Instance& b) {
        if (a.tile != b.tile) return a.tile < b.tile;
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.splat < b.splat;
    });
    out.tile_instances.resize(instances.size());
    out.tile_ranges.assign(static_cast<std::size_t>(tile_count), {0, 0});
    for (std::size_t i = 0; i < instances.size(); ++i) {
        out.tile_instances[i] = instances[i].splat;
        auto& range = out.tile_ranges[instances[i].tile];
        if (range.second == 0) range.first = static_cast<std::uint32_t>(i);
        range.second = static_cast<std::uint32_t>(i + 1);
    }

    std::vector<SplatKernel> kernels(out.splats.size());
    for (std::size_t s = 0; s < out.splats.size(); ++s) kernels[s] = make_kernel(out.splats[s], options.kernel);

    out.color = Image(cam.width, cam.height, 3);
    out.alpha = Image(cam.width, cam.height, 1);
    out.depth = Image(cam.width, cam.height, 1);
    out.per_pixel_terminal_index.assign(pixels, 0);
    out.final_transmittance.assign(pixels, 1.0);

    parallel_for(static_cast<std::size_t>(tile_count), workers, [&](std::size_t tile) {
        if (options.kernel == KernelMode::HalfGaussian) {
            blend_tile<true>(out, kernels, tile);
        } else {
            blend_tile<false>(out, kernels, tile);
        }
    });
    return out;
}

namespace {

// Cotangents of one splat's screen-space quantities.
struct ScreenGrad {
    double mu_x = 0, mu_y = 0;
    double c00 = 0, c01 = 0, c11 = 0;
    double w00 = 0, w10 = 0, w11 = 0;
    double n1 = 0, n2 = 0, n3 = 0;
    double a1 = 0, a2 = 0;
    double r = 0, g = 0, b = 0;

    void add(const ScreenGrad& o) {
        mu_x += o.mu_x; mu_y += o.mu_y;
        c00 += o.c00; c01 += o.c01; c11 += o.c11;
        w00 += o.w00; w10 += o.w10; w11 += o.w11;
        n1 += o.n1; n2 += o.n2; n3 += o.n3;
        a1 += o.a1; a2 += o.a2;
        r += o.r; g += o.g; b += o.b;
    }
};

// Backward of one splat's weight at one pixel, given dL/dw.
template <bool Split>
void weight_backward(const ScreenSplat& sp, const SplatKernel& k, const Evaluation& ev, double dx, double dy,
                     double d_w, ScreenGrad& grad) {
    if (ev.raw > kMaxSplatWeight) return; // clamped: weight is locally constant
    double d_g;
    if constexpr (Split) {
        const double h = k.s + k.d * ev.e;
        d_g = d_w * h;
        const double d_h = d_w * ev.g;
        grad.a1 += d_h * 0.5 * (1.0 + ev.e);
        grad.a2 += d_h * 0.5 * (1.0 - ev.e);
        if (!k.singular && k.d != 0.0) {
            const double d_e = d_h * k.d;
            const double d_arg = d_e * kernel_erf_derivative(ev.arg);
            const double n1 = sp.n_ray.x(), n2 = sp.n_ray.y(), n3 = sp.n_ray.z();
            const double inv = 1.0 / (M_SQRT2 * std::abs(n3));
            const double u1 = sp.w00 * dx;
            const double u2 = sp.w10 * dx + sp.w11 * dy;
            const double d_num = d_arg * inv;
            grad.n1 += d_num * u1;
            grad.n2 += d_num * u2;
            grad.n3 += -d_arg * ev.arg / n3;
            const double d_u1 = d_num * n1;
            const double d_u2 = d_num * n2;
            grad.w00 += d_u1 * dx;
            grad.w10 += d_u2 * dx;
            grad.w11 += d_u2 * dy;
            // d(offset) from the whitened coordinates; offset = pixel - mu_hat.
            const double d_dx = sp.w00 * d_u1 + sp.w10 * d_u2;
            const double d_dy = sp.w11 * d_u2;
            grad.mu_x -= d_dx;
            grad.mu_y -= d_dy;
        }
    } else {
        d_g = d_w * k.s;
        grad.a1 += 0.5 * d_w * ev.g;
        grad.a2 += 0.5 * d_w * ev.g;
    }
    const double d_power = d_g * ev.g;
    grad.c00 += -0.5 * d_power * dx * dx;
    grad.c11 += -0.5 * d_power * dy * dy;
    grad.c01 += -d_power * dx * dy;
    const double d_dx = -d_power * (k.c00 * dx + k.c01 * dy);
    const double d_dy = -d_power * (k.c01 * dx + k.c11 * dy);
    grad.mu_x -= d_dx;
    grad.mu_y -= d_dy;
}

template <bool Split>
void backward_tile(const RenderOutput& out, const std::vector<SplatKernel>& kernels, const Image& d_color,
                   std::size_t tile, std::vector<ScreenGrad>& instance_grads) {
    const CameraModel& cam = out.camera;
    const Eigen::Vector3d bg = out.background;
    const int tx = static_cast<int>(tile) % out.tiles_x;
    const int ty = static_cast<int>(tile) / out.tiles_x;
    const std::uint32_t begin = out.tile_ranges[tile].first;
    const int x_end = std::min(cam.width, (tx + 1) * kTileSize);
    const int y_end = std::min(cam.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y) {
        for (int x = tx * kTileSize; x < x_end; ++x) {
            const std::size_t px = static_cast<std::size_t>(y) * cam.width + x;
            const double gr = d_color.at(x, y, 0), gg = d_color.at(x, y, 1), gb = d_color.at(x, y, 2);
            if (gr == 0.0 && gg == 0.0 && gb == 0.0) continue;
            double t = out.final_transmittance[px];
            // Color composited behind the current splat, background included.
            double sr = t * bg.x(), sg = t * bg.y(), sb = t * bg.z();
            for (std::uint32_t c = out.per_pixel_terminal_index[px]; c-- > 0;) {
                const std::uint32_t slot = begin + c;
                const std::uint32_t s = out.tile_instances[slot];
                const SplatKernel& k = kernels[s];
                const ScreenSplat& sp = out.splats[s];
                const double dx = x - k.mx, dy = y - k.my;
                const Evaluation ev = evaluate<Split>(k, dx, dy);
                const double inv_one_minus = 1.0 / (1.0 - ev.w);
                const double t_before = t * inv_one_minus;
                const double contrib = ev.w * t_before;

                ScreenGrad& grad = instance_grads[slot];
                grad.r += gr * contrib;
                grad.g += gg * contrib;
                grad.b += gb * contrib;
                const double d_w = gr * (k.r * t_before - sr * inv_one_minus) +
                                   gg * (k.g * t_before - sg * inv_one_minus) +
                                   gb * (k.b * t_before - sb * inv_one_minus);
                weight_backward<Split>(sp, k, ev, dx, dy, d_w, grad);

                sr += k.r * contrib;
                sg += k.g * contrib;
                sb += k.b * contrib;
                t = t_before;
            }
        }
    }
}

constexpr int kJetInputs = 13; // mu(3) log_scale(3) rotation(4) normal(3)
using Jet = ceres::Jet<double, kJetInputs>;

// Chain screen-space cotangents back to primitive parameters. The projection
// is re-run on dual numbers, which yields its exact Jacobian.
void primitive_backward(const HalfGaussianPrimitive& p, const CameraModel& cam, int sh_degree,
                        const ScreenSplat& sp, const ScreenGrad& sg, KernelMode mode, PrimitiveGradient& out) {
    detail::Vec3<Jet> mu, log_scale, normal;
    detail::Vec4<Jet> rotation;
    for (int i = 0; i < 3; ++i) {
        mu[i] = Jet(p.mu[i], i);
        log_scale[i] = Jet(p.log_scale[i], 3 + i);
        normal[i] = Jet(p.normal[i], 10 + i);
    }
    for (int i = 0; i < 4; ++i) rotation[i] = Jet(p.rotation[i], 6 + i);

    const auto sigma = detail::covariance<Jet>(log_scale, rotation);
    const auto g = detail::project_splat<Jet>(mu, sigma, normal, cam);
    const auto rgb = detail::sh_color<Jet>(mu, cam.center(), p.sh_coeffs, sh_degree);

    Eigen::Matrix<double, kJetInputs, 1> total = Eigen::Matrix<double, kJetInputs, 1>::Zero();
    total += sg.mu_x * g.mu_hat[0].v + sg.mu_y * g.mu_hat[1].v;
    total += sg.c00 * g.conic00.v + sg.c01 * g.conic01.v + sg.c11 * g.conic11.v;
    total += sg.r * rgb[0].v + sg.g * rgb[1].v + sg.b * rgb[2].v;
    if (mode == KernelMode::HalfGaussian && !g.degenerate) {
        total += sg.w00 * g.w00.v + sg.w10 * g.w10.v + sg.w11 * g.w11.v;
        total += sg.n1 * g.n_ray[0].v + sg.n2 * g.n_ray[1].v + sg.n3 * g.n_ray[2].v;
    }
    out.d_mu += total.segment<3>(0);
    out.d_log_scale += total.segment<3>(3);
    out.d_rotation += total.segment<4>(6);
    out.d_normal += total.segment<3>(10);

    // Color is linear in the SH coefficients except where the zero floor is active.
    Eigen::Vector3d dir = (p.mu - cam.center()).normalized();
    const ShBasisValues basis = eval_sh_basis(dir, sh_degree);
    Eigen::Vector3d unclamped = Eigen::Vector3d::Constant(0.5);
    for (int i = 0; i < sh_coeff_count(sh_degree); ++i) unclamped += basis.values[i] * p.sh_coeffs[i];
    const Eigen::Vector3d d_rgb(unclamped.x() < 0.0 ? 0.0 : sg.r, unclamped.y() < 0.0 ? 0.0 : sg.g,
                                unclamped.z() < 0.0 ? 0.0 : sg.b);
    for (int i = 0; i < sh_coeff_count(sh_degree); ++i) out.d_sh[i] += basis.values[i] * d_rgb;

    out.d_raw_opacity_a += sg.a1 * sp.alpha1 * (1.0 - sp.alpha1);
    out.d_raw_opacity_b += sg.a2 * sp.alpha2 * (1.0 - sp.alpha2);
}

} // namespace

GradientSet render_backward(const Scene& scene, const CameraModel& cam, const RenderOutput& out,
                            const Image& d_color, const RenderOptions& options) {
    const std::size_t pixels = static_cast<std::size_t>(cam.width) * cam.height;
    if (out.primitive_count != scene.primitives.size() || out.color.width != cam.width ||
        out.color.height != cam.height || d_color.width != cam.width || d_color.height != cam.height ||
        d_color.channels != 3 || out.per_pixel_terminal_index.size() != pixels ||
        out.final_transmittance.size() != pixels ||
        out.tile_ranges.size() != static_cast<std::size_t>(out.tiles_x) * out.tiles_y) {
        throw Error(ErrorKind::MismatchedForward, "forward bookkeeping does not match the backward inputs");
    }
    const int workers = resolve_workers(options);
    const KernelMode mode = out.kernel;

    std::vector<SplatKernel> kernels(out.splats.size());
    for (std::size_t s = 0; s < out.splats.size(); ++s) kernels[s] = make_kernel(out.splats[s], mode);

    // One cotangent slot per (tile, splat) instance: tiles write disjoint
    // slots, and the reduction below runs in a fixed order, so the result does
    // not depend on the worker count.
    std::vector<ScreenGrad> instance_grads(out.tile_instances.size());
    parallel_for(out.tile_ranges.size(), workers, [&](std::size_t tile) {
        if (mode == KernelMode::HalfGaussian) {
            backward_tile<true>(out, kernels, d_color, tile, instance_grads);
        } else {
            backward_tile<false>(out, kernels, d_color, tile, instance_grads);
        }
    });

    std::vector<ScreenGrad> splat_grads(out.splats.size());
    for (std::size_t i = 0; i < out.tile_instances.size(); ++i) {
        splat_grads[out.tile_instances[i]].add(instance_grads[i]);
    }

    GradientSet grads;
    const std::size_t n = scene.primitives.size();
    grads.prims.resize(n);
    grads.screen_grad_norm.assign(n, 0.0);
    grads.touch_count.assign(n, 0);
    const auto coeffs = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
    for (auto& p : grads.prims) p.d_sh.assign(coeffs, Eigen::Vector3d::Zero());

    parallel_for(out.splats.size(), workers, [&](std::size_t s) {
        const ScreenSplat& sp = out.splats[s];
        const auto idx = static_cast<std::size_t>(sp.prim_index);
        primitive_backward(scene.primitives[idx], cam, scene.sh_degree, sp, splat_grads[s], mode, grads.prims[idx]);
        const double ndc_x = splat_grads[s].mu_x * 0.5 * cam.width;
        const double ndc_y = splat_grads[s].mu_y * 0.5 * cam.height;
        grads.screen_grad_norm[idx] = std::sqrt(ndc_x * ndc_x + ndc_y * ndc_y);
        grads.touch_count[idx] = 1;
    });
    return grads;
}

Image render_depth_normalmap(const RenderOutput& out) {
    const CameraModel& cam = out.camera;
    const int w = out.depth.width, h = out.depth.height;
    Image normals(w, h, 3);
    auto valid = [&](int x, int y) {
        return x >= 0 && y >= 0 && x < w && y < h && out.alpha.at(x, y) >= 0.5;
    };
    auto backproject = [&](int x, int y) {
        const double z = out.depth.at(x, y);
        return Eigen::Vector3d((x - cam.cx) / cam.fx * z, (y - cam.cy) / cam.fy * z, z);
    };
    // Central difference where both neighbours are valid, else one-sided.
    auto tangent = [&](int x, int y, int sx, int sy) -> std::optional<Eigen::Vector3d> {
        const bool fwd = valid(x + sx, y + sy), back = valid(x - sx, y - sy);
        if (fwd && back) return backproject(x + sx, y + sy) - backproject(x - sx, y - sy);
        if (fwd) return backproject(x + sx, y + sy) - backproject(x, y);
        if (back) return backproject(x, y) - backproject(x - sx, y - sy);
        return std::nullopt;
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!valid(x, y)) continue;
            const auto tx = tangent(x, y, 1, 0);
            const auto ty = tangent(x, y, 0, 1);
            if (!tx || !ty) continue;
            // Image y points down, so ty x tx faces the camera (-z).
            const Eigen::Vector3d nrm = ty->cross(*tx);
            const double len = nrm.norm();
            if (!(len > 0.0)) continue;
            for (int c = 0; c < 3; ++c) normals.at(x, y, c) = nrm[c] / len;
        }
    }
    return normals;
}

} // namespace hgs
