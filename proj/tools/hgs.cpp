// hgs: train, render, evaluate and verify half-Gaussian splatting scenes.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.
// HGS_NUM_THREADS overrides the worker thread count.

#include "manifest.hpp"

#include "hgs/dataset.hpp"
#include "hgs/error.hpp"
#include "hgs/halfgauss_kernel.hpp"
#include "hgs/metrics.hpp"
#include "hgs/rasterizer.hpp"
#include "hgs/scene_io.hpp"
#include "hgs/trainer.hpp"
#include "hgs/verification.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#ifndef HGS_VERSION
#define HGS_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace hgs;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;

// Thrown for argument combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double mean_psnr(const Scene& scene, const std::vector<TrainView>& views, KernelMode kernel) {
    double sum = 0.0;
    for (const auto& v : views) sum += psnr(render(scene, v.camera, {kernel, 0}).color, v.image);
    return sum / static_cast<double>(views.size());
}

Scene load_any_scene(const fs::path& path, NormalInit init, std::uint64_t seed) {
    if (!fs::exists(path)) throw Error(ErrorKind::IoError, "scene file not found: " + path.string());
    return has_second_opacity(path) ? load_scene(path) : import_3dgs(path, init, seed);
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string init;
    std::string out;
    std::string manifest;
    std::string mode = "scratch";
    std::string kernel = "half";
    std::string normal_init = "jitter";
    int iters = 30000;
    int densify_until = -1;
    double lambda_ssim = 0.2;
    double lr_normal = 0.003;
    std::uint64_t seed = 0;
    int sh_degree = 3;
    bool no_density_control = false;
    std::size_t max_primitives = 0;
    int checkpoint_every = 0;
    int log_every = 100;
};

int cmd_train(const TrainArgs& a) {
    cli::RunManifest m;
    if (!a.manifest.empty()) {
        m = cli::read_manifest(a.manifest);
    } else {
        if (a.data.empty()) throw UsageError("--data is required unless --manifest is given");
        TrainConfig& c = m.config;
        c.total_iters = a.iters;
        c.densify_until = a.densify_until > 0 ? a.densify_until : std::min(c.densify_until, std::max(a.iters, 1));
        c.lambda_ssim = a.lambda_ssim;
        c.lr_normal = a.lr_normal;
        c.mode = *cli::parse_mode(a.mode);
        c.kernel = *cli::parse_kernel(a.kernel);
        c.density_control = !a.no_density_control;
        c.max_primitives = a.max_primitives;
        c.seed = a.seed;
        c.checkpoint_interval = a.checkpoint_every;
        m.dataset = fs::absolute(a.data).string();
        m.init = a.init.empty() ? std::string() : fs::absolute(a.init).string();
        m.normal_init = a.normal_init == "random" ? NormalInit::RandomUnit : NormalInit::ZeroPlusJitter;
        m.sh_degree = a.sh_degree;
    }
    m.version = HGS_VERSION;
    m.config.validate();
    if (m.config.mode != TrainMode::FromScratch && m.init.empty()) {
        throw UsageError(std::string("--mode ") + cli::mode_flag(m.config.mode) + " needs --init");
    }

    const Dataset ds = load_dataset(m.dataset);
    if (ds.train.empty()) throw Error(ErrorKind::InvalidArgument, m.dataset + ": no training views");
    Scene scene;
    if (!m.init.empty()) {
        scene = load_any_scene(m.init, m.normal_init, m.config.seed);
    } else {
        if (!ds.points) throw Error(ErrorKind::IoError, (fs::path(m.dataset) / "points.ply").string() + " not found; pass --init");
        scene = init_from_points(*ds.points, m.sh_degree, m.config.seed, ds.background);
    }
    scene.background = ds.background;

    const fs::path out = a.out;
    fs::create_directories(out);
    m.started_at = cli::utc_timestamp();
    cli::write_manifest(m, out / "manifest.json");

    const int log_every = a.log_every;
    auto progress = [&](const IterationLog& e) {
        if (log_every > 0 && (e.iteration % log_every == 0 || e.iteration == m.config.total_iters)) {
            std::printf("iter %6d  loss %.5f  psnr %6.2f  primitives %zu  disparity %.4f%s%s\n", e.iteration, e.loss,
                        e.psnr, e.primitive_count, e.opacity_disparity, e.events.empty() ? "" : "  ",
                        e.events.c_str());
            std::fflush(stdout);
        }
    };
    const TrainResult result = train(std::move(scene), ds.train, m.config, out, progress);

    m.finished_at = cli::utc_timestamp();
    cli::write_manifest(m, out / "manifest.json");

    std::printf("final train PSNR %.3f dB over %zu views\n", mean_psnr(result.scene, ds.train, m.config.kernel),
                ds.train.size());
    if (!ds.test.empty()) {
        std::printf("final test PSNR %.3f dB over %zu views\n", mean_psnr(result.scene, ds.test, m.config.kernel),
                    ds.test.size());
    }
    std::printf("wrote %s\n", (out / "scene.ply").c_str());
    return kExitOk;
}

// ---- render ---------------------------------------------------------------

struct RenderArgs {
    std::string scene;
    std::string cameras;
    std::string orbit;
    std::string out;
    std::string kernel = "half";
    int width = 256;
    int height = 256;
    double focal = 0.0;
    double elevation = 0.3;
    bool depth = false;
    bool normal_map = false;
};

struct NamedCamera {
    std::string name;
    CameraModel camera;
};

std::vector<NamedCamera> orbit_cameras(const std::string& orbit, const RenderArgs& a) {
    std::vector<double> v;
    std::stringstream ss(orbit);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("--orbit: '" + item + "' is not a number");
        }
    }
    if (v.size() != 5) throw UsageError("--orbit expects cx,cy,cz,radius,n_frames");
    const double n = v[4];
    if (!(n >= 1.0) || n != std::floor(n)) throw UsageError("--orbit: n_frames must be a positive integer");
    if (!(v[3] > 0.0)) throw UsageError("--orbit: radius must be positive");
    const Eigen::Vector3d center(v[0], v[1], v[2]);
    const double focal = a.focal > 0.0 ? a.focal : 0.9 * a.width;
    std::vector<NamedCamera> cams;
    for (int i = 0; i < static_cast<int>(n); ++i) {
        const double az = 2.0 * M_PI * i / n;
        const Eigen::Vector3d dir(std::sin(az) * std::cos(a.elevation), std::sin(a.elevation),
                                  std::cos(az) * std::cos(a.elevation));
        std::ostringstream name;
        name << "frame_" << std::setw(4) << std::setfill('0') << i;
        cams.push_back({name.str(), look_at_camera(center + v[3] * dir, center, Eigen::Vector3d::UnitY(), focal,
                                                   a.width, a.height)});
    }
    return cams;
}

Image depth_image(const RenderOutput& r) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < r.depth.data.size(); ++i) {
        if (r.alpha.data[i] >= 0.5) {
            lo = std::min(lo, r.depth.data[i]);
            hi = std::max(hi, r.depth.data[i]);
        }
    }
    Image img(r.depth.width, r.depth.height, 1);
    if (!(hi > lo)) return img;
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        if (r.alpha.data[i] >= 0.5) img.data[i] = 1.0 - (r.depth.data[i] - lo) / (hi - lo);
    }
    return img;
}

int cmd_render(const RenderArgs& a) {
    if (a.cameras.empty() == a.orbit.empty()) throw UsageError("give exactly one of --cameras or --orbit");
    std::vector<NamedCamera> cams;
    if (!a.orbit.empty()) {
        cams = orbit_cameras(a.orbit, a);
    }
    const Scene scene = load_any_scene(a.scene, NormalInit::ZeroPlusJitter, 0);
    scene.validate();
    if (!a.cameras.empty()) {
        for (auto& e : load_cameras(a.cameras)) cams.push_back({fs::path(e.image).stem().string(), e.camera});
    }
    const KernelMode kernel = *cli::parse_kernel(a.kernel);
    const fs::path out = a.out;
    fs::create_directories(out);
    for (const auto& c : cams) {
        const RenderOutput r = render(scene, c.camera, {kernel, 0});
        write_image(r.color, out / (c.name + ".png"));
        if (a.depth) write_image(depth_image(r), out / (c.name + "_depth.png"));
        if (a.normal_map) {
            Image n = render_depth_normalmap(r);
            for (std::size_t i = 0; i < n.data.size(); ++i) {
                if (r.alpha.data[i / 3] >= 0.5) n.data[i] = 0.5 * (n.data[i] + 1.0);
            }
            write_image(n, out / (c.name + "_normal.png"));
        }
    }
    std::printf("rendered %zu view(s) into %s\n", cams.size(), out.c_str());
    return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string scene;
    std::string data;
    std::string out;
    std::string split = "test";
    bool compare = false;
};

EvalReport evaluate(const Scene& scene, const std::vector<TrainView>& views, KernelMode kernel) {
    EvalReport report;
    report.primitive_count = scene.primitives.size();
    for (const auto& v : views) {
        const auto t0 = std::chrono::steady_clock::now();
        const RenderOutput r = render(scene, v.camera, {kernel, 0});
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        report.entries.push_back({v.name, psnr(r.color, v.image), ssim(r.color, v.image), ms});
    }
    report.finalize();
    return report;
}

int cmd_eval(const EvalArgs& a) {
    const Scene scene = load_any_scene(a.scene, NormalInit::ZeroPlusJitter, 0);
    const Dataset ds = load_dataset(a.data);
    std::vector<TrainView> views;
    if (a.split != "train") views.insert(views.end(), ds.test.begin(), ds.test.end());
    if (a.split != "test") views.insert(views.end(), ds.train.begin(), ds.train.end());
    if (views.empty()) throw Error(ErrorKind::InvalidArgument, a.data + ": no " + a.split + " views");

    const EvalReport half = evaluate(scene, views, KernelMode::HalfGaussian);
    std::cout << "half-Gaussian\n";
    half.write_table(std::cout);
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        std::ofstream f(fs::path(a.out) / "eval.csv");
        half.write_csv(f);
    }
    if (a.compare) {
        const EvalReport full = evaluate(scene, views, KernelMode::FullGaussian);
        std::cout << "\ncollapsed (alpha1 = alpha2)\n";
        full.write_table(std::cout);
        std::cout << std::fixed << std::setprecision(3) << "\ndelta PSNR (half - collapsed): "
                  << half.mean_psnr - full.mean_psnr << " dB\n"
                  << std::setprecision(4) << "delta SSIM (half - collapsed): " << half.mean_ssim - full.mean_ssim
                  << '\n';
        if (!a.out.empty()) {
            std::ofstream f(fs::path(a.out) / "eval_collapsed.csv");
            full.write_csv(f);
        }
    }
    return kExitOk;
}

// ---- verify ---------------------------------------------------------------

struct VerifyArgs {
    int trials = 1000;
    int gradient_scenes = 20;
    std::uint64_t seed = 0;
    bool flip_erf_sign = false;
};

int cmd_verify(const VerifyArgs& a) {
    debug::flip_erf_sign = a.flip_erf_sign;
    bool ok = true;
    auto verdict = [&](bool pass) {
        ok = ok && pass;
        return pass ? "ok" : "FAIL";
    };

    const OracleSuiteResult oracle = check_closed_form(a.trials, a.seed);
    std::printf("closed form vs quadrature: %d trials, max rel error %.3e (tol %.0e) %s\n", oracle.trials,
                oracle.max_rel_error, kOracleTolerance, verdict(oracle.max_rel_error <= kOracleTolerance));

    const GradientSuiteResult grads = check_gradients(a.gradient_scenes, a.seed);
    std::printf("gradients vs central differences: %d scenes\n", grads.scenes);
    for (int g = 0; g < kGradientGroups; ++g) {
        std::printf("  %-10s max rel error %.3e (tol %.0e) %s\n", kGradientGroupNames[g], grads.max_rel_error[g],
                    kGradientTolerance, verdict(grads.max_rel_error[g] <= kGradientTolerance));
    }

    const double sh = check_sh_orthonormality();
    std::printf("SH orthonormality: max |G - I| %.3e (tol %.0e) %s\n", sh, kShTolerance, verdict(sh <= kShTolerance));

    debug::flip_erf_sign = false;
    std::printf("%s\n", ok ? "all checks passed" : "verification FAILED");
    return ok ? kExitOk : kExitVerifyFailed;
}

// ---- fixture --------------------------------------------------------------

struct FixtureArgs {
    std::string kind;
    std::string out;
    FixtureOptions options;
};

int cmd_fixture(const FixtureArgs& a) {
    const Dataset ds = make_fixture(*parse_fixture_kind(a.kind), a.options);
    write_dataset(ds, a.out);
    std::printf("wrote %s fixture (%zu train, %zu test views, %zu points) to %s\n", a.kind.c_str(), ds.train.size(),
                ds.test.size(), ds.points ? ds.points->positions.size() : std::size_t{0}, a.out.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Half-Gaussian splatting: train, render, evaluate and verify scenes.\n"
                 "Exit codes: 0 success, 1 verification failure, 2 usage or input error.\n"
                 "HGS_NUM_THREADS sets the worker thread count."};
    app.set_version_flag("--version", HGS_VERSION);
    app.require_subcommand(1);

    const auto modes = CLI::IsMember({"scratch", "finetune", "finetune-densify", "finetune-selective"});
    const auto kernels = CLI::IsMember({"half", "full"});

    TrainArgs ta;
    CLI::App* train_cmd = app.add_subcommand("train", "Optimize a scene against a dataset's training views");
    train_cmd->add_option("--data", ta.data, "Dataset directory (cameras.json or COLMAP text model, images/)");
    train_cmd->add_option("--out", ta.out, "Output directory: manifest.json, metrics.csv, checkpoints/, scene.ply")
        ->required();
    train_cmd->add_option("--init", ta.init,
                          "Initial scene: half-Gaussian point file, or a 3D-GS file (imported with alpha1 = alpha2). "
                          "Default: the dataset's points.ply");
    train_cmd->add_option("--manifest", ta.manifest, "Repeat the run recorded in a manifest.json (other flags ignored)");
    train_cmd->add_option("--iters", ta.iters, "Total iterations")->capture_default_str()->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--densify-until", ta.densify_until,
                          "Last densification iteration bound (default: min(20000, --iters))");
    train_cmd->add_option("--lambda-ssim", ta.lambda_ssim, "Weight of the SSIM term in the loss")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 1.0));
    train_cmd->add_option("--lr-normal", ta.lr_normal, "Learning rate of the split-plane normal; 0 freezes normals")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--mode", ta.mode, "Training strategy")->capture_default_str()->check(modes);
    train_cmd->add_option("--kernel", ta.kernel, "half: paired half-Gaussians; full: alpha1 = alpha2 baseline")
        ->capture_default_str()
        ->check(kernels);
    train_cmd->add_option("--normal-init", ta.normal_init, "Normals for imported 3D-GS files")
        ->capture_default_str()
        ->check(CLI::IsMember({"jitter", "random"}));
    train_cmd->add_option("--seed", ta.seed, "Seed for initialization, view order and densification")
        ->capture_default_str();
    train_cmd->add_option("--sh-degree", ta.sh_degree, "SH degree when initializing from points")
        ->capture_default_str()
        ->check(CLI::Range(0, 3));
    train_cmd->add_flag("--no-density-control", ta.no_density_control, "Disable densification and opacity resets");
    train_cmd->add_option("--max-primitives", ta.max_primitives, "Cap on primitives created by densification (0: none)")
        ->capture_default_str();
    train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "Checkpoint interval in iterations (0: final only)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--log-every", ta.log_every, "Progress line interval (0: silent)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);

    RenderArgs ra;
    CLI::App* render_cmd = app.add_subcommand("render", "Render a scene from dataset cameras or an orbit");
    render_cmd->add_option("--scene", ra.scene, "Scene point file")->required();
    render_cmd->add_option("--cameras", ra.cameras, "cameras.json, COLMAP text model or dataset directory");
    render_cmd->add_option("--orbit", ra.orbit, "Circular orbit cx,cy,cz,radius,n_frames");
    render_cmd->add_option("--out", ra.out, "Output directory")->required();
    render_cmd->add_option("--kernel", ra.kernel, "Kernel to render with")->capture_default_str()->check(kernels);
    render_cmd->add_option("--width", ra.width, "Orbit image width")->capture_default_str()->check(CLI::PositiveNumber);
    render_cmd->add_option("--height", ra.height, "Orbit image height")->capture_default_str()->check(CLI::PositiveNumber);
    render_cmd->add_option("--focal", ra.focal, "Orbit focal length in pixels (default 0.9 x width)");
    render_cmd->add_option("--elevation", ra.elevation, "Orbit elevation in radians")->capture_default_str();
    render_cmd->add_flag("--depth", ra.depth, "Also write <view>_depth.png (near bright, normalized per view, alpha >= 0.5)");
    render_cmd->add_flag("--normal-map", ra.normal_map, "Also write <view>_normal.png from the depth image");

    EvalArgs ea;
    CLI::App* eval_cmd = app.add_subcommand("eval", "PSNR / SSIM of a scene on a dataset's views");
    eval_cmd->add_option("--scene", ea.scene, "Scene point file")->required();
    eval_cmd->add_option("--data", ea.data, "Dataset directory")->required();
    eval_cmd->add_option("--out", ea.out, "Directory for eval.csv (and eval_collapsed.csv)");
    eval_cmd->add_option("--split", ea.split, "Views to evaluate")
        ->capture_default_str()
        ->check(CLI::IsMember({"test", "train", "all"}));
    eval_cmd->add_flag("--compare", ea.compare, "Also evaluate the alpha1 = alpha2 collapsed variant");

    VerifyArgs va;
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the numerical oracle suites");
    verify_cmd->add_option("--trials", va.trials, "Closed-form vs quadrature trials")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    verify_cmd->add_option("--gradient-scenes", va.gradient_scenes, "Random scenes for the gradient check")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    verify_cmd->add_option("--seed", va.seed, "Seed")->capture_default_str();
    verify_cmd->add_flag("--debug-flip-erf-sign", va.flip_erf_sign,
                         "Debug: negate the erf term to confirm the suites detect it (expect exit 1)");

    FixtureArgs fa;
    CLI::App* fixture_cmd = app.add_subcommand("fixture", "Write a procedural test dataset");
    fixture_cmd->add_option("--kind", fa.kind, "Scene")->required()->check(CLI::IsMember({"edge", "corner", "sphere"}));
    fixture_cmd->add_option("--out", fa.out, "Output directory")->required();
    fixture_cmd->add_option("--width", fa.options.width, "Image width")->capture_default_str()->check(CLI::PositiveNumber);
    fixture_cmd->add_option("--height", fa.options.height, "Image height")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    fixture_cmd->add_option("--points", fa.options.points, "Initial points")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    fixture_cmd->add_option("--seed", fa.options.seed, "Point sampling seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_cmd) return cmd_train(ta);
        if (*render_cmd) return cmd_render(ra);
        if (*eval_cmd) return cmd_eval(ea);
        if (*verify_cmd) return cmd_verify(va);
        if (*fixture_cmd) return cmd_fixture(fa);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "usage error: %s\nRun with --help for usage.\n", e.what());
        return kExitUsage;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
