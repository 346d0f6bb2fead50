#include "test_support.hpp"

#include "hgs/error.hpp"
#include "hgs/metrics.hpp"
#include "hgs/scene_io.hpp"
#include "hgs/trainer.hpp"
#include "hgs/verification.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

namespace hgs {
namespace {

Image noise_image(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(w, h, 3);
    for (double& v : img.data) v = u(rng);
    return img;
}

// Views of a random ground-truth scene from a few orbiting cameras.
std::vector<TrainView> views_of(const Scene& truth, int size, int count) {
    std::vector<TrainView> views;
    for (int i = 0; i < count; ++i) {
        const double a = 0.4 * (i - (count - 1) / 2.0);
        TrainView v;
        v.name = "v" + std::to_string(i);
        v.camera = look_at_camera(Eigen::Vector3d(4.0 * std::sin(a), 0.3, 4.0 * std::cos(a)), Eigen::Vector3d::Zero(),
                                  Eigen::Vector3d::UnitY(), 1.2 * size, size, size);
        v.image = render(truth, v.camera, {KernelMode::HalfGaussian, 1}).color;
        views.push_back(std::move(v));
    }
    return views;
}

TrainConfig short_config(int iters) {
    TrainConfig c;
    c.total_iters = iters;
    c.densify_until = iters;
    c.workers = 1;
    return c;
}

TEST(ComputeLoss, IdenticalImagesGiveZero) {
    const Image a = noise_image(16, 16, 1);
    const LossResult r = compute_loss(a, a, 0.2);
    EXPECT_EQ(r.l1, 0.0);
    EXPECT_NEAR(r.loss, 0.0, 1e-15);
    EXPECT_NEAR(r.ssim, 1.0, 1e-15);
}

TEST(ComputeLoss, PureL1) {
    const Image zeros(16, 16, 3, 0.0), ones(16, 16, 3, 1.0);
    const LossResult r = compute_loss(zeros, ones, 0.0);
    EXPECT_EQ(r.loss, 1.0);
    EXPECT_EQ(r.l1, 1.0);
}

TEST(ComputeLoss, NonNegative) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const LossResult r = compute_loss(noise_image(16, 16, s), noise_image(16, 16, s + 100), 0.2);
        EXPECT_GE(r.loss, 0.0);
    }
}

TEST(ComputeLoss, GradientMatchesFiniteDifferences) {
    const Image a = noise_image(14, 13, 2), b = noise_image(14, 13, 3);
    const LossResult r = compute_loss(a, b, 0.2);
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<std::size_t> pick(0, a.data.size() - 1);
    const double h = 1e-7;
    for (int k = 0; k < 60; ++k) {
        const std::size_t i = pick(rng);
        Image ap = a, am = a;
        ap.data[i] += h;
        am.data[i] -= h;
        const double fd = (compute_loss(ap, b, 0.2).loss - compute_loss(am, b, 0.2).loss) / (2 * h);
        ASSERT_NEAR(r.d_color.data[i], fd, 1e-6) << i;
    }
}

TEST(ComputeLoss, ShapeMismatch) {
    try {
        compute_loss(Image(16, 16, 3), Image(16, 15, 3), 0.2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(TrainConfig, ValidateRejectsBadValues) {
    EXPECT_NO_THROW(TrainConfig{}.validate());
    TrainConfig c;
    c.total_iters = -1;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.densify_until = 0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.densify_until = 40000;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lambda_ssim = 1.5;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lr.opacity = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lr_normal = -1e-3;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.lr_normal = 0.0;
    EXPECT_NO_THROW(c.validate());
}

TEST(TrainConfig, SelectiveModeTrainsOnlyNormalsAndOpacities) {
    TrainConfig c;
    c.mode = TrainMode::FinetuneNormalsOpacities;
    EXPECT_TRUE(c.trains(ParamGroup::Normal));
    EXPECT_TRUE(c.trains(ParamGroup::Opacity));
    for (ParamGroup g : {ParamGroup::Mu, ParamGroup::LogScale, ParamGroup::Rotation, ParamGroup::ShDc,
                         ParamGroup::ShRest}) {
        EXPECT_FALSE(c.trains(g));
    }
    EXPECT_FALSE(c.densifies());
    c.mode = TrainMode::FinetuneAllWithDensify;
    EXPECT_TRUE(c.densifies());
    c.density_control = false;
    EXPECT_FALSE(c.densifies());
}

TEST(TrainConfig, PositionRateDecaysLogLinearly) {
    TrainConfig c;
    EXPECT_NEAR(c.group_lr(ParamGroup::Mu, 0, 2.0), 1.6e-4 * 2.0, 1e-18);
    EXPECT_NEAR(c.group_lr(ParamGroup::Mu, c.total_iters, 2.0), 1.6e-6 * 2.0, 1e-19);
    EXPECT_NEAR(c.group_lr(ParamGroup::Mu, c.total_iters / 2, 1.0), 1.6e-5, 1e-18);
    EXPECT_EQ(c.group_lr(ParamGroup::Normal, 10, 1.0), 0.003);
}

TEST(ParamCount, MatchesTheLayout) {
    EXPECT_EQ(param_count(0), 18u);
    EXPECT_EQ(param_count(3), 63u);
}

TEST(SceneExtent, RadiusAroundTheMeanCenter) {
    TrainView a, b;
    a.camera = look_at_camera(Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 0, 5), Eigen::Vector3d::UnitY(), 10, 8, 8);
    b.camera = look_at_camera(Eigen::Vector3d(-1, 0, 0), Eigen::Vector3d(0, 0, 5), Eigen::Vector3d::UnitY(), 10, 8, 8);
    EXPECT_NEAR(scene_extent({a, b}), 1.1, 1e-12);
    EXPECT_EQ(scene_extent({a, a}), 1.0);
}

TEST(Step, PrimitivesWithoutGradientDoNotMove) {
    RandomScene rs = make_random_scene(21, {4, 24, 1});
    HalfGaussianPrimitive hidden = rs.scene.primitives[0];
    hidden.mu = Eigen::Vector3d(50.0, 50.0, 0.0);
    hidden.normal = Eigen::Vector3d(0, 0, 1);
    rs.scene.primitives.push_back(hidden);
    TrainView view{"v", rs.camera, noise_image(24, 24, 5)};
    OptimizerState state;
    state.resize(rs.scene);
    const TrainConfig c = short_config(10);
    Scene before = rs.scene;
    for (int it = 1; it <= 3; ++it) step(rs.scene, view, c, state, it, 1.0);
    const auto& a = before.primitives.back();
    const auto& b = rs.scene.primitives.back();
    EXPECT_EQ(a.mu, b.mu);
    EXPECT_EQ(a.log_scale, b.log_scale);
    EXPECT_EQ(a.rotation, b.rotation);
    EXPECT_EQ(a.sh_coeffs, b.sh_coeffs);
    EXPECT_EQ(a.normal, b.normal);
    EXPECT_EQ(a.raw_opacity_a, b.raw_opacity_a);
    EXPECT_EQ(a.raw_opacity_b, b.raw_opacity_b);
    EXPECT_NE(before.primitives[0].mu, rs.scene.primitives[0].mu);
}

TEST(Step, NonFiniteLossIsReported) {
    const RandomScene rs = make_random_scene(22, {4, 24, 0});
    Scene scene = rs.scene;
    TrainView view{"v", rs.camera, Image(24, 24, 3, 0.5)};
    view.image.data[7] = std::nan("");
    OptimizerState state;
    try {
        step(scene, view, short_config(1), state, 1, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteLoss);
    }
}

TEST(Train, SinglePrimitiveConverges) {
    Scene truth;
    HalfGaussianPrimitive p;
    p.log_scale = Eigen::Vector3d::Constant(std::log(0.5));
    p.sh_coeffs = {Eigen::Vector3d(0.4, -0.3, 0.1) / sh::kC0};
    p.raw_opacity_a = logit(0.8);
    p.raw_opacity_b = logit(0.6);
    truth.primitives.push_back(p);
    const auto views = views_of(truth, 24, 3);

    Scene start = truth;
    start.primitives[0].sh_coeffs = {Eigen::Vector3d::Zero()};
    start.primitives[0].raw_opacity_a = start.primitives[0].raw_opacity_b = logit(0.3);
    TrainConfig c = short_config(300);
    c.density_control = false;
    const double before = psnr(render(start, views[0].camera).color, views[0].image);
    const TrainResult r = train(start, views, c);
    const double after = psnr(render(r.scene, views[0].camera).color, views[0].image);
    EXPECT_GT(after, before + 10.0);
    EXPECT_GT(after, 35.0);
}

TEST(Train, SelectiveFinetuneLeavesFrozenGroupsUntouched) {
    const RandomScene truth = make_random_scene(23, {10, 24, 1});
    const auto views = views_of(truth.scene, 24, 3);
    Scene start = truth.scene;
    for (auto& p : start.primitives) p.raw_opacity_a = p.raw_opacity_b = 0.0;
    TrainConfig c = short_config(30);
    c.mode = TrainMode::FinetuneNormalsOpacities;
    const TrainResult r = train(start, views, c);
    ASSERT_EQ(r.scene.primitives.size(), start.primitives.size());
    bool normals_moved = false, opacities_moved = false;
    for (std::size_t i = 0; i < start.primitives.size(); ++i) {
        const auto& a = start.primitives[i];
        const auto& b = r.scene.primitives[i];
        ASSERT_EQ(a.mu, b.mu);
        ASSERT_EQ(a.log_scale, b.log_scale);
        ASSERT_EQ(a.rotation, b.rotation);
        ASSERT_EQ(a.sh_coeffs, b.sh_coeffs);
        normals_moved |= a.normal != b.normal;
        opacities_moved |= a.raw_opacity_a != b.raw_opacity_a || a.raw_opacity_b != b.raw_opacity_b;
    }
    EXPECT_TRUE(normals_moved);
    EXPECT_TRUE(opacities_moved);
}

TEST(Train, ZeroNormalRateFreezesNormals) {
    const RandomScene truth = make_random_scene(24, {10, 24, 1});
    const auto views = views_of(truth.scene, 24, 3);
    TrainConfig c = short_config(30);
    c.lr_normal = 0.0;
    c.density_control = false;
    const TrainResult r = train(truth.scene, views, c);
    for (std::size_t i = 0; i < truth.scene.primitives.size(); ++i) {
        ASSERT_EQ(truth.scene.primitives[i].normal, r.scene.primitives[i].normal);
    }
}

TEST(Train, FullKernelKeepsNormalsAndCanDiverge) {
    const RandomScene truth = make_random_scene(25, {10, 24, 1});
    const auto views = views_of(truth.scene, 24, 3);
    TrainConfig c = short_config(20);
    c.kernel = KernelMode::FullGaussian;
    c.density_control = false;
    const TrainResult r = train(truth.scene, views, c);
    for (std::size_t i = 0; i < truth.scene.primitives.size(); ++i) {
        ASSERT_EQ(truth.scene.primitives[i].normal, r.scene.primitives[i].normal);
    }
}

TEST(Train, DeterministicAcrossRunsAndWorkerCounts) {
    const RandomScene truth = make_random_scene(26, {12, 24, 1});
    const auto views = views_of(truth.scene, 24, 3);
    Scene start = truth.scene;
    for (auto& p : start.primitives) p.mu *= 0.9;
    TrainConfig c = short_config(40);
    c.densify_interval = 10;
    c.densify_until = 30;
    c.densify_grad_threshold = 1e-6;
    const TrainResult a = train(start, views, c);
    const TrainResult b = train(start, views, c);
    c.workers = 3;
    const TrainResult d = train(start, views, c);
    test::TempDir dir;
    save_scene(a.scene, dir / "a.ply");
    save_scene(b.scene, dir / "b.ply");
    save_scene(d.scene, dir / "d.ply");
    EXPECT_EQ(test::file_sha256(dir / "a.ply"), test::file_sha256(dir / "b.ply"));
    EXPECT_EQ(test::file_sha256(dir / "a.ply"), test::file_sha256(dir / "d.ply"));
    EXPECT_NE(a.scene.primitives.size(), start.primitives.size());
}

TEST(Train, ScheduleEventsLandOnTheirIterations) {
    RandomScene truth = make_random_scene(27, {8, 16, 0});
    for (auto& p : truth.scene.primitives) p.log_scale.array() -= 1.0;
    const auto views = views_of(truth.scene, 16, 2);
    TrainConfig c = short_config(400);
    c.densify_until = 300;
    c.densify_interval = 50;
    c.opacity_reset_start = 100;
    c.opacity_reset_interval = 100;
    c.opacity_reset_until = 300;
    c.max_primitives = 64;
    c.prune_opacity_threshold = 1e-6;
    std::vector<int> densify, reset;
    const TrainResult r = train(truth.scene, views, c, {}, [&](const IterationLog& log) {
        if (log.events.find("densify") != std::string::npos) densify.push_back(log.iteration);
        if (log.events.find("reset") != std::string::npos) reset.push_back(log.iteration);
    });
    EXPECT_EQ(densify, (std::vector<int>{50, 100, 150, 200, 250}));
    EXPECT_EQ(reset, (std::vector<int>{100, 200}));
    EXPECT_EQ(r.log.size(), 400u);
    EXPECT_LE(r.scene.primitives.size(), 64u);
}

TEST(Train, WritesMetricsAndScene) {
    const RandomScene truth = make_random_scene(28, {6, 16, 0});
    const auto views = views_of(truth.scene, 16, 2);
    test::TempDir dir;
    TrainConfig c = short_config(6);
    c.checkpoint_interval = 2;
    train(truth.scene, views, c, dir.path());
    std::ifstream in(dir / "metrics.csv");
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header, "iteration,loss,psnr,primitive_count,opacity_disparity,events");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 6);
    EXPECT_TRUE(std::filesystem::exists(dir / "scene.ply"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "iter_000002.ply"));
    EXPECT_TRUE(std::filesystem::exists(dir.path() / "checkpoints" / "iter_000004.ply"));
    EXPECT_FALSE(std::filesystem::exists(dir.path() / "checkpoints" / "iter_000006.ply"));
}

Scene two_primitives() {
    Scene s;
    s.primitives.resize(2);
    s.primitives[0].raw_opacity_a = logit(0.9);
    s.primitives[0].raw_opacity_b = logit(0.1);
    s.primitives[1].raw_opacity_a = logit(0.5);
    s.primitives[1].raw_opacity_b = logit(0.5);
    return s;
}

TEST(DensifyAndPrune, NothingToDo) {
    Scene s = two_primitives();
    for (auto& p : s.primitives) p.log_scale = Eigen::Vector3d::Constant(std::log(0.01));
    OptimizerState state;
    state.resize(s);
    std::mt19937_64 rng(0);
    const DensifyReport r = densify_and_prune(s, state, TrainConfig{}, 1.0, rng);
    EXPECT_EQ(r.cloned, 0u);
    EXPECT_EQ(r.split, 0u);
    EXPECT_EQ(r.pruned, 0u);
    EXPECT_EQ(s.primitives.size(), 2u);
}

TEST(DensifyAndPrune, PrunesTransparentPrimitives) {
    Scene s = two_primitives();
    for (auto& p : s.primitives) p.log_scale = Eigen::Vector3d::Constant(std::log(0.01));
    s.primitives[1].raw_opacity_a = s.primitives[1].raw_opacity_b = logit(0.001);
    OptimizerState state;
    state.resize(s);
    std::mt19937_64 rng(0);
    const DensifyReport r = densify_and_prune(s, state, TrainConfig{}, 1.0, rng);
    EXPECT_EQ(r.pruned, 1u);
    ASSERT_EQ(s.primitives.size(), 1u);
    EXPECT_EQ(s.primitives[0].raw_opacity_a, logit(0.9));
    EXPECT_EQ(state.m.size(), 1u);
}

TEST(DensifyAndPrune, ClonesSmallAndSplitsLarge) {
    Scene s = two_primitives();
    s.primitives[0].log_scale = Eigen::Vector3d::Constant(std::log(0.005));
    s.primitives[1].log_scale = Eigen::Vector3d::Constant(std::log(0.05));
    OptimizerState state;
    state.resize(s);
    state.grad_accum = {1e-3, 1e-3};
    state.grad_denom = {1, 1};
    state.mu_grad_accum = {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0, 1, 0)};
    std::mt19937_64 rng(0);
    const DensifyReport r = densify_and_prune(s, state, TrainConfig{}, 1.0, rng);
    EXPECT_EQ(r.cloned, 1u);
    EXPECT_EQ(r.split, 1u);
    EXPECT_EQ(r.pruned, 0u);
    // Survivor, clone, two children.
    ASSERT_EQ(s.primitives.size(), 4u);
    EXPECT_NEAR(s.primitives[1].mu.x(), -0.0025, 1e-15);
    for (int c = 2; c < 4; ++c) {
        const auto& child = s.primitives[c];
        EXPECT_NEAR(child.log_scale.x(), std::log(0.05) - std::log(1.6), 1e-14);
        EXPECT_EQ(child.normal, Eigen::Vector3d(0, 0, 1));
        EXPECT_EQ(child.raw_opacity_a, logit(0.5));
    }
    EXPECT_EQ(state.m.size(), 4u);
    EXPECT_EQ(state.grad_denom, (std::vector<int>{0, 0, 0, 0}));
}

TEST(DensifyAndPrune, RespectsThePrimitiveCap) {
    Scene s = two_primitives();
    for (auto& p : s.primitives) p.log_scale = Eigen::Vector3d::Constant(std::log(0.005));
    OptimizerState state;
    state.resize(s);
    state.grad_accum = {1e-3, 1e-3};
    state.grad_denom = {1, 1};
    TrainConfig c;
    c.max_primitives = 3;
    std::mt19937_64 rng(0);
    const DensifyReport r = densify_and_prune(s, state, c, 1.0, rng);
    EXPECT_EQ(r.cloned, 1u);
    EXPECT_EQ(s.primitives.size(), 3u);
}

TEST(ResetOpacity, CapsBothHalves) {
    Scene s = two_primitives();
    s.primitives[1].raw_opacity_b = logit(0.001);
    reset_opacity(s, 0.01);
    EXPECT_NEAR(s.primitives[0].opacity_a(), 0.01, 1e-15);
    EXPECT_NEAR(s.primitives[0].opacity_b(), 0.01, 1e-15);
    EXPECT_NEAR(s.primitives[1].opacity_a(), 0.01, 1e-15);
    EXPECT_EQ(s.primitives[1].raw_opacity_b, logit(0.001));
    for (const auto& p : s.primitives) {
        EXPECT_LE(0.5 * (p.opacity_a() + p.opacity_b()), 0.01 + 1e-15);
    }
}

TEST(OpacityDisparity, MeanAbsoluteDifference) {
    EXPECT_NEAR(opacity_disparity(two_primitives()), 0.4, 1e-15);
    try {
        opacity_disparity(Scene{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyScene);
    }
}

} // namespace
} // namespace hgs
