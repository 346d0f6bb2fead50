#include "manifest.hpp"
#include "test_support.hpp"

#include "hgs/error.hpp"

#include <gtest/gtest.h>

namespace hgs::cli {
namespace {

TEST(Manifest, JsonRoundTrip) {
    RunManifest m;
    m.dataset = "fixtures/edge";
    m.init = "model.ply";
    m.normal_init = NormalInit::RandomUnit;
    m.sh_degree = 1;
    m.version = "0.1.0";
    m.started_at = "2026-01-01T00:00:00Z";
    m.config.total_iters = 1234;
    m.config.densify_until = 1000;
    m.config.lambda_ssim = 0.25;
    m.config.lr_normal = 0.0;
    m.config.lr.sh_rest = 1.25e-4;
    m.config.mode = TrainMode::FinetuneAllWithDensify;
    m.config.kernel = KernelMode::FullGaussian;
    m.config.density_control = false;
    m.config.max_primitives = 777;
    m.config.seed = 0xfeedface12345678ULL;
    m.config.checkpoint_interval = 50;

    test::TempDir dir;
    write_manifest(m, dir / "manifest.json");
    const RunManifest b = read_manifest(dir / "manifest.json");
    EXPECT_EQ(to_json(b), to_json(m));
    EXPECT_EQ(b.config.seed, m.config.seed);
    EXPECT_EQ(b.config.lr.sh_rest, 1.25e-4);
    EXPECT_EQ(b.config.mode, TrainMode::FinetuneAllWithDensify);
    EXPECT_EQ(b.normal_init, NormalInit::RandomUnit);
}

TEST(Manifest, MissingKeyIsNamed) {
    nlohmann::json j = to_json(RunManifest{});
    j["config"]["lr"].erase("rotation");
    try {
        manifest_from_json(j);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
        EXPECT_NE(std::string(e.what()).find("rotation"), std::string::npos);
    }
}

TEST(Manifest, FlagNamesRoundTrip) {
    for (TrainMode m : {TrainMode::FromScratch, TrainMode::FinetuneAll, TrainMode::FinetuneAllWithDensify,
                        TrainMode::FinetuneNormalsOpacities}) {
        EXPECT_EQ(parse_mode(mode_flag(m)), m);
    }
    EXPECT_EQ(parse_kernel("half"), KernelMode::HalfGaussian);
    EXPECT_EQ(parse_kernel("full"), KernelMode::FullGaussian);
    EXPECT_FALSE(parse_kernel("quarter").has_value());
    EXPECT_EQ(utc_timestamp().size(), 20u);
}

} // namespace
} // namespace hgs::cli
