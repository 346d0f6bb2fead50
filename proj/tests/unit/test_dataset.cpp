#include "test_support.hpp"

#include "hgs/dataset.hpp"
#include "hgs/error.hpp"

#include <gtest/gtest.h>

namespace hgs {
namespace {

TEST(Fixture, Deterministic) {
    const FixtureOptions opts{32, 32, 100, 2, 5};
    const Dataset a = make_fixture(FixtureKind::Corner, opts);
    const Dataset b = make_fixture(FixtureKind::Corner, opts);
    ASSERT_EQ(a.train.size(), 3u);
    ASSERT_EQ(a.test.size(), 1u);
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_TRUE(test::bit_equal(a.train[i].image, b.train[i].image));
    ASSERT_TRUE(a.points && b.points);
    EXPECT_EQ(a.points->positions, b.points->positions);
    EXPECT_EQ(a.points->positions.size(), 100u);
}

TEST(Fixture, KindsRenderDifferentImages) {
    const FixtureOptions opts{24, 24, 50, 1, 0};
    const Dataset e = make_fixture(FixtureKind::Edge, opts);
    const Dataset s = make_fixture(FixtureKind::Sphere, opts);
    EXPECT_FALSE(test::bit_equal(e.train[0].image, s.train[0].image));
    for (double v : e.train[0].image.data) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
    }
}

TEST(Fixture, KindNames) {
    for (FixtureKind k : {FixtureKind::Edge, FixtureKind::Corner, FixtureKind::Sphere}) {
        EXPECT_EQ(parse_fixture_kind(to_string(k)), k);
    }
    EXPECT_FALSE(parse_fixture_kind("cube").has_value());
}

TEST(Dataset, WriteLoadRoundTrip) {
    test::TempDir dir;
    const Dataset d = make_fixture(FixtureKind::Edge, {32, 24, 60, 1, 1});
    write_dataset(d, dir.path());
    const Dataset back = load_dataset(dir.path());
    ASSERT_EQ(back.train.size(), d.train.size());
    ASSERT_EQ(back.test.size(), d.test.size());
    for (std::size_t i = 0; i < d.train.size(); ++i) {
        EXPECT_EQ(back.train[i].name, d.train[i].name);
        EXPECT_EQ(back.train[i].camera.fx, d.train[i].camera.fx);
        ASSERT_TRUE(back.train[i].image.same_shape(d.train[i].image));
        for (std::size_t k = 0; k < d.train[i].image.data.size(); ++k) {
            ASSERT_LE(std::abs(back.train[i].image.data[k] - d.train[i].image.data[k]), 1.0 / 510.0 + 1e-15);
        }
    }
    ASSERT_TRUE(back.points.has_value());
    EXPECT_EQ(back.points->positions, d.points->positions);
}

TEST(Dataset, ImageSizeMustMatchItsCamera) {
    test::TempDir dir;
    Dataset d = make_fixture(FixtureKind::Edge, {32, 24, 20, 1, 1});
    write_dataset(d, dir.path());
    Dataset other = make_fixture(FixtureKind::Edge, {16, 16, 20, 1, 1});
    test::TempDir dir2;
    write_dataset(other, dir2.path());
    std::filesystem::copy_file(dir2.path() / other.train[0].name, dir.path() / d.train[0].name,
                               std::filesystem::copy_options::overwrite_existing);
    try {
        load_dataset(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
}

TEST(Dataset, CheckedInFixturesLoad) {
    for (const char* name : {"edge", "corner", "sphere"}) {
        const Dataset d = load_dataset(std::filesystem::path(HGS_FIXTURES_DIR) / name);
        EXPECT_EQ(d.train.size(), 3u) << name;
        EXPECT_EQ(d.test.size(), 1u) << name;
        EXPECT_TRUE(d.points.has_value()) << name;
    }
}

} // namespace
} // namespace hgs
