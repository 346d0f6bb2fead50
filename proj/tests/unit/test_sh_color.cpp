#include "hgs/sh_color.hpp"
#include "hgs/verification.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hgs {
namespace {

Eigen::Vector3d random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
}

TEST(ShBasis, ConstantTerm) {
    const ShBasisValues b = eval_sh_basis(Eigen::Vector3d(0, 0, 1), 0);
    ASSERT_EQ(b.view().size(), 1u);
    EXPECT_NEAR(b.values[0], 0.28209479177387814, 1e-17);
    EXPECT_NEAR(b.values[0], 0.5 / std::sqrt(M_PI), 1e-16);
}

TEST(ShBasis, FirstBandAlongZ) {
    const ShBasisValues b = eval_sh_basis(Eigen::Vector3d(0, 0, 1), 1);
    EXPECT_EQ(b.values[1], 0.0);
    EXPECT_NEAR(b.values[2], std::sqrt(3.0 / (4.0 * M_PI)), 1e-15);
    EXPECT_EQ(b.values[3], 0.0);
}

TEST(ShBasis, MonteCarloOrthonormality) {
    std::mt19937_64 rng(31);
    constexpr int kSamples = 1000000;
    Eigen::Matrix<double, 16, 16> gram = Eigen::Matrix<double, 16, 16>::Zero();
    for (int s = 0; s < kSamples; ++s) {
        const ShBasisValues b = eval_sh_basis(random_direction(rng), 3);
        const Eigen::Map<const Eigen::Matrix<double, 16, 1>> v(b.values.data());
        gram.noalias() += v * v.transpose();
    }
    gram *= 4.0 * M_PI / kSamples;
    EXPECT_LT((gram - Eigen::Matrix<double, 16, 16>::Identity()).cwiseAbs().maxCoeff(), 0.02);
}

TEST(ShBasis, ExactQuadratureOrthonormality) {
    EXPECT_LT(check_sh_orthonormality(), kShTolerance);
}

TEST(EvalColor, DegreeZeroIgnoresDirection) {
    const std::vector<Eigen::Vector3d> coeffs{Eigen::Vector3d(0.3, -0.2, 1.1)};
    std::mt19937_64 rng(32);
    const Eigen::Vector3d ref = eval_color(coeffs, Eigen::Vector3d(0, 0, 1));
    for (int i = 0; i < 100; ++i) EXPECT_EQ(eval_color(coeffs, random_direction(rng)), ref);
}

TEST(EvalColor, ZeroCoefficientsGiveMidGray) {
    const std::vector<Eigen::Vector3d> coeffs(9, Eigen::Vector3d::Zero());
    EXPECT_EQ(eval_color(coeffs, Eigen::Vector3d(0.6, 0, 0.8)), Eigen::Vector3d::Constant(0.5));
}

TEST(EvalColor, LinearInTheCoefficients) {
    std::mt19937_64 rng(33);
    for (int i = 0; i < 100; ++i) {
        const Eigen::Vector3d dir = random_direction(rng);
        const ShBasisValues b = eval_sh_basis(dir, 2);
        for (int k = 0; k < 9; ++k) {
            std::vector<Eigen::Vector3d> coeffs(9, Eigen::Vector3d::Zero());
            coeffs[k] = Eigen::Vector3d::Constant(0.25);
            const Eigen::Vector3d c = eval_color(coeffs, dir);
            const double expected = std::max(0.0, 0.5 + 0.25 * b.values[k]);
            for (int ch = 0; ch < 3; ++ch) ASSERT_EQ(c[ch], expected);
        }
    }
}

TEST(EvalColor, FloorsAtZero) {
    const std::vector<Eigen::Vector3d> coeffs{Eigen::Vector3d(-10.0, 0.0, 10.0)};
    const Eigen::Vector3d c = eval_color(coeffs, Eigen::Vector3d(0, 0, 1));
    EXPECT_EQ(c[0], 0.0);
    EXPECT_EQ(c[1], 0.5);
    EXPECT_GT(c[2], 1.0);
}

TEST(ShDegreeForCount, RecognisesSquares) {
    EXPECT_EQ(sh_degree_for_count(1), 0);
    EXPECT_EQ(sh_degree_for_count(4), 1);
    EXPECT_EQ(sh_degree_for_count(9), 2);
    EXPECT_EQ(sh_degree_for_count(16), 3);
    EXPECT_EQ(sh_degree_for_count(0), -1);
    EXPECT_EQ(sh_degree_for_count(5), -1);
    EXPECT_EQ(sh_degree_for_count(25), -1);
}

} // namespace
} // namespace hgs
