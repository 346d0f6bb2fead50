#include "hgs/error.hpp"
#include "hgs/geometry.hpp"
#include "hgs/halfgauss_kernel.hpp"
#include "hgs/verification.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hgs {
namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

// Maclaurin series of erf summed in 50-digit arithmetic.
double series_erf(double x) {
    const Big bx = x;
    const Big x2 = bx * bx;
    Big term = bx; // (-1)^n x^(2n+1) / n!
    Big sum = 0;
    for (int n = 0; n < 2000; ++n) {
        const Big contrib = term / (2 * n + 1);
        sum += contrib;
        if (n > 2 && abs(contrib) < Big("1e-45")) break;
        term *= -x2 / (n + 1);
    }
    const Big pi = boost::math::constants::pi<Big>();
    return static_cast<double>(sum * 2 / sqrt(pi));
}

double series_erf_derivative(double x) {
    const Big bx = x;
    return static_cast<double>(2 / sqrt(boost::math::constants::pi<Big>()) * exp(-bx * bx));
}

TEST(KernelErf, MatchesSeriesOracle) {
    double worst = 0.0;
    for (int i = 0; i <= 7000; ++i) {
        const double x = -7.0 + 0.002 * i + 1e-7 * (i % 13);
        worst = std::max(worst, std::abs(kernel_erf(x) - series_erf(x)));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(KernelErf, RandomArgumentsMatchSeriesOracle) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-6.5, 6.5);
    for (int i = 0; i < 2000; ++i) {
        const double x = u(rng);
        ASSERT_NEAR(kernel_erf(x), series_erf(x), 1e-10) << "x = " << x;
    }
}

TEST(KernelErf, ExactlyOddWithExactZero) {
    EXPECT_EQ(kernel_erf(0.0), 0.0);
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 8.0);
    for (int i = 0; i < 10000; ++i) {
        const double x = u(rng);
        ASSERT_EQ(kernel_erf(-x), -kernel_erf(x));
    }
}

TEST(KernelErf, SaturatesAndPropagatesNan) {
    EXPECT_EQ(kernel_erf(6.0), 1.0);
    EXPECT_EQ(kernel_erf(-40.0), -1.0);
    EXPECT_EQ(kernel_erf(INFINITY), 1.0);
    EXPECT_TRUE(std::isnan(kernel_erf(NAN)));
    EXPECT_LE(kernel_erf(5.999999), 1.0);
}

TEST(KernelErf, DerivativeMatchesAnalyticDerivative) {
    double worst = 0.0;
    for (int i = 0; i <= 3000; ++i) {
        const double x = -6.0 + 0.004 * i + 3e-7 * (i % 7);
        worst = std::max(worst, std::abs(kernel_erf_derivative(x) - series_erf_derivative(x)));
    }
    // Differentiating the cubic loses one order: h^3 max|erf^(4)| / 24 ~ 5e-8.
    EXPECT_LT(worst, 1e-7);
    EXPECT_EQ(kernel_erf_derivative(7.0), 0.0);
}

TEST(HalfGaussianDensity, MeanBelongsToPositiveHalf) {
    const Eigen::Vector3d mu(1, 2, 3);
    EXPECT_EQ(half_gaussian_density(mu, mu, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.3, 0.4, 0.5),
                                    HalfSide::Positive),
              1.0);
    EXPECT_EQ(half_gaussian_density(mu, mu, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.3, 0.4, 0.5),
                                    HalfSide::Negative),
              0.0);
}

TEST(HalfGaussianDensity, BehindThePlaneIsZeroOnThePositiveSide) {
    const Eigen::Vector3d n(0, 0, 1);
    EXPECT_EQ(half_gaussian_density(Eigen::Vector3d(0.1, 0.2, -0.5), Eigen::Vector3d::Zero(),
                                    Eigen::Matrix3d::Identity(), n, HalfSide::Positive),
              0.0);
}

TEST(HalfGaussianDensity, HalvesPartitionTheFullGaussian) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::Matrix3d sigma = build_covariance(Eigen::Vector3d(-0.2, 0.1, 0.3), Eigen::Vector4d(0.8, 0.2, -0.3, 0.1));
    for (int i = 0; i < 500; ++i) {
        const Eigen::Vector3d x(g(rng), g(rng), g(rng));
        const Eigen::Vector3d n(g(rng), g(rng), g(rng));
        const double full = std::exp(-0.5 * x.dot(sigma.inverse() * x));
        const double sum = half_gaussian_density(x, Eigen::Vector3d::Zero(), sigma, n, HalfSide::Positive) +
                           half_gaussian_density(x, Eigen::Vector3d::Zero(), sigma, n, HalfSide::Negative);
        ASSERT_NEAR(sum, full, 1e-14);
    }
}

TEST(ErfScale, ViewAlignedPlaneGivesOne) {
    EXPECT_EQ(erf_scale(Eigen::Vector3d(0, 0, 1), Eigen::Vector2d(3.0, -2.0)), 1.0);
}

TEST(ErfScale, EdgeOnPlaneLimit) {
    EXPECT_EQ(erf_scale(Eigen::Vector3d(1, 0, 1e-9), Eigen::Vector2d(3.0, 0.0)), 2.0);
    EXPECT_EQ(erf_scale(Eigen::Vector3d(1, 0, 1e-4), Eigen::Vector2d(3.0, 0.0)), 2.0);
    EXPECT_EQ(erf_scale(Eigen::Vector3d(1, 0, 1e-9), Eigen::Vector2d(-3.0, 0.0)), 0.0);
}

TEST(ErfScale, TiltedPlaneMatchesSeriesOracle) {
    const double expected = 1.0 + series_erf(0.6 / (std::sqrt(2.0) * 0.8));
    EXPECT_NEAR(erf_scale(Eigen::Vector3d(0.6, 0, 0.8), Eigen::Vector2d(1.0, 0.0)), expected, 1e-10);
}

TEST(ErfScale, ContinuousAcrossSingularThreshold) {
    for (double arg : {5.5, 8.0, -6.0, 20.0}) {
        const double above = kSingularNormal * 1.0000001;
        const double below = kSingularNormal * 0.9999999;
        // u chosen so the argument at |n3| = threshold equals arg.
        const Eigen::Vector2d u(arg * std::sqrt(2.0) * kSingularNormal, 0.0);
        const double a = erf_scale(Eigen::Vector3d(1, 0, above), u);
        const double b = erf_scale(Eigen::Vector3d(1, 0, below), u);
        EXPECT_NEAR(a, b, 1e-6) << arg;
    }
}

SplatResponseParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    SplatResponseParams p;
    const double a = 0.02 + 0.2 * u(rng), c = 0.02 + 0.2 * u(rng), b = 0.5 * std::sqrt(a * c) * (2 * u(rng) - 1);
    p.conic << a, b, b, c;
    const Eigen::Matrix2d cov = p.conic.inverse();
    const Eigen::Matrix2d l = cov.llt().matrixL();
    p.whiten2d = l.inverse();
    p.mu_hat = Eigen::Vector2d(16 * u(rng), 16 * u(rng));
    p.n_ray = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    p.alpha1 = 0.01 + 0.98 * u(rng);
    p.alpha2 = 0.01 + 0.98 * u(rng);
    return p;
}

TEST(PairedResponse, EqualOpacitiesGiveTheFullGaussianExactly) {
    std::mt19937_64 rng(14);
    std::uniform_real_distribution<double> u(-4.0, 20.0);
    for (int t = 0; t < 200; ++t) {
        SplatResponseParams p = random_params(rng);
        p.alpha2 = p.alpha1;
        for (int k = 0; k < 20; ++k) {
            const Eigen::Vector2d px(u(rng), u(rng));
            ASSERT_EQ(paired_response(p, px), full_gaussian_response(p.conic, p.mu_hat, p.alpha1, px));
        }
    }
}

TEST(PairedResponse, CenterWithViewAlignedPlane) {
    SplatResponseParams p;
    p.mu_hat = Eigen::Vector2d(4, 5);
    p.alpha1 = 0.8;
    p.alpha2 = 0.2;
    EXPECT_EQ(paired_response(p, p.mu_hat), 0.5);
}

TEST(PairedResponse, OddSymmetry) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(-4.0, 20.0);
    for (int t = 0; t < 200; ++t) {
        const SplatResponseParams p = random_params(rng);
        SplatResponseParams q = p;
        q.n_ray = -p.n_ray;
        std::swap(q.alpha1, q.alpha2);
        for (int k = 0; k < 20; ++k) {
            const Eigen::Vector2d px(u(rng), u(rng));
            ASSERT_EQ(paired_response(p, px), paired_response(q, px));
        }
    }
}

TEST(PairedResponse, MonotoneInBothOpacitiesAndInRange) {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> u(-4.0, 20.0);
    for (int t = 0; t < 200; ++t) {
        SplatResponseParams p = random_params(rng);
        p.alpha1 = 0.999;
        p.alpha2 = 0.999;
        const Eigen::Vector2d px(u(rng), u(rng));
        double prev = -1.0;
        for (int i = 0; i <= 20; ++i) {
            p.alpha1 = 0.05 * i * 0.999;
            const double r = paired_response(p, px);
            ASSERT_GE(r, prev * (1.0 - 1e-14));
            ASSERT_GE(r, 0.0);
            ASSERT_LE(r, kMaxSplatWeight);
            prev = r;
        }
        prev = -1.0;
        for (int i = 0; i <= 20; ++i) {
            p.alpha2 = 0.05 * i * 0.999;
            const double r = paired_response(p, px);
            ASSERT_GE(r, prev * (1.0 - 1e-14));
            prev = r;
        }
    }
}

TEST(OracleLineIntegral, FullGaussianThroughTheMean) {
    const Eigen::Vector3d mu(0.5, -0.25, 2.0);
    const double v = oracle_line_integral(mu, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0.3, 0.5, 0.8), 1.0, 1.0,
                                          mu - Eigen::Vector3d(0, 0, 5), Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR(v, std::sqrt(2.0 * M_PI), 1e-9);
}

TEST(OracleLineIntegral, HalfMassAcrossAViewAlignedPlane) {
    const Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    const double v = oracle_line_integral(mu, Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1), 1.0, 0.0,
                                          Eigen::Vector3d(0, 0, -5), Eigen::Vector3d(0, 0, 1));
    EXPECT_NEAR(v, std::sqrt(2.0 * M_PI) / 2.0, 1e-9);
}

TEST(OracleLineIntegral, TiltedPlaneMatchesErfFactor) {
    // Sigma = I, ray along z at offset (x, 0): the positive half's share is
    // (1 + erf(n1 x / (sqrt2 n3))) / 2 of the full line integral.
    const Eigen::Vector3d n = Eigen::Vector3d(1, 0, 0.7).normalized();
    for (double x : {-1.5, -0.3, 0.0, 0.4, 1.2}) {
        const double v = oracle_line_integral(Eigen::Vector3d::Zero(), Eigen::Matrix3d::Identity(), n, 1.0, 0.0,
                                              Eigen::Vector3d(x, 0, -6), Eigen::Vector3d(0, 0, 1));
        const double expected =
            std::exp(-0.5 * x * x) * std::sqrt(2.0 * M_PI) * 0.5 * (1.0 + series_erf(n.x() * x / (std::sqrt(2.0) * n.z())));
        EXPECT_NEAR(v, expected, 1e-6 * expected) << x;
    }
}

TEST(ClosedForm, AgreesWithQuadratureOverRandomConfigurations) {
    const OracleSuiteResult r = check_closed_form(1000, 20240);
    EXPECT_LE(r.max_rel_error, kOracleTolerance) << "worst trial " << r.worst_trial;
}

TEST(GeneralSigmaIntegral, CenteredUnsplitDirection) {
    EXPECT_NEAR(general_sigma_integral(0, 0, 1, 1, 1, Eigen::Vector3d(0, 0, 1)), 1.0 / (2.0 * M_PI), 1e-16);
}

TEST(GeneralSigmaIntegral, ViewAlignedPlaneIsTheScaledGaussian) {
    for (double x : {-1.0, 0.5, 2.0}) {
        for (double y : {-0.7, 0.0, 1.3}) {
            const double expected = std::exp(-0.5 * (x * x / 4.0 + y * y / 0.25)) / (2.0 * M_PI);
            EXPECT_NEAR(general_sigma_integral(x, y, 2.0, 0.5, 1.0, Eigen::Vector3d(0, 0, 1)), expected, 1e-16);
        }
    }
}

TEST(GeneralSigmaIntegral, MatchesQuadratureOnDiagonalCovariances) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    // Density 2 / (2 pi)^{3/2} exp(...) on the positive half.
    const double norm = 2.0 / std::pow(2.0 * M_PI, 1.5);
    for (int t = 0; t < 300; ++t) {
        const double sx = 0.3 + u(rng), sy = 0.3 + u(rng), sz = 0.3 + u(rng);
        const double x = sx * g(rng), y = sy * g(rng);
        const Eigen::Vector3d n = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
        const Eigen::Matrix3d sigma = Eigen::Vector3d(sx * sx, sy * sy, sz * sz).asDiagonal();
        const double oracle = norm * oracle_line_integral(Eigen::Vector3d::Zero(), sigma, n, 1.0, 0.0,
                                                          Eigen::Vector3d(x, y, -10.0), Eigen::Vector3d(0, 0, 1));
        const double closed = general_sigma_integral(x, y, sx, sy, sz, n);
        // Relative to the unsplit value: deep in the cut the erf term cancels.
        const double whole = 2.0 * general_sigma_integral(x, y, sx, sy, sz, Eigen::Vector3d(0, 0, 1));
        ASSERT_NEAR(closed, oracle, 1e-6 * whole) << t;
    }
}

} // namespace
} // namespace hgs
