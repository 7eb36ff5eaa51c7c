#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/fnspace.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {
namespace {

constexpr double kPi = std::numbers::pi;

GridFunction sampled_mode(const Grid& grid, int k, double amp = 1.0) {
    auto gf = GridFunction::sample(grid, [&](const Point& p) { return amp * std::sqrt(2.0) * std::sin(k * kPi * p[0]); });
    for (std::size_t i = 0; i < gf.size(); ++i) {
        if (grid.on_boundary(i)) gf[i] = 0.0;
    }
    return gf;
}

SpectralField random_field(const Grid& grid, int modes, Stream& rng, double decay = 0.0) {
    SpectralField sf(grid, modes);
    for (std::size_t i = 0; i < sf.size(); ++i) {
        sf.coeffs()[i] = rng.normal() * std::pow(1.0 + sf.eigenvalue(i), -decay / 2.0);
    }
    return sf;
}

TEST(Grid, SpacingAndNodeCount) {
    const Grid g1 = build_grid(1, 3);
    EXPECT_DOUBLE_EQ(g1.h(), 0.25);
    EXPECT_EQ(g1.size(), 5u);
    EXPECT_EQ(g1.h() * (g1.n() + 1), 1.0);

    const Grid g2 = build_grid(2, 7);
    EXPECT_DOUBLE_EQ(g2.h(), 0.125);
    EXPECT_EQ(g2.size(), 81u);
}

TEST(Grid, RejectsBadArguments) {
    EXPECT_THROW(build_grid(1, 2), InvalidArgument);
    EXPECT_THROW(build_grid(3, 8), InvalidArgument);
    EXPECT_THROW(build_grid(0, 8), InvalidArgument);
}

TEST(Grid, BoundaryAndCoordinates) {
    const Grid g = build_grid(2, 4);
    EXPECT_TRUE(g.on_boundary(g.index(0, 3)));
    EXPECT_TRUE(g.on_boundary(g.index(2, 5)));
    EXPECT_FALSE(g.on_boundary(g.index(2, 3)));
    const Point p = g.node(g.index(1, 4));
    EXPECT_DOUBLE_EQ(p[0], 0.2);
    EXPECT_DOUBLE_EQ(p[1], 0.8);
}

TEST(Analyze, FirstModeIsUnitVector) {
    const Grid g = build_grid(1, 64);
    const SpectralField sf = analyze(sampled_mode(g, 1), 4);
    EXPECT_NEAR(sf.coeffs()[0], 1.0, 1e-12);
    for (int k = 1; k < 4; ++k) EXPECT_NEAR(sf.coeffs()[k], 0.0, 1e-12);
}

TEST(Analyze, ZeroFunction) {
    const Grid g = build_grid(1, 16);
    const SpectralField sf = analyze(GridFunction(g), 8);
    for (double c : sf.coeffs()) EXPECT_EQ(c, 0.0);
}

TEST(Analyze, ScaledThirdMode) {
    const Grid g = build_grid(1, 256);
    const SpectralField sf = analyze(sampled_mode(g, 3, 2.0), 8);
    EXPECT_LE(std::abs(sf.coeffs()[2] - 2.0), 1e-3);
    for (int k = 0; k < 8; ++k) {
        if (k != 2) EXPECT_NEAR(sf.coeffs()[k], 0.0, 1e-10);
    }
}

TEST(Analyze, RejectsNonzeroTrace) {
    const Grid g = build_grid(1, 16);
    GridFunction gf(g, 1.0);
    EXPECT_THROW(analyze(gf, 4), InvalidArgument);
}

TEST(Analyze, RejectsTooManyModes) {
    const Grid g = build_grid(1, 8);
    EXPECT_THROW(analyze(GridFunction(g), 9), InvalidArgument);
}

TEST(Synthesize, UnitCoefficientSamplesMode) {
    const Grid g = build_grid(1, 32);
    SpectralField sf(g, 4, {1.0, 0.0, 0.0, 0.0});
    const GridFunction gf = synthesize(sf);
    EXPECT_LT(sup_distance(gf, sampled_mode(g, 1)), 1e-14);
    EXPECT_TRUE(gf.has_zero_trace(0.0));
}

TEST(Synthesize, ZeroCoefficients) {
    const Grid g = build_grid(2, 9);
    const GridFunction gf = synthesize(SpectralField(g, 3));
    EXPECT_EQ(sup_distance(gf, GridFunction(g)), 0.0);
}

TEST(Synthesize, RoundTripIsIdentity) {
    Stream rng(7, stream_id("fnspace-roundtrip"));
    const Grid g = build_grid(1, 256);
    for (int trial = 0; trial < 5; ++trial) {
        const SpectralField sf = random_field(g, 16, rng);
        const SpectralField back = analyze(synthesize(sf), 16);
        for (std::size_t i = 0; i < sf.size(); ++i) EXPECT_NEAR(back.coeffs()[i], sf.coeffs()[i], 1e-10);
    }
    const Grid g2 = build_grid(2, 31);
    const SpectralField sf2 = random_field(g2, 6, rng);
    const SpectralField back2 = analyze(synthesize(sf2), 6);
    for (std::size_t i = 0; i < sf2.size(); ++i) EXPECT_NEAR(back2.coeffs()[i], sf2.coeffs()[i], 1e-10);
}

TEST(Synthesize, TwoDimensionalTensorMode) {
    const Grid g = build_grid(2, 15);
    SpectralField sf(g, 3);
    sf.coeffs()[1 * 3 + 2] = 1.0;  // phi_2(x) phi_3(y)
    const GridFunction gf = synthesize(sf);
    for (std::size_t i = 0; i < gf.size(); ++i) {
        const Point p = g.node(i);
        const double expected = 2.0 * std::sin(2 * kPi * p[0]) * std::sin(3 * kPi * p[1]);
        EXPECT_NEAR(gf[i], g.on_boundary(i) ? 0.0 : expected, 1e-13);
    }
}

TEST(SobolevNorm, ClosedForms) {
    const Grid g = build_grid(1, 16);
    SpectralField sf(g, 4, {1.0, 0.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(sobolev_norm(sf, {0.0}), 1.0);
    EXPECT_NEAR(sobolev_norm(sf, {1.0}), std::sqrt(1.0 + kPi * kPi), 1e-14);
    EXPECT_NEAR(sobolev_norm(sf, {1.0}), 3.2969, 1e-4);
    EXPECT_NEAR(sobolev_norm(sf, {-1.0}), 1.0 / std::sqrt(1.0 + kPi * kPi), 1e-14);
    EXPECT_NEAR(sobolev_norm(sf, {-1.0}), 0.3033, 1e-4);
}

TEST(SobolevNorm, TwoDimensionalWeights) {
    const Grid g = build_grid(2, 8);
    SpectralField sf(g, 2, {0.0, 1.0, 0.0, 0.0});  // phi_1(x) phi_2(y)
    EXPECT_NEAR(sobolev_norm(sf, {1.0}), std::sqrt(1.0 + 5.0 * kPi * kPi), 1e-13);
}

TEST(SobolevNorm, RejectsNonFiniteOrder) {
    const Grid g = build_grid(1, 8);
    EXPECT_THROW(sobolev_norm(SpectralField(g, 2), {NAN}), InvalidArgument);
}

TEST(L2Distance, Examples) {
    const Grid g = build_grid(1, 256);
    const GridFunction mode = sampled_mode(g, 1);
    EXPECT_EQ(l2_distance(mode, mode), 0.0);
    EXPECT_NEAR(l2_distance(mode, GridFunction(g)), 1.0, 1e-12);
    const auto bump = GridFunction::sample(g, [](const Point& p) { return p[0] * (1.0 - p[0]); });
    // Trapezoid error on the quartic integrand is O(h^2).
    EXPECT_NEAR(l2_distance(bump, GridFunction(g)), std::sqrt(1.0 / 30.0), 1e-5);
}

TEST(L2Distance, GridMismatch) {
    EXPECT_THROW(l2_distance(GridFunction(build_grid(1, 8)), GridFunction(build_grid(1, 9))), InvalidArgument);
    EXPECT_THROW(sup_distance(GridFunction(build_grid(1, 8)), GridFunction(build_grid(2, 8))), InvalidArgument);
}

TEST(SupDistance, Examples) {
    const Grid g = build_grid(1, 255);
    const GridFunction mode = sampled_mode(g, 1);
    EXPECT_EQ(sup_distance(mode, mode), 0.0);
    EXPECT_NEAR(sup_distance(mode, GridFunction(g)), std::sqrt(2.0), 1e-12);
    const auto parabola = GridFunction::sample(g, [](const Point& p) { return p[0] * p[0] - p[0]; });
    EXPECT_DOUBLE_EQ(sup_distance(parabola, GridFunction(g)), 0.25);
}

TEST(FnspaceProperties, ParsevalAndMonotonicity) {
    Stream rng(11, stream_id("parseval"));
    const Grid g = build_grid(1, 256);
    for (int trial = 0; trial < 50; ++trial) {
        const SpectralField sf = random_field(g, 24, rng, 1.0);
        EXPECT_NEAR(sobolev_norm(sf, {0.0}), l2_distance(synthesize(sf), GridFunction(g)), 1e-6);
        double prev = sobolev_norm(sf, {-2.0});
        for (double s = -1.5; s <= 3.0; s += 0.5) {
            const double cur = sobolev_norm(sf, {s});
            EXPECT_LE(prev, cur * (1.0 + 1e-15));
            prev = cur;
        }
    }
}

TEST(FnspaceProperties, EmbeddingConstantIsStable) {
    // sup |sum c_k phi_k| <= sqrt(2) sum |c_k| <= sqrt(2) (sum (1+lambda_k)^{-alpha})^{1/2} ||theta||_alpha
    const double alpha = 2.0;
    const Grid g = build_grid(1, 128);
    const int modes = 32;
    double bound_sq = 0.0;
    for (int k = 1; k <= modes; ++k) bound_sq += std::pow(1.0 + kPi * kPi * k * k, -alpha);
    const double analytic = std::sqrt(2.0 * bound_sq);

    Stream rng(3, stream_id("embedding"));
    double fitted = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const SpectralField sf = random_field(g, modes, rng, alpha);
        const double ratio = sup_distance(synthesize(sf), GridFunction(g)) / sobolev_norm(sf, {alpha});
        fitted = std::max(fitted, ratio);
    }
    EXPECT_GT(fitted, 0.0);
    EXPECT_LE(fitted, analytic);
}

TEST(FnspaceProperties, DualityPairingBound) {
    Stream rng(5, stream_id("duality"));
    const Grid g = build_grid(2, 31);
    for (int trial = 0; trial < 100; ++trial) {
        const SpectralField a = random_field(g, 6, rng);
        const SpectralField b = random_field(g, 6, rng, 1.0);
        for (double kappa : {0.5, 1.0, 2.0}) {
            const double pairing = std::abs(l2_inner(synthesize(a), synthesize(b)));
            EXPECT_LE(pairing, sobolev_norm(a, {-kappa}) * sobolev_norm(b, {kappa}) * (1.0 + 1e-12) + 1e-14);
        }
    }
}

TEST(Serialization, CsvAndJson) {
    const Grid g = build_grid(1, 3);
    const auto gf = GridFunction::sample(g, [](const Point& p) { return p[0]; });
    std::ostringstream os;
    write_csv(os, gf);
    EXPECT_EQ(os.str(), "x,value\n0,0\n0.25,0.25\n0.5,0.5\n0.75,0.75\n1,1\n");

    SpectralField sf(build_grid(2, 8), 2, {1.0, -2.0, 0.5, 0.25});
    const auto j = to_json(sf);
    EXPECT_EQ(j.at("K"), 2);
    const SpectralField back = spectral_from_json(j);
    EXPECT_EQ(std::vector<double>(back.coeffs().begin(), back.coeffs().end()),
              std::vector<double>(sf.coeffs().begin(), sf.coeffs().end()));
}

}  // namespace
}  // namespace pdemap
