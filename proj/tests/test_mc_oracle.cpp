#include <gtest/gtest.h>

#include <cmath>

#include "pdemap/error.hpp"
#include "pdemap/mc_oracle.hpp"
#include "pdemap/model.hpp"
#include "pdemap/pde.hpp"

namespace pdemap {
namespace {

GridFunction boundary_1d(const Grid& g, double left, double right) {
    GridFunction b(g);
    b[0] = left;
    b[g.size() - 1] = right;
    return b;
}

McConfig mc(int paths, double dt, std::uint64_t seed = 1) {
    McConfig c;
    c.n_paths = paths;
    c.dt = dt;
    c.seed = seed;
    c.max_steps = static_cast<long>(std::ceil(20.0 / dt));
    return c;
}

TEST(FkSchrodinger, GamblersRuin) {
    const Grid g = build_grid(1, 63);
    const McEstimate e = fk_schrodinger(GridFunction(g), boundary_1d(g, 0.0, 1.0), {0.3, 0.0}, mc(100000, 1e-4));
    EXPECT_LE(std::abs(e.mean - 0.3), 3.0 * e.std_error);
    EXPECT_EQ(e.n_exited + e.n_censored, 100000);
}

TEST(FkSchrodinger, ConstantPotentialClosedForm) {
    const Grid g = build_grid(1, 255);
    const McEstimate e = fk_schrodinger(GridFunction(g, 2.0), boundary_1d(g, 1.0, 1.0), {0.5, 0.0}, mc(10000, 1e-5));
    const double exact = 2.0 * std::sinh(1.0) / std::sinh(2.0);
    EXPECT_LE(std::abs(e.mean - exact), 3.0 * e.std_error + 0.01);
}

TEST(FkSchrodinger, LargerPotentialShrinksEstimate) {
    const Grid g = build_grid(1, 63);
    const GridFunction b = boundary_1d(g, 1.0, 0.5);
    const McConfig c = mc(2000, 1e-4);
    const McEstimate free = fk_schrodinger(GridFunction(g), b, {0.4, 0.0}, c);
    const McEstimate damped = fk_schrodinger(GridFunction(g, 5.0), b, {0.4, 0.0}, c);
    EXPECT_LT(damped.mean, free.mean);
}

TEST(FkSchrodinger, TwoDimensionalMatchesSolver) {
    const Grid g = build_grid(2, 31);
    const ForwardProblem fp = default_schrodinger(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 4, 3, 1.0);
    const GridFunction u = fp.solve(t.f);
    const Point x{0.4, 0.6};
    const McEstimate e = fk_schrodinger(t.f, fp.schrodinger().g_boundary, x, mc(4000, 1e-4));
    EXPECT_LE(std::abs(e.mean - point_eval(u, x)), 3.0 * e.std_error + 0.02);
}

TEST(FkDarcy, CalibrationAnchor) {
    const Grid g = build_grid(1, 255);
    const McEstimate e = fk_darcy(GridFunction(g, 1.0), GridFunction(g, 2.0), {0.5, 0.0}, mc(10000, 1e-5));
    EXPECT_LE(std::abs(e.mean + 0.25), 3.0 * e.std_error + 0.02);
}

TEST(FkDarcy, ZeroSourceIsExactlyZero) {
    const Grid g = build_grid(1, 31);
    const McEstimate e = fk_darcy(GridFunction(g, 1.5), GridFunction(g), {0.3, 0.0}, mc(500, 1e-3));
    EXPECT_EQ(e.mean, 0.0);
    EXPECT_EQ(e.std_error, 0.0);
}

TEST(FkDarcy, RandomCoefficientMatchesSolver) {
    const Grid g = build_grid(1, 127);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 5, 1.5);
    const GridFunction u = fp.solve(t.f);
    for (double x : {0.25, 0.5, 0.8}) {
        const McEstimate e = fk_darcy(t.f, fp.darcy().g, {x, 0.0}, mc(20000, 1e-4));
        EXPECT_LE(std::abs(e.mean - point_eval(u, {x, 0.0})), 3.0 * e.std_error + 0.02) << "x = " << x;
    }
}

TEST(McProperties, StandardErrorScaling) {
    const Grid g = build_grid(1, 63);
    const GridFunction f(g, 1.0);
    const GridFunction b = boundary_1d(g, 0.2, 1.0);
    const McEstimate small = fk_schrodinger(f, b, {0.5, 0.0}, mc(2000, 1e-4));
    const McEstimate large = fk_schrodinger(f, b, {0.5, 0.0}, mc(8000, 1e-4));
    EXPECT_NEAR(small.std_error / large.std_error, 2.0, 0.4);
}

TEST(McProperties, DeterministicPerSeed) {
    const Grid g = build_grid(1, 63);
    const GridFunction f(g, 1.0);
    const GridFunction b = boundary_1d(g, 0.2, 1.0);
    const McEstimate a = fk_schrodinger(f, b, {0.5, 0.0}, mc(2000, 1e-4, 7));
    const McEstimate a2 = fk_schrodinger(f, b, {0.5, 0.0}, mc(2000, 1e-4, 7));
    const McEstimate c = fk_schrodinger(f, b, {0.5, 0.0}, mc(2000, 1e-4, 8));
    EXPECT_EQ(a.mean, a2.mean);
    EXPECT_EQ(a.std_error, a2.std_error);
    EXPECT_NE(a.mean, c.mean);
    EXPECT_LE(std::abs(a.mean - c.mean), 6.0 * std::hypot(a.std_error, c.std_error));
}

TEST(McProperties, CensoringIsRareAtDefaultHorizon) {
    const Grid g = build_grid(2, 15);
    McConfig c = mc(2000, 1e-4);
    c.max_steps = static_cast<long>(10.0 / c.dt);
    const McEstimate e = fk_darcy(GridFunction(g, 0.5), GridFunction(g, 1.0), {0.5, 0.5}, c);
    EXPECT_LT(static_cast<double>(e.n_censored) / c.n_paths, 1e-3);
}

TEST(McErrors, AllCensoredIsAnError) {
    const Grid g = build_grid(1, 15);
    McConfig c = mc(50, 1e-3);
    c.max_steps = 10000;
    try {
        fk_darcy(GridFunction(g, 1e-14), GridFunction(g, 1.0), {0.5, 0.0}, c);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(e.diagnostics().find("n_paths=50"), std::string::npos);
    }
}

TEST(McErrors, RejectsBadInputs) {
    const Grid g = build_grid(1, 15);
    const GridFunction f(g, 1.0);
    EXPECT_THROW(fk_schrodinger(f, f, {0.0, 0.0}, mc(10, 1e-3)), InvalidArgument);
    EXPECT_THROW(fk_schrodinger(GridFunction(g, -1.0), f, {0.5, 0.0}, mc(10, 1e-3)), InvalidArgument);
    EXPECT_THROW(fk_darcy(GridFunction(g), f, {0.5, 0.0}, mc(10, 1e-3)), InvalidArgument);
    McConfig short_horizon = mc(10, 1e-3);
    short_horizon.max_steps = 100;
    EXPECT_THROW(fk_darcy(f, f, {0.5, 0.0}, short_horizon), InvalidArgument);
    EXPECT_THROW(fk_darcy(f, GridFunction(build_grid(1, 7)), {0.5, 0.0}, mc(10, 1e-3)), InvalidArgument);
}

}  // namespace
}  // namespace pdemap
