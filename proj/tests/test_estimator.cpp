#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/estimator.hpp"
#include "pdemap/probes.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {
namespace {

Dataset exact_dataset(const ForwardProblem& fp, const SpectralField& theta, std::size_t n, std::uint64_t seed) {
    return generate_dataset(forward(fp, theta), n, 0.0, seed);
}

MapConfig config(double r, int modes) {
    MapConfig cfg;
    cfg.alpha = 2.0;
    cfg.r = r;
    cfg.modes = modes;
    cfg.seed = 4;
    return cfg;
}

// Central finite differences of -J along random coefficient directions.
void check_gradient_fd(const ForwardProblem& fp, const Dataset& ds, const SpectralField& theta, const MapConfig& cfg,
                       std::uint64_t seed, double floor = 0.0) {
    Stream rng(seed, stream_id("estimator-fd"));
    const SpectralField grad = objective_gradient(fp, ds, theta, cfg);
    constexpr double step = 1e-6;
    for (int d = 0; d < 20; ++d) {
        SpectralField dir(theta.grid(), theta.modes());
        for (double& c : dir.coeffs()) c = rng.normal();
        SpectralField plus = theta, minus = theta;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            plus.coeffs()[i] += step * dir.coeffs()[i];
            minus.coeffs()[i] -= step * dir.coeffs()[i];
        }
        const double fd = -(objective(fp, ds, plus, cfg) - objective(fp, ds, minus, cfg)) / (2.0 * step);
        const double adj = l2_inner(grad, dir);
        EXPECT_LE(std::abs(fd - adj), 1e-5 * std::abs(adj) + floor) << "direction " << d;
    }
}

TEST(Objective, ZeroAtExactDataWithoutPenalty) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    Dataset ds = exact_dataset(fp, t.theta, 64, 2);
    for (double sigma : {0.0, 0.1, 3.0}) {
        ds.sigma = sigma;
        EXPECT_EQ(objective(fp, ds, t.theta, config(0.0, 8)), 0.0);
    }
}

TEST(Objective, PenaltyVanishesAtZero) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    Dataset ds = generate_dataset(fp, t, 64, 0.1, 2);
    const SpectralField zero(g, 8);
    const double j = objective(fp, ds, zero, config(0.7, 8));
    EXPECT_EQ(j, -misfit_value(forward(fp, zero), ds));
    EXPECT_LT(j, 0.0);
}

TEST(Objective, DoublingRQuadruplesPenalty) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    const Dataset ds = generate_dataset(fp, t, 64, 0.1, 2);
    const double r = 0.2;
    const double norm2 = std::pow(sobolev_norm(t.theta, {2.0}), 2);
    const double diff = objective(fp, ds, t.theta, config(r, 8)) - objective(fp, ds, t.theta, config(2 * r, 8));
    EXPECT_NEAR(diff, 1.5 * r * r * norm2, 1e-12);
}

TEST(Objective, CombinedEvaluationAgrees) {
    const Grid g = build_grid(2, 15);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 4, 1, 1.0);
    const Dataset ds = generate_dataset(fp, t, 64, 0.1, 2);
    const SpectralField theta(g, 4);
    EXPECT_NEAR(evaluate_objective(fp, ds, theta, config(0.3, 4)).value, objective(fp, ds, theta, config(0.3, 4)),
                1e-13);
}

TEST(ObjectiveGradient, ZeroAtExactDataWithoutPenalty) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    const Dataset ds = exact_dataset(fp, t.theta, 64, 2);
    const SpectralField grad = objective_gradient(fp, ds, t.theta, config(0.0, 8));
    for (double c : grad.coeffs()) EXPECT_NEAR(c, 0.0, 1e-12);
}

TEST(ObjectiveGradient, PenaltyGradientVanishesAtZero) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    const Dataset ds = generate_dataset(fp, t, 64, 0.1, 2);
    const SpectralField zero(g, 8);
    const SpectralField a = objective_gradient(fp, ds, zero, config(0.0, 8));
    const SpectralField b = objective_gradient(fp, ds, zero, config(5.0, 8));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.coeffs()[i], b.coeffs()[i]);
}

TEST(ObjectiveGradient, DarcyMatchesFiniteDifferences) {
    const Grid g = build_grid(1, 64);
    const ForwardProblem fp = default_darcy(g);
    Stream rng(3, stream_id("grad-darcy"));
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 5, 1.5);
    const Dataset ds = generate_dataset(fp, t, 32, 0.05, 6);
    check_gradient_fd(fp, ds, random_ball_field(g, 8, 2.0, 1.5, rng), config(0.1, 8), 7);
}

TEST(ObjectiveGradient, SchrodingerMatchesFiniteDifferences) {
    const Grid g = build_grid(1, 64);
    const ForwardProblem fp = default_schrodinger(g);
    Stream rng(4, stream_id("grad-schrodinger"));
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 5, 1.5);
    const Dataset ds = generate_dataset(fp, t, 32, 0.05, 6);
    check_gradient_fd(fp, ds, random_ball_field(g, 8, 2.0, 1.5, rng), config(0.1, 8), 8);
}

TEST(ObjectiveGradient, TwoDimensionalMatchesFiniteDifferences) {
    const Grid g = build_grid(2, 15);
    const ForwardProblem fp = default_darcy(g);
    Stream rng(5, stream_id("grad-2d"));
    const GroundTruth t = synthesize_truth(fp, 2.0, 4, 5, 1.5);
    const Dataset ds = generate_dataset(fp, t, 48, 0.05, 6);
    check_gradient_fd(fp, ds, random_ball_field(g, 4, 2.0, 1.5, rng), config(0.1, 4), 9);
}

TEST(MapEstimate, NoiselessIdentifiability) {
    const Grid g = build_grid(1, 128);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 21, 1.5);
    const Dataset ds = generate_dataset(fp, t, 512, 0.0, 22);
    MapConfig cfg = config(1e-8, 8);
    const MapFit fit = map_estimate(fp, ds, cfg);
    EXPECT_LE(prediction_error(fp, fit.theta_hat, t.theta), 1e-4);
    EXPECT_LE(sobolev_norm(fit.theta_hat - t.theta, {0.0}), 1e-2);

    // Started at the truth the optimizer stays there, so the restart search found the global basin.
    const MapFit at_truth = map_estimate_from(fp, ds, cfg, t.theta);
    EXPECT_LE(at_truth.objective, fit.objective + 1e-10);
}

TEST(MapEstimate, ZeroTruthGivesZeroEstimate) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const Dataset ds = exact_dataset(fp, SpectralField(g, 6), 128, 3);
    for (double r : {0.0, 0.1, 1.0}) {
        const MapFit fit = map_estimate(fp, ds, config(r, 6));
        EXPECT_LT(sobolev_norm(fit.theta_hat, {0.0}), 1e-6) << "r = " << r;
    }
}

TEST(MapEstimate, MoreRestartsNeverHurt) {
    const Grid g = build_grid(1, 63);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 8, 1, 1.5);
    const Dataset ds = generate_dataset(fp, t, 256, 0.05, 2);
    MapConfig cfg = config(rate_schedule(256, 2.0, 1.0, 1), 4);
    cfg.restarts = 2;
    const MapFit two = map_estimate(fp, ds, cfg);
    cfg.restarts = 4;
    const MapFit four = map_estimate(fp, ds, cfg);
    EXPECT_GE(four.objective, two.objective);
}

TEST(MapEstimate, InvariantsOnNoisyFit) {
    const Grid g = build_grid(1, 127);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth t = synthesize_truth(fp, 2.0, 32, 1, 1.5);
    const Dataset ds = generate_dataset(fp, t, 512, 0.05, 2);
    const double r = rate_schedule(512, 2.0, 1.0, 1);
    const MapConfig cfg = config(r, default_modes(512, 2.0, 1, 127));
    const MapFit fit = map_estimate(fp, ds, cfg);

    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i) {
        EXPECT_LE(fit.objective_trace[i], fit.objective_trace[i - 1]);
    }
    EXPECT_DOUBLE_EQ(-fit.objective_trace.back(), fit.objective);
    EXPECT_NEAR(objective(fp, ds, fit.theta_hat, cfg), fit.objective, 1e-12);
    EXPECT_EQ(sup_distance(fit.f_hat, fp.coefficient(fit.theta_hat)), 0.0);

    // Dominance over the explicit candidate set.
    const SpectralField zero(g, cfg.modes);
    const SpectralField projected = t.theta.with_modes(cfg.modes);
    EXPECT_GE(fit.objective, objective(fp, ds, zero, cfg));
    EXPECT_GE(fit.objective, objective(fp, ds, projected, cfg));
    ASSERT_EQ(fit.initial_objectives.size(), 3u);
    for (double j0 : fit.initial_objectives) EXPECT_GE(fit.objective, j0);

    // Penalty control: r^2 ||theta||^2 <= -2 J(theta_hat) <= 2 misfit(0).
    const double pen = r * r * std::pow(sobolev_norm(fit.theta_hat, {2.0}), 2);
    EXPECT_LE(pen, -2.0 * fit.objective);
    EXPECT_LE(-2.0 * fit.objective, 2.0 * misfit_value(forward(fp, zero), ds));

    // Rounding in f is amplified by the solve, so J is smooth only to ~1e-14 and the
    // attainable gradient norm sits a little above the default tolerance.
    EXPECT_TRUE(fit.status == "converged" || fit.status == "stalled") << fit.status;
    EXPECT_EQ(fit.converged, fit.grad_norm_final <= cfg.grad_tol);
    EXPECT_LE(fit.grad_norm_final, 1e-6);
    check_gradient_fd(fp, ds, fit.theta_hat, cfg, 10, 1e-16 * std::abs(fit.objective) / 1e-6 * 1e3);

    const auto j = to_json(fit);
    EXPECT_EQ(j.at("restart_index"), fit.restart_index);
    EXPECT_EQ(j.at("theta_hat").at("K"), cfg.modes);
}

TEST(MapEstimate, RejectsInvalidConfig) {
    const Grid g = build_grid(1, 15);
    const ForwardProblem fp = default_darcy(g);
    const Dataset ds = exact_dataset(fp, SpectralField(g, 2), 8, 1);
    MapConfig cfg = config(0.1, 4);
    cfg.grad_tol = 0.0;
    EXPECT_THROW(map_estimate(fp, ds, cfg), InvalidArgument);
    cfg = config(0.1, 16);
    EXPECT_THROW(map_estimate(fp, ds, cfg), InvalidArgument);
    cfg = config(0.1, 4);
    cfg.alpha = 0.4;
    EXPECT_THROW(map_estimate(fp, ds, cfg), InvalidArgument);
}

TEST(RateSchedule, Examples) {
    EXPECT_EQ(rate_schedule(1, 2.0, 1.0, 1), 1.0);
    EXPECT_EQ(rate_schedule(128, 2.0, 1.0, 1), 0.125);
    for (double n : {2.0, 100.0, 5000.0}) {
        EXPECT_NEAR(rate_schedule(n, 2.5, 1.0, 2), std::pow(n, -3.5 / 9.0), 1e-15);
    }
}

TEST(RateSchedule, MonotoneInNAndDimension) {
    for (double alpha : {1.0, 2.0, 3.5}) {
        for (double kappa : {0.0, 1.0, 2.0}) {
            double prev = rate_schedule(2, alpha, kappa, 1);
            for (double n = 3; n < 5000; n *= 1.7) {
                const double cur = rate_schedule(n, alpha, kappa, 1);
                EXPECT_LT(cur, prev);
                EXPECT_LT(cur, rate_schedule(n, alpha, kappa, 2));
                prev = cur;
            }
        }
    }
}

TEST(RateSchedule, RejectsBadArguments) {
    EXPECT_THROW(rate_schedule(0.5, 2.0, 1.0, 1), InvalidArgument);
    EXPECT_THROW(rate_schedule(10, 0.0, 1.0, 1), InvalidArgument);
    EXPECT_THROW(rate_schedule(10, 2.0, -1.0, 1), InvalidArgument);
    EXPECT_THROW(rate_schedule(10, 2.0, 1.0, 3), InvalidArgument);
}

TEST(RateExponents, DarcyAndSchrodinger) {
    const RateExponents d = rate_exponents(PdeKind::Darcy, 2.0, 1);
    EXPECT_DOUBLE_EQ(d.prediction, 3.0 / 7.0);
    EXPECT_DOUBLE_EQ(d.estimation, 1.0 / 7.0);
    EXPECT_NEAR(d.estimation, d.prediction * d.tau, 1e-15);
    const RateExponents s = rate_exponents(PdeKind::Schrodinger, 2.0, 1);
    EXPECT_DOUBLE_EQ(s.prediction, 4.0 / 9.0);
    EXPECT_DOUBLE_EQ(s.estimation, 2.0 / 9.0);
}

TEST(DefaultModes, SieveRule) {
    EXPECT_EQ(default_modes(128, 2.0, 1, 127), 3);
    EXPECT_EQ(default_modes(8192, 2.0, 1, 127), 7);
    EXPECT_EQ(default_modes(1u << 30, 1.0, 1, 15), 7);
}

TEST(Errors, PredictionAndEstimation) {
    const Grid g = build_grid(1, 255);
    const ForwardProblem fp = default_darcy(g);
    const GroundTruth a = synthesize_truth(fp, 2.0, 8, 1, 1.0);
    const GroundTruth b = synthesize_truth(fp, 2.0, 8, 2, 1.0);
    EXPECT_EQ(prediction_error(fp, a.theta, a.theta), 0.0);
    EXPECT_EQ(prediction_error(fp, a.theta, b.theta), prediction_error(fp, b.theta, a.theta));

    // f = 1 with g = 10 sin(pi x): u = -(10/pi^2) sin(pi x), ||u||_L2 = 10 / (pi^2 sqrt 2).
    const SpectralField zero(g, 8);
    const double closed = 10.0 / (std::numbers::pi * std::numbers::pi * std::sqrt(2.0));
    EXPECT_NEAR(l2_distance(forward(fp, zero), GridFunction(g)), closed, 1e-4);

    EXPECT_EQ(estimation_error(a.f, a.f), 0.0);
    GridFunction bumped = a.f;
    for (std::size_t i = 1; i + 1 < bumped.size(); ++i) bumped[i] += 0.3;
    EXPECT_NEAR(estimation_error(bumped, a.f), 0.3 * std::sqrt(255.0 / 256.0), 1e-12);
    EXPECT_LE(estimation_error(a.f, b.f), estimation_error(a.f, bumped) + estimation_error(bumped, b.f) + 1e-15);
    EXPECT_THROW(estimation_error(a.f, GridFunction(build_grid(1, 9))), InvalidArgument);
}

}  // namespace
}  // namespace pdemap
