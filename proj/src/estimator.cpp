#include "pdemap/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

void MapConfig::validate(const Grid& grid) const {
    if (!(alpha > 0.5 * grid.dim())) throw InvalidArgument(fmt::format("estimator: alpha = {} must exceed d/2", alpha));
    if (!(r >= 0.0)) throw InvalidArgument("estimator: r must be nonnegative");
    if (modes < 1 || modes > grid.n()) throw InvalidArgument(fmt::format("estimator: K = {} outside [1, n]", modes));
    if (!(grad_tol > 0.0)) throw InvalidArgument("estimator: grad_tol must be positive");
    if (restarts < 1) throw InvalidArgument("estimator: restarts must be at least 1");
    if (max_iters < 1) throw InvalidArgument("estimator: max_iters must be at least 1");
    if (memory < 1) throw InvalidArgument("estimator: memory must be at least 1");
}

namespace {

double penalty_weight(const SpectralField& sf, std::size_t i, double alpha) {
    return std::pow(1.0 + sf.eigenvalue(i), alpha);
}

double norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

ObjectiveEvaluation evaluate_objective(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta,
                                       const MapConfig& cfg) {
    if (data.empty()) throw InvalidArgument("objective: dataset is empty");
    const GridFunction th = synthesize(theta);
    const GridFunction f = link_apply(fp.link(), th);
    const MisfitEvaluation mis = fp.evaluate_misfit(f, data);

    // Chain rule through Psi; the sine basis vanishes on the boundary.
    GridFunction weighted = mis.gradient;
    for (std::size_t i = 0; i < weighted.size(); ++i) {
        weighted[i] = fp.grid().on_boundary(i) ? 0.0 : weighted[i] * fp.link().derivative(th[i]);
    }
    SpectralField grad = analyze(weighted, theta.modes());

    const double r2 = cfg.r * cfg.r;
    double penalty = 0.0;
    auto c = theta.coeffs();
    auto gc = grad.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double w = penalty_weight(theta, i, cfg.alpha);
        penalty += w * c[i] * c[i];
        gc[i] += r2 * w * c[i];
    }
    return {-mis.value - 0.5 * r2 * penalty, std::move(grad)};
}

double objective(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta, const MapConfig& cfg) {
    const GridFunction u = forward(fp, theta);
    const double s = sobolev_norm(theta, {cfg.alpha});
    return -misfit_value(u, data) - 0.5 * cfg.r * cfg.r * s * s;
}

SpectralField objective_gradient(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta,
                                 const MapConfig& cfg) {
    return evaluate_objective(fp, data, theta, cfg).gradient;
}

namespace {

struct RunResult {
    SpectralField theta;
    std::vector<double> trace;
    double grad_norm;
    int iterations;
    bool converged;
    bool line_search_failed_at_start;
    std::string status;
};

// L-BFGS on phi = -J with backtracking Armijo search (c = 1e-4, step halving).
RunResult lbfgs(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg, SpectralField x) {
    constexpr double kArmijo = 1e-4;
    constexpr int kMaxHalvings = 60;
    constexpr int kStallLimit = 10;
    const std::size_t dim = x.size();

    auto eval = [&](const SpectralField& p) {
        auto e = evaluate_objective(fp, data, p, cfg);
        return std::pair{-e.value, std::move(e.gradient)};
    };

    auto [phi, grad] = eval(x);
    RunResult res{x, {phi}, norm(grad.coeffs()), 0, false, false, "max_iters"};
    std::deque<std::pair<std::vector<double>, std::vector<double>>> history;  // (s, y)
    std::vector<double> dir(dim), alpha_buf;
    int stalled = 0;

    for (int it = 0; it < cfg.max_iters; ++it) {
        res.grad_norm = norm(grad.coeffs());
        if (res.grad_norm <= cfg.grad_tol) {
            res.converged = true;
            res.status = "converged";
            break;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            // Two-loop recursion for dir = -H grad.
            std::vector<double> q(grad.coeffs().begin(), grad.coeffs().end());
            alpha_buf.assign(history.size(), 0.0);
            for (std::size_t k = history.size(); k-- > 0;) {
                const auto& [s, y] = history[k];
                alpha_buf[k] = dot(s, q) / dot(y, s);
                for (std::size_t i = 0; i < dim; ++i) q[i] -= alpha_buf[k] * y[i];
            }
            double gamma = 1.0;
            if (!history.empty()) {
                const auto& [s, y] = history.back();
                gamma = dot(s, y) / dot(y, y);
            } else {
                gamma = 1.0 / std::max(res.grad_norm, 1.0);
            }
            for (double& v : q) v *= gamma;
            for (std::size_t k = 0; k < history.size(); ++k) {
                const auto& [s, y] = history[k];
                const double beta = dot(y, q) / dot(y, s);
                for (std::size_t i = 0; i < dim; ++i) q[i] += (alpha_buf[k] - beta) * s[i];
            }
            for (std::size_t i = 0; i < dim; ++i) dir[i] = -q[i];
            double slope = dot(dir, grad.coeffs());
            if (!(slope < 0.0)) {
                history.clear();
                for (std::size_t i = 0; i < dim; ++i) dir[i] = -grad.coeffs()[i] * gamma;
                slope = dot(dir, grad.coeffs());
            }

            double step = 1.0;
            for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
                SpectralField trial = x;
                for (std::size_t i = 0; i < dim; ++i) trial.coeffs()[i] += step * dir[i];
                auto [phi_t, grad_t] = eval(trial);
                const bool armijo = phi_t <= phi + kArmijo * step * slope;
                // Near the optimum phi is flat to round-off; accept non-increasing steps that shrink the gradient.
                const bool flat = norm(grad_t.coeffs()) < 0.9 * res.grad_norm;
                if (std::isfinite(phi_t) && phi_t <= phi && (armijo || flat)) {
                    std::vector<double> s(dim), y(dim);
                    for (std::size_t i = 0; i < dim; ++i) {
                        s[i] = trial.coeffs()[i] - x.coeffs()[i];
                        y[i] = grad_t.coeffs()[i] - grad.coeffs()[i];
                    }
                    if (dot(s, y) > 1e-300) {
                        history.emplace_back(std::move(s), std::move(y));
                        if (history.size() > static_cast<std::size_t>(cfg.memory)) history.pop_front();
                    }
                    x = std::move(trial);
                    phi = phi_t;
                    grad = std::move(grad_t);
                    accepted = true;
                    break;
                }
            }
            if (!accepted) history.clear();  // retry once along steepest descent
        }
        if (!accepted) {
            res.line_search_failed_at_start = (it == 0);
            res.status = "line_search_failed";
            break;
        }
        res.trace.push_back(phi);
        res.iterations = it + 1;
        stalled = res.trace[res.trace.size() - 2] == phi ? stalled + 1 : 0;
        if (stalled >= kStallLimit) {
            res.status = "stalled";
            break;
        }
    }
    res.grad_norm = norm(grad.coeffs());
    if (res.grad_norm <= cfg.grad_tol) {
        res.converged = true;
        res.status = "converged";
    }
    res.theta = std::move(x);
    return res;
}

SpectralField random_start(const Grid& grid, const MapConfig& cfg, int restart) {
    SpectralField start(grid, cfg.modes);
    if (restart == 0 || cfg.init_radius == 0.0) return start;
    Stream rng(cfg.seed, stream_id("restart", {static_cast<std::uint64_t>(restart)}));
    auto c = start.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        c[i] = rng.normal() * std::pow(1.0 + start.eigenvalue(i), -(cfg.alpha + 0.51) / 2.0);
    }
    const double s = sobolev_norm(start, {cfg.alpha});
    if (s > 0.0) {
        for (double& v : c) v *= cfg.init_radius / s;
    }
    return start;
}

MapFit run_restarts(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg,
                    const std::vector<SpectralField>& starts) {
    cfg.validate(fp.grid());
    MapFit best{SpectralField(fp.grid(), cfg.modes), GridFunction(fp.grid())};
    bool have = false;
    int failures = 0;
    std::string last_status;
    std::vector<double> failed_trace;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        RunResult run = lbfgs(fp, data, cfg, starts[k]);
        best.initial_points.push_back(starts[k]);
        best.initial_objectives.push_back(-run.trace.front());
        if (run.line_search_failed_at_start && !run.converged) {
            ++failures;
            last_status = run.status;
            failed_trace = run.trace;
        }
        const double value = -run.trace.back();
        if (!have || value > best.objective) {
            have = true;
            best.theta_hat = std::move(run.theta);
            best.objective_trace = std::move(run.trace);
            best.objective = value;
            best.grad_norm_final = run.grad_norm;
            best.restart_index = static_cast<int>(k);
            best.iterations = run.iterations;
            best.converged = run.converged;
            best.status = run.status;
        }
    }
    if (failures == static_cast<int>(starts.size())) {
        std::string trace;
        for (double v : failed_trace) trace += fmt::format("{:.17g} ", v);
        throw NumericalError(fmt::format("map_estimate: line search failed from all {} starting points", failures),
                             fmt::format("status={} trace={}", last_status, trace));
    }
    best.f_hat = fp.coefficient(best.theta_hat);
    return best;
}

}  // namespace

MapFit map_estimate(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg) {
    cfg.validate(fp.grid());
    std::vector<SpectralField> starts;
    for (int k = 0; k < cfg.restarts; ++k) starts.push_back(random_start(fp.grid(), cfg, k));
    return run_restarts(fp, data, cfg, starts);
}

MapFit map_estimate_from(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg,
                         const SpectralField& start) {
    return run_restarts(fp, data, cfg, {start.with_modes(cfg.modes)});
}

int default_modes(std::size_t n_samples, double alpha, int dim, int n) {
    const int k = static_cast<int>(std::ceil(std::pow(static_cast<double>(n_samples), 1.0 / (2.0 * alpha + dim))));
    return std::clamp(k, 1, std::max(1, n / 2));
}

double rate_schedule(double n_samples, double alpha, double kappa, int dim) {
    if (!(n_samples >= 1.0)) throw InvalidArgument("rate_schedule: N must be at least 1");
    if (!(alpha > 0.0)) throw InvalidArgument("rate_schedule: alpha must be positive");
    if (!(kappa >= 0.0)) throw InvalidArgument("rate_schedule: kappa must be nonnegative");
    if (dim != 1 && dim != 2) throw InvalidArgument("rate_schedule: d must be 1 or 2");
    // Exponent applied in base 2 so that powers of two give exact results.
    return std::exp2(-(alpha + kappa) * std::log2(n_samples) / (2.0 * (alpha + kappa) + dim));
}

RateExponents rate_exponents(PdeKind kind, double alpha, int dim) {
    RateExponents e{};
    if (kind == PdeKind::Darcy) {
        e.kappa = 1.0;
        e.tau = (alpha - 1.0) / (alpha + 1.0);
        e.prediction = (alpha + 1.0) / (2.0 * (alpha + 1.0) + dim);
        e.estimation = (alpha - 1.0) / (2.0 * (alpha + 1.0) + dim);
    } else {
        e.kappa = 2.0;
        e.tau = alpha / (alpha + 2.0);
        e.prediction = (alpha + 2.0) / (2.0 * (alpha + 2.0) + dim);
        e.estimation = alpha / (2.0 * (alpha + 2.0) + dim);
    }
    return e;
}

double prediction_error(const ForwardProblem& fp, const SpectralField& theta_hat, const SpectralField& theta_o) {
    return l2_distance(forward(fp, theta_hat), forward(fp, theta_o));
}

double estimation_error(const GridFunction& f_hat, const GridFunction& f_o) { return l2_distance(f_hat, f_o); }

nlohmann::json to_json(const MapFit& fit) {
    return {{"theta_hat", to_json(fit.theta_hat)},
            {"objective", fit.objective},
            {"objective_trace", fit.objective_trace},
            {"grad_norm_final", fit.grad_norm_final},
            {"restart_index", fit.restart_index},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"status", fit.status},
            {"initial_objectives", fit.initial_objectives}};
}

}  // namespace pdemap
