#pragma once

// Penalized least-squares (MAP) estimation over K sine modes:
//
//   J(theta) = -(1/(2 sigma^2 N)) sum_i (Y_i - G(theta)(X_i))^2 - (r^2/2) ||theta||^2_{H^alpha}
//
// maximized by limited-memory BFGS on -J from several starting points.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pdemap/dataset.hpp"
#include "pdemap/fnspace.hpp"
#include "pdemap/model.hpp"

namespace pdemap {

struct MapConfig {
    double alpha = 2.0;
    double r = 0.1;
    int modes = 8;
    int max_iters = 500;
    double grad_tol = 1e-8;
    int restarts = 3;
    std::uint64_t seed = 0;
    int memory = 10;
    /// H^alpha norm of the random starting points used by restarts 1, 2, ...
    double init_radius = 0.5;

    void validate(const Grid& grid) const;
};

struct ObjectiveEvaluation {
    double value;           ///< J(theta), always <= 0
    SpectralField gradient; ///< gradient of -J in coefficient space
};

double objective(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta, const MapConfig& cfg);
SpectralField objective_gradient(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta,
                                 const MapConfig& cfg);
ObjectiveEvaluation evaluate_objective(const ForwardProblem& fp, const Dataset& data, const SpectralField& theta,
                                       const MapConfig& cfg);

struct MapFit {
    SpectralField theta_hat;
    GridFunction f_hat;
    /// Values of -J along the accepted iterates of the winning restart (non-increasing).
    std::vector<double> objective_trace{};
    double objective = 0.0;  ///< J(theta_hat)
    double grad_norm_final = 0.0;
    int restart_index = 0;
    int iterations = 0;
    bool converged = false;
    std::string status{};
    /// Starting points and their objective values, one per restart.
    std::vector<SpectralField> initial_points{};
    std::vector<double> initial_objectives{};
};

MapFit map_estimate(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg);
/// Single L-BFGS run from a given start (restart_index 0).
MapFit map_estimate_from(const ForwardProblem& fp, const Dataset& data, const MapConfig& cfg,
                         const SpectralField& start);

/// Sieve size ceil(N^{1/(2 alpha + d)}) capped at n/2.
int default_modes(std::size_t n_samples, double alpha, int dim, int n);

/// r_N = N^{-(alpha+kappa)/(2(alpha+kappa)+d)}
double rate_schedule(double n_samples, double alpha, double kappa, int dim);

/// Exponents of the rate statements for a PDE kind (all positive; rates are N^{-exponent}).
struct RateExponents {
    double kappa;
    double prediction;  ///< (alpha+kappa)/(2(alpha+kappa)+d)
    double estimation;  ///< prediction * tau
    double tau;         ///< stability exponent: (alpha-1)/(alpha+1) Darcy, alpha/(alpha+2) Schrodinger
};

RateExponents rate_exponents(PdeKind kind, double alpha, int dim);

double prediction_error(const ForwardProblem& fp, const SpectralField& theta_hat, const SpectralField& theta_o);
double estimation_error(const GridFunction& f_hat, const GridFunction& f_o);

nlohmann::json to_json(const MapFit& fit);

}  // namespace pdemap
