#pragma once

// Replication campaigns: rate slopes, concentration frequencies and the
// stability bound, each run over fresh datasets from one sampled truth.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pdemap/estimator.hpp"

namespace pdemap {

struct RateCampaign {
    PdeKind kind = PdeKind::Darcy;
    int dim = 1;
    int grid_n = 127;
    std::optional<ForwardProblem> model;  ///< overrides the default problem for (kind, dim, grid_n)
    double alpha = 2.0;
    std::vector<int> N_ladder{128, 256, 512, 1024, 2048, 4096, 8192};
    int reps_per_N = 20;
    double sigma = 0.05;
    std::uint64_t seed = 0;

    int truth_modes = 32;
    double truth_radius = 1.5;

    double r_multiplier = 1.0;  ///< r_N = r_multiplier * rate_schedule(N, alpha, kappa, d)
    std::optional<int> modes;   ///< fixed K; default_modes(N) when unset
    int max_iters = 500;
    double grad_tol = 1e-8;
    int restarts = 3;
    int threads = 0;  ///< 0 = hardware concurrency

    bool want_prediction = true;
    bool want_estimation = true;
    bool want_d_r2 = true;

    double kappa() const;
    /// Ladder strictly increasing with at least 4 entries, reps_per_N >= 10.
    void validate() const;
    ForwardProblem forward_problem() const;
    GroundTruth truth(const ForwardProblem& fp) const;
    double r_for(int N) const;
    int modes_for(int N) const;
};

/// One (N, rep) replication. Error metrics are unsquared except d_r2.
struct Replication {
    int N = 0;
    int rep = 0;
    bool ok = false;
    std::string error;

    int modes = 0;
    double r = 0.0;
    double prediction = 0.0;
    double estimation = 0.0;
    double d_r2 = 0.0;
    double sieve_bias = 0.0;  ///< ||theta_o - Pi_K theta_o||_L2
    double theta_norm = 0.0;  ///< ||theta_hat||_{H^alpha}
    double objective = 0.0;
    double objective_zero = 0.0;
    double objective_truth = 0.0;  ///< J at the K-mode projection of the truth
    bool trace_monotone = false;
    bool converged = false;
    int iterations = 0;
    int restart_index = 0;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double theory = 0.0;  ///< theoretical exponent (negative)
};

struct RateReport {
    RateCampaign campaign;
    std::vector<Replication> rows;
    std::vector<int> N;
    std::vector<double> mean_prediction, mean_estimation, mean_d_r2;
    SlopeFit prediction, estimation;
    int failures = 0;

    /// Fraction of adjacent ladder pairs whose mean does not increase.
    static double monotone_fraction(const std::vector<double>& means);
    bool estimator_invariants_hold() const;
};

/// Test hook: replaces fit-and-measure for one (N, rep).
using ReplicateFn = std::function<Replication(int N, int rep)>;

RateReport run_rate_campaign(const RateCampaign& c, const ReplicateFn& replicate = {});

struct ConcentrationReport {
    int N = 0;
    double r = 0.0;
    std::vector<double> M;
    std::vector<double> frequency;  ///< P(d_r2 >= M r^2), over successful reps
    std::vector<double> scaled_d_r2;  ///< d_r2 / r^2 per successful rep
    int reps = 0;
    int failures = 0;
};

/// Uses the single ladder entry of c; requires reps_per_N >= 50.
ConcentrationReport run_concentration(const RateCampaign& c, const std::vector<double>& M_ladder,
                                      const ReplicateFn& replicate = {});

struct StabilityReport {
    double tau = 0.0;
    double theta_o_norm = 0.0;
    std::vector<Replication> rows;
    std::vector<double> bound;  ///< r_N^tau per row
    std::vector<double> ratio;  ///< estimation / bound per row
    double c95 = 0.0;           ///< 95th percentile of ratio over the campaign
    double fraction_below = 0.0;
    std::vector<int> N;
    std::vector<double> p95_by_N;
    double norm_fraction = 0.0;  ///< fraction of reps with ||theta_hat|| <= 3 ||theta_o||
    int failures = 0;
};

StabilityReport run_stability_check(const RateCampaign& c, const ReplicateFn& replicate = {});

/// Empirical quantile with linear interpolation, q in [0, 1].
double quantile(std::vector<double> v, double q);

nlohmann::json to_json(const RateCampaign& c);
nlohmann::json to_json(const RateReport& r);
nlohmann::json to_json(const ConcentrationReport& r);
nlohmann::json to_json(const StabilityReport& r);

void write_csv(std::ostream& os, const std::vector<Replication>& rows);
void write_csv(std::ostream& os, const ConcentrationReport& r);
/// Log-log plot of the per-N means with the theoretical slopes anchored at the first point.
void write_svg(std::ostream& os, const RateReport& r);

}  // namespace pdemap
