#pragma once

// Empirical probes of the regularity conditions on the forward map. Each
// probe samples parameters from an H^alpha ball and reports the fitted
// constant of the corresponding inequality.

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pdemap/model.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

struct ProbeSettings {
    double alpha = 2.0;
    double radius = 1.5;  ///< H^alpha ball radius for sampled parameters
    int modes = 16;
    int pairs = 200;
    std::uint64_t seed = 0;
};

/// Ratio table of a Lipschitz-type probe, with the pair distance used for the blow-up check.
struct RatioProbe {
    std::vector<double> distances;
    std::vector<double> ratios;
    double max_ratio = 0.0;
    /// Max ratio over the 10% of pairs with the smallest distance.
    double closest_decile_max = 0.0;

    bool finite() const noexcept;
    bool no_blowup() const noexcept { return closest_decile_max <= 2.0 * max_ratio; }
};

/// ||G(t1)-G(t2)||_L2 / [(1 + max ||t||^4_{H^alpha}) ||t1-t2||_{(H^1)*}]
RatioProbe probe_l2_regularity(const ForwardProblem& fp, const ProbeSettings& s);
/// sup |G(t)| / ||g||_inf over sampled t.
double probe_uniform_bound(const ForwardProblem& fp, const ProbeSettings& s);
/// ||G(t1)-G(t2)||_inf / [(1 + max ||t||^4_{C^1}) ||t1-t2||_{C^1}]
RatioProbe probe_sup_regularity(const ForwardProblem& fp, const ProbeSettings& s);

struct StabilityProbe {
    std::vector<double> prediction_distances;  ///< delta = ||G(t1)-G(t2)||_L2
    std::vector<double> coefficient_distances; ///< ||f1 - f2||_L2
    double slope = 0.0;                        ///< least-squares slope in log-log
    double tau = 0.0;
};

/// Inverse continuity: regress log ||f1-f2|| on log delta over a delta ladder.
StabilityProbe probe_inverse_continuity(const ForwardProblem& fp, const ProbeSettings& s, double tau);

/// max over sampled u and beta in {1,2} of ||u||_{H^b} / (||u||^{1-b/(a+1)} ||u||_{H^{a+1}}^{b/(a+1)}).
double probe_interpolation(const Grid& grid, const ProbeSettings& s, int fields = 100);

/// C^1 norm surrogate: max |v| + max |centered difference|.
double c1_norm(const GridFunction& v);

/// Random parameter with H^alpha norm uniform in (0, radius].
SpectralField random_ball_field(const Grid& grid, int modes, double alpha, double radius, Stream& rng);

/// Least-squares slope of y on x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const RatioProbe& p);

}  // namespace pdemap
