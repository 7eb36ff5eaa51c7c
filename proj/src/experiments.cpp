#include "pdemap/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

double RateCampaign::kappa() const { return rate_exponents(kind, alpha, dim).kappa; }

void RateCampaign::validate() const {
    if (N_ladder.size() < 4) throw InvalidArgument("campaign: N_ladder needs at least 4 entries");
    for (std::size_t i = 0; i < N_ladder.size(); ++i) {
        if (N_ladder[i] < 1) throw InvalidArgument("campaign: N_ladder entries must be positive");
        if (i > 0 && N_ladder[i] <= N_ladder[i - 1]) throw InvalidArgument("campaign: N_ladder must be strictly increasing");
    }
    if (reps_per_N < 10) throw InvalidArgument("campaign: reps_per_N must be at least 10");
    if (sigma < 0.0) throw InvalidArgument("campaign: sigma must be non-negative");
    if (!(r_multiplier >= 0.0)) throw InvalidArgument("campaign: r_multiplier must be non-negative");
}

ForwardProblem RateCampaign::forward_problem() const {
    if (model) return *model;
    const Grid grid = build_grid(dim, grid_n);
    return kind == PdeKind::Darcy ? default_darcy(grid) : default_schrodinger(grid);
}

GroundTruth RateCampaign::truth(const ForwardProblem& fp) const {
    return synthesize_truth(fp, alpha, truth_modes, mix64(seed ^ stream_id("truth")), truth_radius);
}

double RateCampaign::r_for(int N) const { return r_multiplier * rate_schedule(N, alpha, kappa(), dim); }

int RateCampaign::modes_for(int N) const { return modes ? *modes : default_modes(N, alpha, dim, grid_n); }

namespace {

// Runs fn(i) for i in [0, count) on a pool; results are written by index, so the
// outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(int count, int threads, Fn fn) {
    const int workers = std::max(1, std::min(count, threads > 0 ? threads : static_cast<int>(std::thread::hardware_concurrency())));
    std::atomic<int> next{0};
    auto work = [&] {
        for (int i = next++; i < count; i = next++) fn(i);
    };
    if (workers == 1) {
        work();
        return;
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
}

Replication fit_replication(const RateCampaign& c, const ForwardProblem& fp, const GroundTruth& truth, int N, int rep) {
    Replication row;
    row.N = N;
    row.rep = rep;
    row.modes = c.modes_for(N);
    row.r = c.r_for(N);
    const auto labels = {static_cast<std::uint64_t>(N), static_cast<std::uint64_t>(rep)};
    const Dataset ds = generate_dataset(fp, truth, static_cast<std::size_t>(N), c.sigma,
                                        mix64(c.seed ^ stream_id("rate-dataset", labels)));
    MapConfig cfg;
    cfg.alpha = c.alpha;
    cfg.r = row.r;
    cfg.modes = row.modes;
    cfg.max_iters = c.max_iters;
    cfg.grad_tol = c.grad_tol;
    cfg.restarts = c.restarts;
    cfg.seed = mix64(c.seed ^ stream_id("rate-fit", labels));
    const MapFit fit = map_estimate(fp, ds, cfg);

    const SpectralField projected = truth.theta.with_modes(row.modes);
    if (c.want_prediction) row.prediction = prediction_error(fp, fit.theta_hat, truth.theta);
    if (c.want_estimation) row.estimation = estimation_error(fit.f_hat, truth.f);
    if (c.want_d_r2) row.d_r2 = d_r2(fp, fit.theta_hat, truth.theta, row.r, c.alpha);
    row.sieve_bias = sobolev_norm(truth.theta - projected, {0.0});
    row.theta_norm = sobolev_norm(fit.theta_hat, {c.alpha});
    row.objective = fit.objective;
    row.objective_zero = objective(fp, ds, SpectralField(fp.grid(), row.modes), cfg);
    row.objective_truth = objective(fp, ds, projected, cfg);
    row.trace_monotone = std::is_sorted(fit.objective_trace.rbegin(), fit.objective_trace.rend());
    row.converged = fit.converged;
    row.iterations = fit.iterations;
    row.restart_index = fit.restart_index;
    row.ok = true;
    return row;
}

std::vector<Replication> run_rows(const RateCampaign& c, const std::vector<int>& ladder, const ReplicateFn& replicate) {
    std::optional<ForwardProblem> fp;
    std::optional<GroundTruth> truth;
    if (!replicate) {
        fp = c.forward_problem();
        truth = c.truth(*fp);
    }
    const int per = c.reps_per_N;
    std::vector<Replication> rows(ladder.size() * static_cast<std::size_t>(per));
    parallel_for(static_cast<int>(rows.size()), c.threads, [&](int i) {
        const int N = ladder[static_cast<std::size_t>(i / per)];
        const int rep = i % per;
        try {
            rows[static_cast<std::size_t>(i)] = replicate ? replicate(N, rep) : fit_replication(c, *fp, *truth, N, rep);
            rows[static_cast<std::size_t>(i)].N = N;
            rows[static_cast<std::size_t>(i)].rep = rep;
        } catch (const Error& e) {
            Replication failed;
            failed.N = N;
            failed.rep = rep;
            failed.error = e.what();
            rows[static_cast<std::size_t>(i)] = failed;
        }
    });
    const auto failures = std::count_if(rows.begin(), rows.end(), [](const Replication& r) { return !r.ok; });
    if (static_cast<double>(failures) > 0.05 * static_cast<double>(rows.size())) {
        const auto first = std::find_if(rows.begin(), rows.end(), [](const Replication& r) { return !r.ok; });
        throw NumericalError(fmt::format("campaign: {} of {} replications failed", failures, rows.size()),
                             fmt::format("first failure at N={} rep={}: {}", first->N, first->rep, first->error));
    }
    return rows;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

std::pair<double, double> loglog_fit(const std::vector<int>& N, const std::vector<double>& means) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < N.size(); ++i) {
        if (means[i] > 0.0 && std::isfinite(means[i])) {
            x.push_back(std::log(static_cast<double>(N[i])));
            y.push_back(std::log(means[i]));
        }
    }
    if (x.size() < 2) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    return {slope, my - slope * mx};
}

// Per-N samples of one metric over successful replications.
template <typename Get>
std::vector<std::vector<double>> samples(const std::vector<Replication>& rows, const std::vector<int>& N, Get get) {
    std::vector<std::vector<double>> out(N.size());
    for (const auto& r : rows) {
        if (!r.ok) continue;
        const auto it = std::find(N.begin(), N.end(), r.N);
        out[static_cast<std::size_t>(it - N.begin())].push_back(get(r));
    }
    return out;
}

SlopeFit fit_slope(const std::vector<int>& N, const std::vector<std::vector<double>>& per_N, double theory,
                   std::uint64_t seed, const char* name) {
    constexpr int kBootstrap = 1000;
    std::vector<double> means;
    for (const auto& s : per_N) means.push_back(mean_of(s));
    SlopeFit fit;
    fit.theory = theory;
    std::tie(fit.slope, fit.intercept) = loglog_fit(N, means);
    if (!std::isfinite(fit.slope)) {
        fit.ci_low = fit.ci_high = fit.slope;
        return fit;
    }
    Stream rng(seed, stream_id("bootstrap", {stream_id(name)}));
    std::vector<double> slopes;
    std::vector<double> resampled(N.size());
    for (int b = 0; b < kBootstrap; ++b) {
        for (std::size_t i = 0; i < per_N.size(); ++i) {
            const auto& s = per_N[i];
            double acc = 0.0;
            for (std::size_t k = 0; k < s.size(); ++k) {
                acc += s[static_cast<std::size_t>(rng.uniform() * static_cast<double>(s.size())) % s.size()];
            }
            resampled[i] = s.empty() ? 0.0 : acc / static_cast<double>(s.size());
        }
        const double slope = loglog_fit(N, resampled).first;
        if (std::isfinite(slope)) slopes.push_back(slope);
    }
    fit.ci_low = slopes.empty() ? fit.slope : std::min(quantile(slopes, 0.025), fit.slope);
    fit.ci_high = slopes.empty() ? fit.slope : std::max(quantile(slopes, 0.975), fit.slope);
    return fit;
}

std::string num(double v) { return fmt::format("{:.17g}", v); }

nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json to_json(const SlopeFit& f) {
    return {{"slope", json_number(f.slope)},
            {"intercept", json_number(f.intercept)},
            {"ci", {json_number(f.ci_low), json_number(f.ci_high)}},
            {"theory", f.theory}};
}

}  // namespace

double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw InvalidArgument("quantile: empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile: q must lie in [0, 1]");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double RateReport::monotone_fraction(const std::vector<double>& means) {
    if (means.size() < 2) return 1.0;
    int good = 0;
    for (std::size_t i = 1; i < means.size(); ++i) good += means[i] <= means[i - 1];
    return static_cast<double>(good) / static_cast<double>(means.size() - 1);
}

bool RateReport::estimator_invariants_hold() const {
    return std::all_of(rows.begin(), rows.end(), [](const Replication& r) {
        return !r.ok || (r.trace_monotone && r.objective >= r.objective_zero && r.objective >= r.objective_truth);
    });
}

RateReport run_rate_campaign(const RateCampaign& c, const ReplicateFn& replicate) {
    c.validate();
    RateReport report;
    report.campaign = c;
    report.campaign.model.reset();
    report.N = c.N_ladder;
    report.rows = run_rows(c, c.N_ladder, replicate);
    report.failures = static_cast<int>(std::count_if(report.rows.begin(), report.rows.end(), [](auto& r) { return !r.ok; }));

    const auto pred = samples(report.rows, report.N, [](const Replication& r) { return r.prediction; });
    const auto est = samples(report.rows, report.N, [](const Replication& r) { return r.estimation; });
    const auto dr2 = samples(report.rows, report.N, [](const Replication& r) { return r.d_r2; });
    for (std::size_t i = 0; i < report.N.size(); ++i) {
        report.mean_prediction.push_back(mean_of(pred[i]));
        report.mean_estimation.push_back(mean_of(est[i]));
        report.mean_d_r2.push_back(mean_of(dr2[i]));
    }
    const RateExponents ex = rate_exponents(c.kind, c.alpha, c.dim);
    report.prediction = fit_slope(report.N, pred, -ex.prediction, c.seed, "prediction");
    report.estimation = fit_slope(report.N, est, -ex.estimation, c.seed, "estimation");
    return report;
}

ConcentrationReport run_concentration(const RateCampaign& c, const std::vector<double>& M_ladder,
                                      const ReplicateFn& replicate) {
    if (c.N_ladder.size() != 1) throw InvalidArgument("concentration: N_ladder must hold exactly one N");
    if (c.reps_per_N < 50) throw InvalidArgument("concentration: reps_per_N must be at least 50");
    if (M_ladder.empty()) throw InvalidArgument("concentration: M ladder is empty");
    for (double m : M_ladder) {
        if (!(m >= 0.0)) throw InvalidArgument("concentration: M values must be non-negative");
    }
    const auto rows = run_rows(c, c.N_ladder, replicate);

    ConcentrationReport report;
    report.N = c.N_ladder.front();
    report.r = c.r_for(report.N);
    report.M = M_ladder;
    for (const auto& row : rows) {
        if (row.ok) report.scaled_d_r2.push_back(row.d_r2 / (report.r * report.r));
        else ++report.failures;
    }
    report.reps = static_cast<int>(report.scaled_d_r2.size());
    for (double m : M_ladder) {
        const auto hits = std::count_if(report.scaled_d_r2.begin(), report.scaled_d_r2.end(), [&](double v) { return v >= m; });
        report.frequency.push_back(report.reps == 0 ? 0.0 : static_cast<double>(hits) / report.reps);
    }
    return report;
}

StabilityReport run_stability_check(const RateCampaign& c, const ReplicateFn& replicate) {
    c.validate();
    StabilityReport report;
    report.tau = rate_exponents(c.kind, c.alpha, c.dim).tau;
    if (!replicate) {
        const ForwardProblem fp = c.forward_problem();
        report.theta_o_norm = sobolev_norm(c.truth(fp).theta, {c.alpha});
    }
    for (auto& row : run_rows(c, c.N_ladder, replicate)) {
        if (!row.ok) {
            ++report.failures;
            continue;
        }
        const double bound = std::pow(c.r_for(row.N), report.tau);
        report.bound.push_back(bound);
        report.ratio.push_back(row.estimation / bound);
        report.rows.push_back(std::move(row));
    }
    if (report.rows.empty()) throw NumericalError("stability: no successful replications", "");
    report.c95 = quantile(report.ratio, 0.95);
    const auto below = std::count_if(report.ratio.begin(), report.ratio.end(), [&](double v) { return v <= report.c95; });
    report.fraction_below = static_cast<double>(below) / static_cast<double>(report.ratio.size());
    for (int N : c.N_ladder) {
        std::vector<double> at;
        for (std::size_t i = 0; i < report.rows.size(); ++i) {
            if (report.rows[i].N == N) at.push_back(report.ratio[i]);
        }
        if (at.empty()) continue;
        report.N.push_back(N);
        report.p95_by_N.push_back(quantile(at, 0.95));
    }
    const auto within = std::count_if(report.rows.begin(), report.rows.end(),
                                      [&](const Replication& r) { return r.theta_norm <= 3.0 * report.theta_o_norm; });
    report.norm_fraction = static_cast<double>(within) / static_cast<double>(report.rows.size());
    return report;
}

nlohmann::json to_json(const RateCampaign& c) {
    return {{"kind", to_string(c.kind)},
            {"dim", c.dim},
            {"grid_n", c.grid_n},
            {"alpha", c.alpha},
            {"N_ladder", c.N_ladder},
            {"reps_per_N", c.reps_per_N},
            {"sigma", c.sigma},
            {"seed", c.seed},
            {"truth_modes", c.truth_modes},
            {"truth_radius", c.truth_radius},
            {"r_multiplier", c.r_multiplier},
            {"modes", c.modes ? nlohmann::json(*c.modes) : nlohmann::json(nullptr)},
            {"max_iters", c.max_iters},
            {"grad_tol", c.grad_tol},
            {"restarts", c.restarts}};
}

nlohmann::json to_json(const RateReport& r) {
    int monotone = 0, converged = 0;
    for (const auto& row : r.rows) {
        monotone += row.ok && row.trace_monotone;
        converged += row.ok && row.converged;
    }
    auto means = [](const std::vector<double>& v) {
        nlohmann::json out = nlohmann::json::array();
        for (double x : v) out.push_back(json_number(x));
        return out;
    };
    return {{"campaign", to_json(r.campaign)},
            {"N", r.N},
            {"mean_prediction", means(r.mean_prediction)},
            {"mean_estimation", means(r.mean_estimation)},
            {"mean_d_r2", means(r.mean_d_r2)},
            {"prediction", to_json(r.prediction)},
            {"estimation", to_json(r.estimation)},
            {"prediction_monotone_fraction", RateReport::monotone_fraction(r.mean_prediction)},
            {"estimation_monotone_fraction", RateReport::monotone_fraction(r.mean_estimation)},
            {"replications", r.rows.size()},
            {"failures", r.failures},
            {"trace_monotone", monotone},
            {"converged", converged},
            {"estimator_invariants_hold", r.estimator_invariants_hold()}};
}

nlohmann::json to_json(const ConcentrationReport& r) {
    return {{"N", r.N}, {"r", r.r}, {"M", r.M}, {"frequency", r.frequency}, {"reps", r.reps}, {"failures", r.failures}};
}

nlohmann::json to_json(const StabilityReport& r) {
    return {{"tau", r.tau},
            {"theta_o_norm", r.theta_o_norm},
            {"c95", r.c95},
            {"fraction_below", r.fraction_below},
            {"N", r.N},
            {"p95_by_N", r.p95_by_N},
            {"norm_fraction", r.norm_fraction},
            {"replications", r.rows.size()},
            {"failures", r.failures}};
}

void write_csv(std::ostream& os, const std::vector<Replication>& rows) {
    os << "N,rep,ok,modes,r,prediction_l2,estimation_l2,d_r2_squared,sieve_bias_l2,theta_norm_halpha,objective,"
          "objective_zero,objective_truth,trace_monotone,converged,iterations,restart_index,error\n";
    for (const auto& r : rows) {
        std::string err = r.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        fmt::print(os, "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.N, r.rep, int(r.ok), r.modes, num(r.r),
                   num(r.prediction), num(r.estimation), num(r.d_r2), num(r.sieve_bias), num(r.theta_norm),
                   num(r.objective), num(r.objective_zero), num(r.objective_truth), int(r.trace_monotone),
                   int(r.converged), r.iterations, r.restart_index, err);
    }
}

void write_csv(std::ostream& os, const ConcentrationReport& r) {
    os << "M,frequency\n";
    for (std::size_t i = 0; i < r.M.size(); ++i) fmt::print(os, "{},{}\n", num(r.M[i]), num(r.frequency[i]));
}

void write_svg(std::ostream& os, const RateReport& r) {
    constexpr double W = 640, H = 420, L = 70, R = 20, T = 30, B = 50;
    std::vector<double> ys;
    for (const auto* v : {&r.mean_prediction, &r.mean_estimation}) {
        for (double y : *v) {
            if (y > 0.0 && std::isfinite(y)) ys.push_back(std::log10(y));
        }
    }
    if (r.N.empty() || ys.empty()) {
        os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\"></svg>\n";
        return;
    }
    const double x0 = std::log10(r.N.front()), x1 = std::max(std::log10(r.N.back()), x0 + 1e-9);
    const double y0 = std::floor(*std::min_element(ys.begin(), ys.end()) - 0.1);
    const double y1 = std::ceil(*std::max_element(ys.begin(), ys.end()) + 0.1);
    auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - T - B); };

    fmt::print(os, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n", W, H);
    fmt::print(os, "<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", W, H);
    fmt::print(os, "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
    fmt::print(os, "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, T, L, H - B);
    for (int N : r.N) {
        fmt::print(os, "<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px(std::log10(N)), H - B + 16, N);
    }
    for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e) {
        fmt::print(os, "<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">1e{}</text>\n", L - 6, py(e) + 4, e);
    }
    fmt::print(os, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">N (log scale)</text>\n", (L + W - R) / 2, H - 12);

    struct Series {
        const std::vector<double>* means;
        const SlopeFit* fit;
        const char* colour;
        const char* label;
    };
    const Series series[] = {{&r.mean_prediction, &r.prediction, "#1f77b4", "prediction"},
                             {&r.mean_estimation, &r.estimation, "#d62728", "estimation"}};
    int legend = 0;
    for (const auto& s : series) {
        std::string points;
        double anchor = std::numeric_limits<double>::quiet_NaN();
        for (std::size_t i = 0; i < r.N.size(); ++i) {
            const double y = (*s.means)[i];
            if (!(y > 0.0 && std::isfinite(y))) continue;
            if (std::isnan(anchor)) anchor = std::log10(y) - s.fit->theory * std::log10(r.N[i]) ;
            const double cx = px(std::log10(r.N[i])), cy = py(std::log10(y));
            fmt::print(os, "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3.5\" fill=\"{}\"/>\n", cx, cy, s.colour);
            points += fmt::format("{:.1f},{:.1f} ", cx, cy);
        }
        if (points.empty()) continue;
        fmt::print(os, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\"/>\n", points, s.colour);
        const double lx0 = x0, lx1 = x1;
        fmt::print(os,
                   "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-dasharray=\"6,4\"/>\n",
                   px(lx0), py(anchor + s.fit->theory * lx0), px(lx1), py(anchor + s.fit->theory * lx1), s.colour);
        fmt::print(os, "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}: slope {:.3f} (theory {:.3f}, dashed)</text>\n", L + 10,
                   T + 14 + 16 * legend, s.colour, s.label, s.fit->slope, s.fit->theory);
        ++legend;
    }
    os << "</svg>\n";
}

}  // namespace pdemap
