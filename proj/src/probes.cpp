#include "pdemap/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

namespace {

SpectralField unit_direction(const Grid& grid, int modes, double alpha, Stream& rng) {
    SpectralField v(grid, modes);
    for (std::size_t i = 0; i < v.size(); ++i) {
        v.coeffs()[i] = rng.normal() * std::pow(1.0 + v.eigenvalue(i), -(alpha + 0.51) / 2.0);
    }
    const double s = sobolev_norm(v, {alpha});
    for (double& c : v.coeffs()) c /= s;
    return v;
}

SpectralField add_scaled(const SpectralField& a, double eps, const SpectralField& v) {
    SpectralField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.coeffs()[i] += eps * v.coeffs()[i];
    return out;
}

int probe_modes(const Grid& grid, const ProbeSettings& s) { return std::min(s.modes, grid.n()); }

void finish(RatioProbe& p) {
    p.max_ratio = p.ratios.empty() ? 0.0 : *std::max_element(p.ratios.begin(), p.ratios.end());
    std::vector<std::size_t> order(p.ratios.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return p.distances[a] < p.distances[b]; });
    const std::size_t decile = std::max<std::size_t>(1, order.size() / 10);
    p.closest_decile_max = 0.0;
    for (std::size_t k = 0; k < decile && k < order.size(); ++k) {
        p.closest_decile_max = std::max(p.closest_decile_max, p.ratios[order[k]]);
    }
}

// Pairs (t1, t1 + eps v) with eps log-uniform over three decades below the radius.
template <typename Ratio>
RatioProbe pair_probe(const ForwardProblem& fp, const ProbeSettings& s, const char* name, Ratio ratio) {
    Stream rng(s.seed, stream_id(name));
    const int modes = probe_modes(fp.grid(), s);
    RatioProbe p;
    for (int k = 0; k < s.pairs; ++k) {
        const SpectralField t1 = random_ball_field(fp.grid(), modes, s.alpha, s.radius, rng);
        const double eps = s.radius * std::pow(10.0, -3.0 * rng.uniform());
        const SpectralField t2 = add_scaled(t1, eps, unit_direction(fp.grid(), modes, s.alpha, rng));
        const auto [dist, value] = ratio(t1, t2);
        p.distances.push_back(dist);
        p.ratios.push_back(value);
    }
    finish(p);
    return p;
}

}  // namespace

bool RatioProbe::finite() const noexcept {
    return std::all_of(ratios.begin(), ratios.end(), [](double r) { return std::isfinite(r); });
}

SpectralField random_ball_field(const Grid& grid, int modes, double alpha, double radius, Stream& rng) {
    SpectralField v = unit_direction(grid, modes, alpha, rng);
    const double scale = radius * rng.uniform();
    for (double& c : v.coeffs()) c *= scale;
    return v;
}

double c1_norm(const GridFunction& v) {
    const Grid& g = v.grid();
    const int m = g.axis_nodes();
    double sup = 0.0, grad = 0.0;
    auto diff = [&](int i, int j, int axis) {
        auto at = [&](int a, int b) { return v[g.dim() == 1 ? g.index(a) : g.index(a, b)]; };
        const int c = axis == 0 ? i : j;
        const int lo = std::max(c - 1, 0), hi = std::min(c + 1, m - 1);
        const double fl = axis == 0 ? at(lo, j) : at(i, lo);
        const double fh = axis == 0 ? at(hi, j) : at(i, hi);
        return (fh - fl) / ((hi - lo) * g.h());
    };
    for (std::size_t k = 0; k < v.size(); ++k) sup = std::max(sup, std::abs(v[k]));
    for (int j = 0; j < (g.dim() == 1 ? 1 : m); ++j) {
        for (int i = 0; i < m; ++i) {
            grad = std::max(grad, std::abs(diff(i, j, 0)));
            if (g.dim() == 2) grad = std::max(grad, std::abs(diff(i, j, 1)));
        }
    }
    return sup + grad;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("ls_slope: need at least two paired values");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw InvalidArgument("ls_slope: regressor has zero variance");
    return sxy / sxx;
}

RatioProbe probe_l2_regularity(const ForwardProblem& fp, const ProbeSettings& s) {
    return pair_probe(fp, s, "probe-c1", [&](const SpectralField& t1, const SpectralField& t2) {
        const double growth = 1.0 + std::pow(std::max(sobolev_norm(t1, {s.alpha}), sobolev_norm(t2, {s.alpha})), 4);
        const double dual = sobolev_norm(t1 - t2, {-1.0});
        const double num = l2_distance(forward(fp, t1), forward(fp, t2));
        return std::pair{dual, num / (growth * dual)};
    });
}

double probe_uniform_bound(const ForwardProblem& fp, const ProbeSettings& s) {
    Stream rng(s.seed, stream_id("probe-c2"));
    const int modes = probe_modes(fp.grid(), s);
    const double gsup = fp.data_sup_norm();
    if (!(gsup > 0.0)) throw InvalidArgument("uniform bound probe: PDE data vanish identically");
    double best = 0.0;
    for (int k = 0; k < s.pairs; ++k) {
        const SpectralField t = random_ball_field(fp.grid(), modes, s.alpha, s.radius, rng);
        best = std::max(best, sup_distance(forward(fp, t), GridFunction(fp.grid())) / gsup);
    }
    return best;
}

RatioProbe probe_sup_regularity(const ForwardProblem& fp, const ProbeSettings& s) {
    return pair_probe(fp, s, "probe-c3", [&](const SpectralField& t1, const SpectralField& t2) {
        const GridFunction n1 = synthesize(t1);
        const GridFunction n2 = synthesize(t2);
        const double growth = 1.0 + std::pow(std::max(c1_norm(n1), c1_norm(n2)), 4);
        const double dist = c1_norm(n1 - n2);
        const double num = sup_distance(forward(fp, t1), forward(fp, t2));
        return std::pair{dist, num / (growth * dist)};
    });
}

StabilityProbe probe_inverse_continuity(const ForwardProblem& fp, const ProbeSettings& s, double tau) {
    Stream rng(s.seed, stream_id("probe-c7"));
    const int modes = probe_modes(fp.grid(), s);
    const int directions = std::max(1, s.pairs / 20);
    StabilityProbe p;
    p.tau = tau;
    std::vector<double> lx, ly;
    for (int k = 0; k < directions; ++k) {
        const SpectralField t1 = random_ball_field(fp.grid(), modes, s.alpha, s.radius, rng);
        const SpectralField v = unit_direction(fp.grid(), modes, s.alpha, rng);
        const GridFunction u1 = forward(fp, t1);
        const GridFunction f1 = fp.coefficient(t1);
        for (double eps = 1e-1; eps >= 1e-4 * 0.99; eps /= std::sqrt(10.0)) {
            const SpectralField t2 = add_scaled(t1, eps * s.radius, v);
            const double delta = l2_distance(u1, forward(fp, t2));
            const double df = l2_distance(f1, fp.coefficient(t2));
            if (!(delta > 0.0 && df > 0.0)) continue;
            p.prediction_distances.push_back(delta);
            p.coefficient_distances.push_back(df);
            lx.push_back(std::log(delta));
            ly.push_back(std::log(df));
        }
    }
    p.slope = ls_slope(lx, ly);
    return p;
}

double probe_interpolation(const Grid& grid, const ProbeSettings& s, int fields) {
    Stream rng(s.seed, stream_id("probe-interpolation"));
    const int modes = probe_modes(grid, s);
    const double top = s.alpha + 1.0;
    double best = 0.0;
    for (int k = 0; k < fields; ++k) {
        // Mix of smooth and rough fields so that both ends of the inequality are exercised.
        const double decay = 4.0 * rng.uniform() - 1.0;
        SpectralField u(grid, modes);
        for (std::size_t i = 0; i < u.size(); ++i) u.coeffs()[i] = rng.normal() * std::pow(1.0 + u.eigenvalue(i), -decay);
        const double l2 = sobolev_norm(u, {0.0});
        const double high = sobolev_norm(u, {top});
        for (double beta : {1.0, 2.0}) {
            const double bound = std::pow(l2, (top - beta) / top) * std::pow(high, beta / top);
            best = std::max(best, sobolev_norm(u, {beta}) / bound);
        }
    }
    return best;
}

nlohmann::json to_json(const RatioProbe& p) {
    return {{"max_ratio", p.max_ratio},
            {"closest_decile_max", p.closest_decile_max},
            {"finite", p.finite()},
            {"no_blowup", p.no_blowup()},
            {"pairs", p.ratios.size()}};
}

}  // namespace pdemap
