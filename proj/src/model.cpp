#include "pdemap/model.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

ForwardProblem::ForwardProblem(DarcyProblem darcy, LinkFunction link, SolverOptions solver)
    : grid_(darcy.grid), link_(link), solver_(solver), pde_(std::move(darcy)) {
    const auto& d = std::get<DarcyProblem>(pde_);
    if (!(d.g.grid() == grid_)) throw InvalidArgument("forward problem: source lives on a different grid");
    if (std::abs(d.f_min - link.f_min()) > 0.0) {
        throw InvalidArgument(
            fmt::format("forward problem: darcy f_min {} differs from link f_min {}", d.f_min, link.f_min()));
    }
}

ForwardProblem::ForwardProblem(SchrodingerProblem schrodinger, LinkFunction link, SolverOptions solver)
    : grid_(schrodinger.grid), link_(link), solver_(solver), pde_(std::move(schrodinger)) {
    const auto& s = std::get<SchrodingerProblem>(pde_);
    if (!(s.g_boundary.grid() == grid_)) throw InvalidArgument("forward problem: boundary data on a different grid");
}

PdeKind ForwardProblem::kind() const noexcept {
    return std::holds_alternative<DarcyProblem>(pde_) ? PdeKind::Darcy : PdeKind::Schrodinger;
}

GridFunction ForwardProblem::coefficient(const SpectralField& theta) const {
    if (!(theta.grid() == grid_)) throw InvalidArgument("forward: parameter lives on a different grid");
    return link_apply(link_, synthesize(theta));
}

GridFunction ForwardProblem::solve(const GridFunction& f) const {
    return std::visit(
        [&](const auto& p) -> GridFunction {
            if constexpr (std::is_same_v<std::decay_t<decltype(p)>, DarcyProblem>) {
                return solve_darcy(p, f, solver_);
            } else {
                return solve_schrodinger(p, f, solver_);
            }
        },
        pde_);
}

MisfitEvaluation ForwardProblem::evaluate_misfit(const GridFunction& f, const Dataset& data) const {
    return std::visit([&](const auto& p) { return pdemap::evaluate_misfit(p, f, data, solver_); }, pde_);
}

double ForwardProblem::data_sup_norm() const {
    if (kind() == PdeKind::Darcy) return sup_distance(darcy().g, GridFunction(grid_));
    const auto& gb = schrodinger().g_boundary;
    double m = 0.0;
    for (std::size_t i = 0; i < gb.size(); ++i) {
        if (grid_.on_boundary(i)) m = std::max(m, std::abs(gb[i]));
    }
    return m;
}

ForwardProblem default_darcy(const Grid& grid, LinkFunction link, double amplitude) {
    auto g = GridFunction::sample(grid, [&](const Point& p) {
        double v = amplitude * std::sin(std::numbers::pi * p[0]);
        if (grid.dim() == 2) v *= std::sin(std::numbers::pi * p[1]);
        return v;
    });
    // sin(pi) is not exactly zero in floating point; the source vanishes on the boundary.
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (grid.on_boundary(i)) g[i] = 0.0;
    }
    return ForwardProblem(DarcyProblem{grid, std::move(g), link.f_min()}, link);
}

ForwardProblem default_schrodinger(const Grid& grid, LinkFunction link, double boundary_value) {
    if (!(boundary_value >= 0.0)) throw InvalidArgument("schrodinger: boundary value must be nonnegative");
    GridFunction g(grid, boundary_value);
    return ForwardProblem(SchrodingerProblem{grid, std::move(g)}, link);
}

GridFunction forward(const ForwardProblem& fp, const SpectralField& theta) { return fp.solve(fp.coefficient(theta)); }

GroundTruth synthesize_truth(const ForwardProblem& fp, double alpha, int modes, std::uint64_t seed, double radius) {
    const Grid& grid = fp.grid();
    if (!(alpha > 0.5 * grid.dim())) {
        throw InvalidArgument(fmt::format("truth: alpha = {} must exceed d/2 = {}", alpha, 0.5 * grid.dim()));
    }
    if (!(radius >= 0.0)) throw InvalidArgument("truth: radius must be nonnegative");
    SpectralField theta(grid, modes);
    if (radius > 0.0) {
        Stream rng(seed, stream_id("truth"));
        auto c = theta.coeffs();
        for (std::size_t i = 0; i < c.size(); ++i) {
            c[i] = radius * rng.sign() * std::pow(1.0 + theta.eigenvalue(i), -(alpha + 0.5 + 0.01) / 2.0);
        }
        const double scale = radius / sobolev_norm(theta, {alpha});
        for (double& v : c) v *= scale;
    }
    GridFunction f = fp.coefficient(theta);
    return {std::move(theta), std::move(f), alpha, radius};
}

Dataset generate_dataset(const GridFunction& state, std::size_t n_samples, double sigma, std::uint64_t seed) {
    if (n_samples < 1) throw InvalidArgument("dataset: need at least one sample");
    if (!(sigma >= 0.0)) throw InvalidArgument("dataset: sigma must be nonnegative");
    const int dim = state.grid().dim();
    Stream design(seed, stream_id("design"));
    Stream noise(seed, stream_id("noise"));
    Dataset ds;
    ds.dim = dim;
    ds.sigma = sigma;
    ds.seed = seed;
    ds.points.resize(n_samples);
    ds.responses.resize(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        Point x{design.uniform(), dim == 2 ? design.uniform() : 0.0};
        ds.points[i] = x;
        ds.responses[i] = point_eval(state, x);
        if (sigma > 0.0) ds.responses[i] += sigma * noise.normal();
    }
    return ds;
}

Dataset generate_dataset(const ForwardProblem& fp, const GroundTruth& truth, std::size_t n_samples, double sigma,
                         std::uint64_t seed) {
    return generate_dataset(forward(fp, truth.theta), n_samples, sigma, seed);
}

double d_r2(const ForwardProblem& fp, const SpectralField& theta1, const SpectralField& theta2, double r,
            double alpha) {
    const double pred = l2_distance(forward(fp, theta1), forward(fp, theta2));
    const double reg = sobolev_norm(theta1, {alpha});
    return pred * pred + r * r * reg * reg;
}

nlohmann::json dataset_metadata(const Dataset& ds, PdeKind kind) {
    return {{"kind", to_string(kind)}, {"dim", ds.dim}, {"N", ds.size()}, {"sigma", ds.sigma}, {"seed", ds.seed}};
}

}  // namespace pdemap
