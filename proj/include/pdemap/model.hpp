#pragma once

// Statistical layer: the forward map G(theta) = G_PDE(Psi o theta), random
// design data generation, ground truths, and the d_r^2 loss.

#include <cstdint>
#include <variant>

#include <nlohmann/json_fwd.hpp>

#include "pdemap/dataset.hpp"
#include "pdemap/fnspace.hpp"
#include "pdemap/link.hpp"
#include "pdemap/pde.hpp"

namespace pdemap {

class ForwardProblem {
public:
    ForwardProblem(DarcyProblem darcy, LinkFunction link, SolverOptions solver = {});
    ForwardProblem(SchrodingerProblem schrodinger, LinkFunction link, SolverOptions solver = {});

    PdeKind kind() const noexcept;
    const Grid& grid() const noexcept { return grid_; }
    const LinkFunction& link() const noexcept { return link_; }
    const SolverOptions& solver() const noexcept { return solver_; }
    const DarcyProblem& darcy() const { return std::get<DarcyProblem>(pde_); }
    const SchrodingerProblem& schrodinger() const { return std::get<SchrodingerProblem>(pde_); }

    /// f = Psi o theta on the grid.
    GridFunction coefficient(const SpectralField& theta) const;
    /// PDE solution for a nodal coefficient.
    GridFunction solve(const GridFunction& f) const;
    MisfitEvaluation evaluate_misfit(const GridFunction& f, const Dataset& data) const;
    /// sup of the data entering the PDE: |g| for Darcy, boundary |g| for Schrodinger.
    double data_sup_norm() const;

private:
    Grid grid_;
    LinkFunction link_;
    SolverOptions solver_;
    std::variant<DarcyProblem, SchrodingerProblem> pde_;
};

/// Darcy problem with source g = amplitude * prod sin(pi x_i).
ForwardProblem default_darcy(const Grid& grid, LinkFunction link = LinkFunction(0.5, 1.0), double amplitude = 10.0);
/// Schrodinger problem with constant boundary value.
ForwardProblem default_schrodinger(const Grid& grid, LinkFunction link = LinkFunction(0.05, 1.0),
                                   double boundary_value = 1.0);

GridFunction forward(const ForwardProblem& fp, const SpectralField& theta);

struct GroundTruth {
    SpectralField theta;
    GridFunction f;
    double alpha;
    double norm_bound;
};

/// Truth with coefficients ~ (1+lambda_k)^{-(alpha+0.51)/2} and random signs,
/// rescaled to H^alpha norm `radius`.
GroundTruth synthesize_truth(const ForwardProblem& fp, double alpha, int modes, std::uint64_t seed, double radius);

Dataset generate_dataset(const ForwardProblem& fp, const GroundTruth& truth, std::size_t n_samples, double sigma,
                         std::uint64_t seed);
/// Dataset from an already solved state u = G(theta_o).
Dataset generate_dataset(const GridFunction& state, std::size_t n_samples, double sigma, std::uint64_t seed);

/// ||G(theta1) - G(theta2)||^2 + r^2 ||theta1||^2_{H^alpha}
double d_r2(const ForwardProblem& fp, const SpectralField& theta1, const SpectralField& theta2, double r,
            double alpha);

nlohmann::json dataset_metadata(const Dataset& ds, PdeKind kind);

}  // namespace pdemap
