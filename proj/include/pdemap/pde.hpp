#pragma once

// Finite-difference solvers for
//   Darcy:        div(f grad u) = g in (0,1)^d,  u = 0 on the boundary
//   Schrodinger:  (1/2) lap u - f u = 0,         u = g on the boundary
// and adjoint-state gradients of the least-squares data misfit.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "pdemap/dataset.hpp"
#include "pdemap/fnspace.hpp"

namespace pdemap {

enum class PdeKind { Darcy, Schrodinger };

const char* to_string(PdeKind kind) noexcept;
PdeKind pde_kind_from_string(const std::string& name);

struct DarcyProblem {
    Grid grid;
    GridFunction g;  ///< source term, sampled at every node
    double f_min;
};

struct SchrodingerProblem {
    Grid grid;
    GridFunction g_boundary;  ///< only boundary entries are read
};

enum class LinearBackend { Direct, Pcg };

struct SolverOptions {
    LinearBackend backend = LinearBackend::Direct;
    double rel_tol = 1e-12;    ///< PCG relative residual target
    int max_iter_factor = 20;  ///< PCG iteration cap = factor * unknowns
};

/// Assembled symmetric positive-definite interior system. Interior node
/// (i, j) maps to unknown (j-1)*n + (i-1).
class SparseOperator {
public:
    ~SparseOperator();
    SparseOperator(SparseOperator&&) noexcept;
    SparseOperator& operator=(SparseOperator&&) noexcept;

    static SparseOperator darcy(const DarcyProblem& prob, const GridFunction& f);
    static SparseOperator schrodinger(const SchrodingerProblem& prob, const GridFunction& f);

    const Grid& grid() const noexcept;
    std::size_t unknowns() const noexcept;
    /// Right-hand side contributed by nonzero Dirichlet data (Schrodinger only).
    const std::vector<double>& boundary_rhs() const noexcept;

    std::vector<double> apply(const std::vector<double>& x) const;
    /// Solves A x = b. The direct factorization is computed once and reused.
    std::vector<double> solve(const std::vector<double>& b, const SolverOptions& opts = {}) const;
    bool is_symmetric(double tol = 1e-14) const;

private:
    struct Impl;
    explicit SparseOperator(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

GridFunction solve_darcy(const DarcyProblem& prob, const GridFunction& f, const SolverOptions& opts = {});
GridFunction solve_schrodinger(const SchrodingerProblem& prob, const GridFunction& f, const SolverOptions& opts = {});

/// Multilinear interpolation stencil: up to 2^d (node, weight) pairs.
struct Stencil {
    std::array<std::size_t, 4> nodes{};
    std::array<double, 4> weights{};
    int count = 0;
};

Stencil interpolation_stencil(const Grid& grid, const Point& x);
double point_eval(const GridFunction& u, const Point& x);

struct MisfitEvaluation {
    double value;           ///< J_data = (1/(2 sigma^2 N)) sum (u(X_i) - Y_i)^2
    GridFunction gradient;  ///< L2 (trapezoid) representer of dJ_data/df
    GridFunction state;     ///< forward solution u_f
};

MisfitEvaluation evaluate_misfit(const DarcyProblem& prob, const GridFunction& f, const Dataset& data,
                                 const SolverOptions& opts = {});
MisfitEvaluation evaluate_misfit(const SchrodingerProblem& prob, const GridFunction& f, const Dataset& data,
                                 const SolverOptions& opts = {});

GridFunction misfit_gradient(const DarcyProblem& prob, const GridFunction& f, const Dataset& data,
                             const SolverOptions& opts = {});
GridFunction misfit_gradient(const SchrodingerProblem& prob, const GridFunction& f, const Dataset& data,
                             const SolverOptions& opts = {});

/// Data misfit of a given state u against the dataset.
double misfit_value(const GridFunction& u, const Dataset& data);

}  // namespace pdemap
