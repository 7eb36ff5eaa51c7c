#include "pdemap/pde.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <fmt/format.h>

#include "pdemap/error.hpp"

namespace pdemap {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

std::size_t interior_unknowns(const Grid& grid) {
    const auto n = static_cast<std::size_t>(grid.n());
    return grid.dim() == 1 ? n : n * n;
}

// Maps a flat node index to its unknown, or -1 for boundary nodes.
long unknown_of(const Grid& grid, std::size_t flat) {
    if (grid.on_boundary(flat)) return -1;
    const auto m = static_cast<std::size_t>(grid.axis_nodes());
    if (grid.dim() == 1) return static_cast<long>(flat) - 1;
    const auto i = flat % m;
    const auto j = flat / m;
    return static_cast<long>((j - 1) * static_cast<std::size_t>(grid.n()) + (i - 1));
}

std::size_t node_of(const Grid& grid, std::size_t unknown) {
    const auto n = static_cast<std::size_t>(grid.n());
    if (grid.dim() == 1) return unknown + 1;
    return grid.index(static_cast<int>(unknown % n + 1), static_cast<int>(unknown / n + 1));
}

// Calls visit(a, b) for every grid edge that touches at least one interior node.
template <typename Visit>
void for_each_edge(const Grid& grid, Visit&& visit) {
    const int n = grid.n();
    if (grid.dim() == 1) {
        for (int i = 0; i <= n; ++i) visit(grid.index(i), grid.index(i + 1));
        return;
    }
    for (int j = 1; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) visit(grid.index(i, j), grid.index(i + 1, j));
    }
    for (int i = 1; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) visit(grid.index(i, j), grid.index(i, j + 1));
    }
}

void check_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (!(a == b)) throw InvalidArgument(fmt::format("{}: grid mismatch", what));
}

GridFunction embed(const Grid& grid, const std::vector<double>& interior, const GridFunction* boundary) {
    GridFunction out = boundary ? *boundary : GridFunction(grid);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (boundary && !grid.on_boundary(i)) out[i] = 0.0;
    }
    for (std::size_t k = 0; k < interior.size(); ++k) out[node_of(grid, k)] = interior[k];
    return out;
}

}  // namespace

const char* to_string(PdeKind kind) noexcept { return kind == PdeKind::Darcy ? "darcy" : "schrodinger"; }

PdeKind pde_kind_from_string(const std::string& name) {
    if (name == "darcy") return PdeKind::Darcy;
    if (name == "schrodinger") return PdeKind::Schrodinger;
    throw InvalidArgument(fmt::format("unknown PDE kind '{}' (expected darcy or schrodinger)", name));
}

struct SparseOperator::Impl {
    Grid grid;
    SpMat matrix;
    std::vector<double> boundary_rhs;
    mutable std::once_flag factor_once;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<SpMat>> factor;

    Impl(const Grid& g) : grid(g) {}
};

SparseOperator::SparseOperator(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
SparseOperator::~SparseOperator() = default;
SparseOperator::SparseOperator(SparseOperator&&) noexcept = default;
SparseOperator& SparseOperator::operator=(SparseOperator&&) noexcept = default;

const Grid& SparseOperator::grid() const noexcept { return impl_->grid; }
std::size_t SparseOperator::unknowns() const noexcept { return static_cast<std::size_t>(impl_->matrix.rows()); }
const std::vector<double>& SparseOperator::boundary_rhs() const noexcept { return impl_->boundary_rhs; }

SparseOperator SparseOperator::darcy(const DarcyProblem& prob, const GridFunction& f) {
    const Grid& grid = prob.grid;
    check_same_grid(grid, f.grid(), "darcy operator");
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!(f[i] >= prob.f_min)) {
            throw InvalidArgument(fmt::format("darcy: coefficient {} at node {} is below f_min = {}", f[i], i, prob.f_min));
        }
    }
    auto impl = std::make_unique<Impl>(grid);
    const auto size = interior_unknowns(grid);
    const double inv_h2 = 1.0 / (grid.h() * grid.h());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(size * (2 * grid.dim() + 1) * 2);
    for_each_edge(grid, [&](std::size_t a, std::size_t b) {
        const double fe = 0.5 * (f[a] + f[b]) * inv_h2;
        const long ua = unknown_of(grid, a);
        const long ub = unknown_of(grid, b);
        if (ua >= 0) trips.emplace_back(ua, ua, fe);
        if (ub >= 0) trips.emplace_back(ub, ub, fe);
        if (ua >= 0 && ub >= 0) {
            trips.emplace_back(ua, ub, -fe);
            trips.emplace_back(ub, ua, -fe);
        }
    });
    impl->matrix.resize(static_cast<long>(size), static_cast<long>(size));
    impl->matrix.setFromTriplets(trips.begin(), trips.end());
    impl->boundary_rhs.assign(size, 0.0);
    return SparseOperator(std::move(impl));
}

SparseOperator SparseOperator::schrodinger(const SchrodingerProblem& prob, const GridFunction& f) {
    const Grid& grid = prob.grid;
    check_same_grid(grid, f.grid(), "schrodinger operator");
    check_same_grid(grid, prob.g_boundary.grid(), "schrodinger boundary data");
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!(f[i] >= 0.0)) {
            throw InvalidArgument(fmt::format("schrodinger: potential {} at node {} is negative", f[i], i));
        }
    }
    auto impl = std::make_unique<Impl>(grid);
    const auto size = interior_unknowns(grid);
    const double half_inv_h2 = 0.5 / (grid.h() * grid.h());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(size * (2 * grid.dim() + 2) * 2);
    impl->boundary_rhs.assign(size, 0.0);
    for (std::size_t k = 0; k < size; ++k) trips.emplace_back(k, k, f[node_of(grid, k)]);
    for_each_edge(grid, [&](std::size_t a, std::size_t b) {
        const long ua = unknown_of(grid, a);
        const long ub = unknown_of(grid, b);
        if (ua >= 0) trips.emplace_back(ua, ua, half_inv_h2);
        if (ub >= 0) trips.emplace_back(ub, ub, half_inv_h2);
        if (ua >= 0 && ub >= 0) {
            trips.emplace_back(ua, ub, -half_inv_h2);
            trips.emplace_back(ub, ua, -half_inv_h2);
        } else if (ua >= 0) {
            impl->boundary_rhs[ua] += half_inv_h2 * prob.g_boundary[b];
        } else if (ub >= 0) {
            impl->boundary_rhs[ub] += half_inv_h2 * prob.g_boundary[a];
        }
    });
    impl->matrix.resize(static_cast<long>(size), static_cast<long>(size));
    impl->matrix.setFromTriplets(trips.begin(), trips.end());
    return SparseOperator(std::move(impl));
}

std::vector<double> SparseOperator::apply(const std::vector<double>& x) const {
    Eigen::Map<const Vec> xv(x.data(), static_cast<long>(x.size()));
    Vec y = impl_->matrix * xv;
    return {y.data(), y.data() + y.size()};
}

bool SparseOperator::is_symmetric(double tol) const {
    const SpMat t = impl_->matrix.transpose();
    const double scale = impl_->matrix.norm();
    return (impl_->matrix - t).norm() <= tol * scale;
}

namespace {

std::vector<double> pcg(const SpMat& a, const std::vector<double>& b, const SolverOptions& opts) {
    const long size = a.rows();
    Eigen::Map<const Vec> bv(b.data(), size);
    const Vec inv_diag = a.diagonal().cwiseInverse();
    Vec x = Vec::Zero(size);
    Vec r = bv;
    const double bnorm = bv.norm();
    if (bnorm == 0.0) return std::vector<double>(static_cast<std::size_t>(size), 0.0);
    Vec z = inv_diag.cwiseProduct(r);
    Vec p = z;
    double rz = r.dot(z);
    const long cap = static_cast<long>(opts.max_iter_factor) * size;
    long it = 0;
    for (; it < cap; ++it) {
        if (r.norm() <= opts.rel_tol * bnorm) break;
        const Vec ap = a * p;
        const double step = rz / p.dot(ap);
        x += step * p;
        r -= step * ap;
        z = inv_diag.cwiseProduct(r);
        const double rz_next = r.dot(z);
        p = z + (rz_next / rz) * p;
        rz = rz_next;
    }
    if (r.norm() > opts.rel_tol * bnorm) {
        throw NumericalError("conjugate gradients did not converge",
                             fmt::format("iterations={} cap={} relative_residual={:.3e} target={:.1e}", it, cap,
                                         r.norm() / bnorm, opts.rel_tol));
    }
    return {x.data(), x.data() + x.size()};
}

}  // namespace

std::vector<double> SparseOperator::solve(const std::vector<double>& b, const SolverOptions& opts) const {
    if (b.size() != unknowns()) {
        throw InvalidArgument(fmt::format("solve: rhs has {} entries, system has {}", b.size(), unknowns()));
    }
    if (opts.backend == LinearBackend::Pcg) return pcg(impl_->matrix, b, opts);

    std::call_once(impl_->factor_once, [this] {
        impl_->factor = std::make_unique<Eigen::SimplicialLDLT<SpMat>>(impl_->matrix);
    });
    if (impl_->factor->info() != Eigen::Success) {
        throw NumericalError("sparse LDL^T factorization failed", "matrix is not positive definite");
    }
    Eigen::Map<const Vec> bv(b.data(), static_cast<long>(b.size()));
    const Vec x = impl_->factor->solve(bv);
    const double bnorm = bv.norm();
    if (bnorm > 0.0) {
        const double rel = (impl_->matrix * x - bv).norm() / bnorm;
        if (!(rel <= 1e-10)) {
            throw NumericalError("direct solve residual too large", fmt::format("relative_residual={:.3e}", rel));
        }
    }
    return {x.data(), x.data() + x.size()};
}

GridFunction solve_darcy(const DarcyProblem& prob, const GridFunction& f, const SolverOptions& opts) {
    check_same_grid(prob.grid, prob.g.grid(), "darcy source");
    const auto op = SparseOperator::darcy(prob, f);
    std::vector<double> rhs(op.unknowns());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -prob.g[node_of(prob.grid, k)];
    return embed(prob.grid, op.solve(rhs, opts), nullptr);
}

GridFunction solve_schrodinger(const SchrodingerProblem& prob, const GridFunction& f, const SolverOptions& opts) {
    const auto op = SparseOperator::schrodinger(prob, f);
    return embed(prob.grid, op.solve(op.boundary_rhs(), opts), &prob.g_boundary);
}

Stencil interpolation_stencil(const Grid& grid, const Point& x) {
    const double h = grid.h();
    const int n = grid.n();
    auto locate = [&](double c, int& cell, double& t) {
        if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument(fmt::format("point coordinate {} outside [0,1]", c));
        const double s = c / h;
        cell = std::min(static_cast<int>(std::floor(s)), n);
        t = s - cell;
    };
    Stencil st;
    int ix = 0;
    double tx = 0.0;
    locate(x[0], ix, tx);
    if (grid.dim() == 1) {
        st.count = 2;
        st.nodes = {grid.index(ix), grid.index(ix + 1), 0, 0};
        st.weights = {1.0 - tx, tx, 0.0, 0.0};
        return st;
    }
    int iy = 0;
    double ty = 0.0;
    locate(x[1], iy, ty);
    st.count = 4;
    st.nodes = {grid.index(ix, iy), grid.index(ix + 1, iy), grid.index(ix, iy + 1), grid.index(ix + 1, iy + 1)};
    st.weights = {(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty};
    return st;
}

double point_eval(const GridFunction& u, const Point& x) {
    const Stencil st = interpolation_stencil(u.grid(), x);
    double v = 0.0;
    for (int k = 0; k < st.count; ++k) v += st.weights[k] * u[st.nodes[k]];
    return v;
}

double misfit_value(const GridFunction& u, const Dataset& data) {
    if (data.empty()) throw InvalidArgument("misfit: dataset is empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = point_eval(u, data.points[i]) - data.responses[i];
        acc += r * r;
    }
    const double s = data.likelihood_sigma();
    return acc / (2.0 * s * s * static_cast<double>(data.size()));
}

namespace {

// Adjoint source P^T r restricted to interior unknowns, with r_i the scaled residuals.
std::vector<double> adjoint_source(const GridFunction& u, const Dataset& data, double& value) {
    if (data.empty()) throw InvalidArgument("misfit: dataset is empty");
    const Grid& grid = u.grid();
    const double s = data.likelihood_sigma();
    const double scale = 1.0 / (s * s * static_cast<double>(data.size()));
    std::vector<double> rhs(interior_unknowns(grid), 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Stencil st = interpolation_stencil(grid, data.points[i]);
        double ui = 0.0;
        for (int k = 0; k < st.count; ++k) ui += st.weights[k] * u[st.nodes[k]];
        const double r = ui - data.responses[i];
        acc += r * r;
        for (int k = 0; k < st.count; ++k) {
            const long uk = unknown_of(grid, st.nodes[k]);
            if (uk >= 0) rhs[uk] += scale * r * st.weights[k];
        }
    }
    value = 0.5 * scale * acc;
    return rhs;
}

void to_l2_representer(GridFunction& grad) {
    const Grid& grid = grad.grid();
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] /= grid.weight(i);
}

}  // namespace

MisfitEvaluation evaluate_misfit(const DarcyProblem& prob, const GridFunction& f, const Dataset& data,
                                 const SolverOptions& opts) {
    const Grid& grid = prob.grid;
    check_same_grid(grid, prob.g.grid(), "darcy source");
    const auto op = SparseOperator::darcy(prob, f);
    std::vector<double> rhs(op.unknowns());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = -prob.g[node_of(grid, k)];
    GridFunction u = embed(grid, op.solve(rhs, opts), nullptr);

    double value = 0.0;
    const auto src = adjoint_source(u, data, value);
    const GridFunction w = embed(grid, op.solve(src, opts), nullptr);

    // dA/df_m couples the two endpoints of every edge through the arithmetic mean.
    GridFunction grad(grid);
    const double half_inv_h2 = 0.5 / (grid.h() * grid.h());
    for_each_edge(grid, [&](std::size_t a, std::size_t b) {
        const double k = -half_inv_h2 * (w[a] - w[b]) * (u[a] - u[b]);
        grad[a] += k;
        grad[b] += k;
    });
    to_l2_representer(grad);
    return {value, std::move(grad), std::move(u)};
}

MisfitEvaluation evaluate_misfit(const SchrodingerProblem& prob, const GridFunction& f, const Dataset& data,
                                 const SolverOptions& opts) {
    const Grid& grid = prob.grid;
    const auto op = SparseOperator::schrodinger(prob, f);
    GridFunction u = embed(grid, op.solve(op.boundary_rhs(), opts), &prob.g_boundary);

    double value = 0.0;
    const auto src = adjoint_source(u, data, value);
    const auto w = op.solve(src, opts);

    GridFunction grad(grid);
    for (std::size_t k = 0; k < w.size(); ++k) {
        const std::size_t node = node_of(grid, k);
        grad[node] = -w[k] * u[node];
    }
    to_l2_representer(grad);
    return {value, std::move(grad), std::move(u)};
}

GridFunction misfit_gradient(const DarcyProblem& prob, const GridFunction& f, const Dataset& data,
                             const SolverOptions& opts) {
    return evaluate_misfit(prob, f, data, opts).gradient;
}

GridFunction misfit_gradient(const SchrodingerProblem& prob, const GridFunction& f, const Dataset& data,
                             const SolverOptions& opts) {
    return evaluate_misfit(prob, f, data, opts).gradient;
}

}  // namespace pdemap
