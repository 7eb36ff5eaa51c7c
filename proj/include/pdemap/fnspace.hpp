#pragma once

// Function spaces on the unit interval / unit square: uniform grids, nodal
// grid functions, and parameters expanded in the Dirichlet sine eigenbasis
// phi_k(x) = sqrt(2) sin(k pi x) with eigenvalues lambda_k = (k pi)^2.

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace pdemap {

using Point = std::array<double, 2>;

class Grid {
public:
    /// Uniform grid with `n` interior nodes per axis on [0,1]^dim.
    Grid(int dim, int n);

    int dim() const noexcept { return dim_; }
    int n() const noexcept { return n_; }
    double h() const noexcept { return h_; }
    /// Nodes per axis including the two boundary nodes.
    int axis_nodes() const noexcept { return n_ + 2; }
    std::size_t size() const noexcept;
    std::size_t index(int i, int j = 0) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_ + 2) + static_cast<std::size_t>(i);
    }
    double coord(int i) const noexcept { return i * h_; }
    Point node(std::size_t flat) const noexcept;
    bool on_boundary(std::size_t flat) const noexcept;
    /// Trapezoid quadrature weight of a node.
    double weight(std::size_t flat) const noexcept;

    friend bool operator==(const Grid& a, const Grid& b) noexcept { return a.dim_ == b.dim_ && a.n_ == b.n_; }

private:
    int dim_;
    int n_;
    double h_;
};

Grid build_grid(int dim, int n);

class GridFunction {
public:
    explicit GridFunction(Grid grid, double fill = 0.0);
    GridFunction(Grid grid, std::vector<double> values);

    /// Samples `fn` at every node, boundary included.
    static GridFunction sample(const Grid& grid, const std::function<double(const Point&)>& fn);

    const Grid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    double& operator[](std::size_t i) noexcept { return values_[i]; }
    std::size_t size() const noexcept { return values_.size(); }

    /// True when every boundary value is within `tol` of zero.
    bool has_zero_trace(double tol = 1e-12) const noexcept;
    double max() const noexcept;
    double min() const noexcept;

    GridFunction& operator+=(const GridFunction& other);
    GridFunction& operator-=(const GridFunction& other);
    GridFunction& operator*=(double s) noexcept;

private:
    Grid grid_;
    std::vector<double> values_;
};

GridFunction operator+(GridFunction a, const GridFunction& b);
GridFunction operator-(GridFunction a, const GridFunction& b);
GridFunction operator*(double s, GridFunction a);

/// Parameter expanded in the first K sine modes per axis. In 2D the
/// coefficient of phi_j(x) phi_k(y) lives at index (j-1)*K + (k-1).
class SpectralField {
public:
    SpectralField(Grid grid, int modes);
    SpectralField(Grid grid, int modes, std::vector<double> coeffs);

    const Grid& grid() const noexcept { return grid_; }
    int modes() const noexcept { return modes_; }
    std::span<const double> coeffs() const noexcept { return coeffs_; }
    std::span<double> coeffs() noexcept { return coeffs_; }
    std::size_t size() const noexcept { return coeffs_.size(); }

    /// Dirichlet Laplacian eigenvalue of the mode stored at `idx`.
    double eigenvalue(std::size_t idx) const noexcept;

    /// Copy truncated (or zero-padded) to `modes` per axis.
    SpectralField with_modes(int modes) const;

private:
    Grid grid_;
    int modes_;
    std::vector<double> coeffs_;
};

SpectralField operator-(const SpectralField& a, const SpectralField& b);

/// Smoothness index of a Sobolev-type norm; negative orders give the dual weighting.
struct NormOrder {
    double s;
};

SpectralField analyze(const GridFunction& gf, int modes);
GridFunction synthesize(const SpectralField& sf);

double sobolev_norm(const SpectralField& sf, NormOrder order);
double l2_distance(const GridFunction& a, const GridFunction& b);
double sup_distance(const GridFunction& a, const GridFunction& b);
/// Trapezoid L2 inner product.
double l2_inner(const GridFunction& a, const GridFunction& b);
/// Weighted coefficient inner product, the L2 pairing of two spectral fields.
double l2_inner(const SpectralField& a, const SpectralField& b);

// Serialization: GridFunction as CSV rows (x[,y],value); SpectralField as JSON.
void write_csv(std::ostream& os, const GridFunction& gf);
nlohmann::json to_json(const SpectralField& sf);
SpectralField spectral_from_json(const nlohmann::json& j);

}  // namespace pdemap
