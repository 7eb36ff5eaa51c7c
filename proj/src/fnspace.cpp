#include "pdemap/fnspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pdemap/error.hpp"

namespace pdemap {

namespace {

constexpr double kPi = std::numbers::pi;

// basis[(k-1)*(n+2) + i] = phi_k(i h), boundary entries exactly zero.
std::vector<double> sine_table(const Grid& grid, int modes) {
    const int m = grid.axis_nodes();
    std::vector<double> table(static_cast<std::size_t>(modes) * m, 0.0);
    for (int k = 1; k <= modes; ++k) {
        for (int i = 1; i <= grid.n(); ++i) {
            table[static_cast<std::size_t>(k - 1) * m + i] = std::numbers::sqrt2 * std::sin(k * kPi * grid.coord(i));
        }
    }
    return table;
}

void require_same_grid(const Grid& a, const Grid& b, const char* op) {
    if (!(a == b)) {
        throw InvalidArgument(fmt::format("{}: grid mismatch (dim {} n {} vs dim {} n {})", op, a.dim(), a.n(), b.dim(),
                                          b.n()));
    }
}

}  // namespace

Grid::Grid(int dim, int n) : dim_(dim), n_(n), h_(1.0 / (n + 1)) {
    if (dim != 1 && dim != 2) {
        throw InvalidArgument(fmt::format("grid dimension must be 1 or 2, got {}", dim));
    }
    if (n < 3) {
        throw InvalidArgument(fmt::format("grid needs at least 3 interior nodes per axis, got {}", n));
    }
}

std::size_t Grid::size() const noexcept {
    const auto m = static_cast<std::size_t>(n_ + 2);
    return dim_ == 1 ? m : m * m;
}

Point Grid::node(std::size_t flat) const noexcept {
    const auto m = static_cast<std::size_t>(n_ + 2);
    if (dim_ == 1) {
        return {coord(static_cast<int>(flat)), 0.0};
    }
    return {coord(static_cast<int>(flat % m)), coord(static_cast<int>(flat / m))};
}

bool Grid::on_boundary(std::size_t flat) const noexcept {
    const auto m = static_cast<std::size_t>(n_ + 2);
    auto edge = [&](std::size_t i) { return i == 0 || i == m - 1; };
    if (dim_ == 1) {
        return edge(flat);
    }
    return edge(flat % m) || edge(flat / m);
}

double Grid::weight(std::size_t flat) const noexcept {
    const auto m = static_cast<std::size_t>(n_ + 2);
    auto axis = [&](std::size_t i) { return (i == 0 || i == m - 1) ? 0.5 * h_ : h_; };
    if (dim_ == 1) {
        return axis(flat);
    }
    return axis(flat % m) * axis(flat / m);
}

Grid build_grid(int dim, int n) { return Grid(dim, n); }

GridFunction::GridFunction(Grid grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

GridFunction::GridFunction(Grid grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
        throw InvalidArgument(fmt::format("grid function has {} values, grid has {} nodes", values_.size(), grid_.size()));
    }
}

GridFunction GridFunction::sample(const Grid& grid, const std::function<double(const Point&)>& fn) {
    GridFunction out(grid);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.values_[i] = fn(grid.node(i));
    }
    return out;
}

bool GridFunction::has_zero_trace(double tol) const noexcept {
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (grid_.on_boundary(i) && std::abs(values_[i]) > tol) {
            return false;
        }
    }
    return true;
}

double GridFunction::max() const noexcept { return *std::max_element(values_.begin(), values_.end()); }
double GridFunction::min() const noexcept { return *std::min_element(values_.begin(), values_.end()); }

GridFunction& GridFunction::operator+=(const GridFunction& other) {
    require_same_grid(grid_, other.grid_, "operator+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator-=(const GridFunction& other) {
    require_same_grid(grid_, other.grid_, "operator-=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
    return *this;
}

GridFunction& GridFunction::operator*=(double s) noexcept {
    for (double& v : values_) v *= s;
    return *this;
}

GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
GridFunction operator*(double s, GridFunction a) { return a *= s; }

SpectralField::SpectralField(Grid grid, int modes) : SpectralField(grid, modes, {}) {}

SpectralField::SpectralField(Grid grid, int modes, std::vector<double> coeffs)
    : grid_(grid), modes_(modes), coeffs_(std::move(coeffs)) {
    if (modes < 1 || modes > grid.n()) {
        throw InvalidArgument(fmt::format("mode count {} outside [1, {}]", modes, grid.n()));
    }
    const auto expected = grid.dim() == 1 ? static_cast<std::size_t>(modes) : static_cast<std::size_t>(modes) * modes;
    if (coeffs_.empty()) {
        coeffs_.assign(expected, 0.0);
    } else if (coeffs_.size() != expected) {
        throw InvalidArgument(fmt::format("spectral field expects {} coefficients, got {}", expected, coeffs_.size()));
    }
}

double SpectralField::eigenvalue(std::size_t idx) const noexcept {
    if (grid_.dim() == 1) {
        const double k = static_cast<double>(idx + 1);
        return kPi * kPi * k * k;
    }
    const double j = static_cast<double>(idx / static_cast<std::size_t>(modes_) + 1);
    const double k = static_cast<double>(idx % static_cast<std::size_t>(modes_) + 1);
    return kPi * kPi * (j * j + k * k);
}

SpectralField SpectralField::with_modes(int modes) const {
    SpectralField out(grid_, modes);
    const int keep = std::min(modes, modes_);
    if (grid_.dim() == 1) {
        std::copy_n(coeffs_.begin(), keep, out.coeffs_.begin());
    } else {
        for (int j = 0; j < keep; ++j) {
            for (int k = 0; k < keep; ++k) {
                out.coeffs_[static_cast<std::size_t>(j) * modes + k] = coeffs_[static_cast<std::size_t>(j) * modes_ + k];
            }
        }
    }
    return out;
}

SpectralField operator-(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid(), "spectral difference");
    if (a.modes() != b.modes()) {
        const int m = std::max(a.modes(), b.modes());
        return a.with_modes(m) - b.with_modes(m);
    }
    std::vector<double> c(a.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = a.coeffs()[i] - b.coeffs()[i];
    return SpectralField(a.grid(), a.modes(), std::move(c));
}

SpectralField analyze(const GridFunction& gf, int modes) {
    const Grid& grid = gf.grid();
    if (!gf.has_zero_trace()) {
        throw InvalidArgument("analyze: grid function has nonzero boundary values");
    }
    SpectralField out(grid, modes);
    const auto table = sine_table(grid, modes);
    const int m = grid.axis_nodes();
    const double h = grid.h();
    auto v = gf.values();
    auto c = out.coeffs();
    if (grid.dim() == 1) {
        for (int k = 0; k < modes; ++k) {
            double acc = 0.0;
            for (int i = 1; i <= grid.n(); ++i) acc += v[i] * table[static_cast<std::size_t>(k) * m + i];
            c[k] = h * acc;
        }
        return out;
    }
    // Separable transform: first along x (rows of fixed y), then along y.
    std::vector<double> partial(static_cast<std::size_t>(modes) * m, 0.0);  // [jx][iy]
    for (int iy = 1; iy <= grid.n(); ++iy) {
        for (int jx = 0; jx < modes; ++jx) {
            double acc = 0.0;
            for (int ix = 1; ix <= grid.n(); ++ix) acc += v[grid.index(ix, iy)] * table[static_cast<std::size_t>(jx) * m + ix];
            partial[static_cast<std::size_t>(jx) * m + iy] = h * acc;
        }
    }
    for (int jx = 0; jx < modes; ++jx) {
        for (int ky = 0; ky < modes; ++ky) {
            double acc = 0.0;
            for (int iy = 1; iy <= grid.n(); ++iy) {
                acc += partial[static_cast<std::size_t>(jx) * m + iy] * table[static_cast<std::size_t>(ky) * m + iy];
            }
            c[static_cast<std::size_t>(jx) * modes + ky] = h * acc;
        }
    }
    return out;
}

GridFunction synthesize(const SpectralField& sf) {
    const Grid& grid = sf.grid();
    const int modes = sf.modes();
    const auto table = sine_table(grid, modes);
    const int m = grid.axis_nodes();
    GridFunction out(grid);
    auto v = out.values();
    auto c = sf.coeffs();
    if (grid.dim() == 1) {
        for (int k = 0; k < modes; ++k) {
            if (c[k] == 0.0) continue;
            for (int i = 1; i <= grid.n(); ++i) v[i] += c[k] * table[static_cast<std::size_t>(k) * m + i];
        }
        return out;
    }
    std::vector<double> partial(static_cast<std::size_t>(modes) * m, 0.0);  // [jx][iy] = sum_k c_jk phi_k(y)
    for (int jx = 0; jx < modes; ++jx) {
        for (int ky = 0; ky < modes; ++ky) {
            const double cjk = c[static_cast<std::size_t>(jx) * modes + ky];
            if (cjk == 0.0) continue;
            for (int iy = 1; iy <= grid.n(); ++iy) {
                partial[static_cast<std::size_t>(jx) * m + iy] += cjk * table[static_cast<std::size_t>(ky) * m + iy];
            }
        }
    }
    for (int iy = 1; iy <= grid.n(); ++iy) {
        for (int jx = 0; jx < modes; ++jx) {
            const double p = partial[static_cast<std::size_t>(jx) * m + iy];
            if (p == 0.0) continue;
            for (int ix = 1; ix <= grid.n(); ++ix) v[grid.index(ix, iy)] += p * table[static_cast<std::size_t>(jx) * m + ix];
        }
    }
    return out;
}

double sobolev_norm(const SpectralField& sf, NormOrder order) {
    if (!std::isfinite(order.s)) {
        throw InvalidArgument("sobolev_norm: order must be finite");
    }
    double acc = 0.0;
    auto c = sf.coeffs();
    for (std::size_t i = 0; i < c.size(); ++i) {
        acc += std::pow(1.0 + sf.eigenvalue(i), order.s) * c[i] * c[i];
    }
    return std::sqrt(acc);
}

double l2_inner(const GridFunction& a, const GridFunction& b) {
    require_same_grid(a.grid(), b.grid(), "l2_inner");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.grid().weight(i) * a[i] * b[i];
    return acc;
}

double l2_inner(const SpectralField& a, const SpectralField& b) {
    require_same_grid(a.grid(), b.grid(), "l2_inner");
    if (a.modes() != b.modes()) {
        const int m = std::max(a.modes(), b.modes());
        return l2_inner(a.with_modes(m), b.with_modes(m));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.coeffs()[i] * b.coeffs()[i];
    return acc;
}

double l2_distance(const GridFunction& a, const GridFunction& b) {
    require_same_grid(a.grid(), b.grid(), "l2_distance");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += a.grid().weight(i) * d * d;
    }
    return std::sqrt(acc);
}

double sup_distance(const GridFunction& a, const GridFunction& b) {
    require_same_grid(a.grid(), b.grid(), "sup_distance");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

void write_csv(std::ostream& os, const GridFunction& gf) {
    const Grid& grid = gf.grid();
    os << (grid.dim() == 1 ? "x,value\n" : "x,y,value\n");
    for (std::size_t i = 0; i < gf.size(); ++i) {
        const Point p = grid.node(i);
        if (grid.dim() == 1) {
            os << fmt::format("{:.17g},{:.17g}\n", p[0], gf[i]);
        } else {
            os << fmt::format("{:.17g},{:.17g},{:.17g}\n", p[0], p[1], gf[i]);
        }
    }
}

nlohmann::json to_json(const SpectralField& sf) {
    return {{"dim", sf.grid().dim()},
            {"n", sf.grid().n()},
            {"K", sf.modes()},
            {"coeffs", std::vector<double>(sf.coeffs().begin(), sf.coeffs().end())}};
}

SpectralField spectral_from_json(const nlohmann::json& j) {
    return SpectralField(Grid(j.at("dim").get<int>(), j.at("n").get<int>()), j.at("K").get<int>(),
                         j.at("coeffs").get<std::vector<double>>());
}

}  // namespace pdemap
