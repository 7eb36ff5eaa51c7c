#include "pdemap/mc_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "pdemap/error.hpp"
#include "pdemap/pde.hpp"
#include "pdemap/rng.hpp"

namespace pdemap {

void McConfig::validate() const {
    if (n_paths < 1) throw InvalidArgument("mc: n_paths must be at least 1");
    if (!(dt > 0.0)) throw InvalidArgument("mc: dt must be positive");
    if (max_steps < 1 || static_cast<double>(max_steps) * dt < 10.0) {
        throw InvalidArgument(fmt::format("mc: horizon max_steps*dt = {} is below 10", static_cast<double>(max_steps) * dt));
    }
}

namespace {

// Cell location of a point, shared by every field interpolated at that point.
template <int D>
struct Cell {
    std::size_t base;
    double w[D];
};

template <int D>
struct Layout {
    int m;  // nodes per axis
    double inv_h;

    Cell<D> locate(const double* x) const noexcept {
        Cell<D> c{};
        std::size_t stride = 1;
        for (int a = 0; a < D; ++a) {
            const double s = x[a] * inv_h;
            const int i = std::min(static_cast<int>(s), m - 2);
            c.w[a] = s - i;
            c.base += static_cast<std::size_t>(i) * stride;
            stride *= static_cast<std::size_t>(m);
        }
        return c;
    }

    double eval(const double* v, const Cell<D>& c) const noexcept {
        if constexpr (D == 1) {
            return v[c.base] + (v[c.base + 1] - v[c.base]) * c.w[0];
        } else {
            const double* r0 = v + c.base;
            const double* r1 = r0 + m;
            const double lo = r0[0] + (r0[1] - r0[0]) * c.w[0];
            const double hi = r1[0] + (r1[1] - r1[0]) * c.w[0];
            return lo + (hi - lo) * c.w[1];
        }
    }
};

struct Welford {
    long n = 0;
    double mean = 0.0, m2 = 0.0;

    void add(double v) noexcept {
        ++n;
        const double d = v - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (v - mean);
    }
};

McEstimate summarize(const Welford& w, const McConfig& cfg, const char* name) {
    McEstimate est;
    est.n_exited = w.n;
    est.n_censored = cfg.n_paths - w.n;
    if (w.n == 0) {
        throw NumericalError(fmt::format("{}: every path was censored", name),
                             fmt::format("n_paths={} max_steps={} dt={}", cfg.n_paths, cfg.max_steps, cfg.dt));
    }
    est.mean = w.mean;
    est.std_error = w.n > 1 ? std::sqrt(w.m2 / static_cast<double>(w.n - 1) / static_cast<double>(w.n)) : 0.0;
    return est;
}

void check_point(const Grid& grid, const Point& x, const char* name) {
    for (int a = 0; a < grid.dim(); ++a) {
        if (!(x[a] > 0.0 && x[a] < 1.0)) throw InvalidArgument(fmt::format("{}: start point must be interior", name));
    }
}

// Runs one path; Step(x, cell, z, xnew) proposes a move and returns the running
// integrand. Returns false if censored, otherwise the integral and exit point.
template <int D, typename Step>
bool run_path(const Layout<D>& lay, const Point& start, const McConfig& cfg, Stream& rng, Step step,
              double& integral, Point& exit) {
    // Normals are drawn in blocks of 256 per axis.
    constexpr int kBlock = 256 * D;
    double buf[kBlock];
    int pos = kBlock;
    double x[D], xn[D];
    for (int a = 0; a < D; ++a) x[a] = start[a];
    const double dt = cfg.dt;
    const long max_steps = cfg.max_steps;
    double acc = 0.0;
    for (long k = 0; k < max_steps; ++k) {
        if (pos == kBlock) {
            for (double& v : buf) v = rng.normal();
            pos = 0;
        }
        const double* z = buf + pos;
        pos += D;
        const Cell<D> cell = lay.locate(x);
        const double rate = step(x, cell, z, xn);
        bool inside = true;
        for (int a = 0; a < D; ++a) inside &= std::abs(xn[a] - 0.5) < 0.5;
        if (!inside) {
            double s = 1.0;
            for (int a = 0; a < D; ++a) {
                if (xn[a] <= 0.0) s = std::min(s, x[a] / (x[a] - xn[a]));
                else if (xn[a] >= 1.0) s = std::min(s, (1.0 - x[a]) / (xn[a] - x[a]));
            }
            acc += s * rate;
            for (int a = 0; a < D; ++a) exit[a] = std::clamp(x[a] + s * (xn[a] - x[a]), 0.0, 1.0);
            integral = acc * dt;
            return true;
        }
        acc += rate;
        for (int a = 0; a < D; ++a) x[a] = xn[a];
    }
    return false;
}

Stream path_stream(const McConfig& cfg, std::uint64_t base, int path) {
    return Stream(cfg.seed, mix64(base ^ static_cast<std::uint64_t>(path)));
}

template <int D>
McEstimate schrodinger_impl(const GridFunction& f, const GridFunction& g, const Point& x0, const McConfig& cfg) {
    const Grid& grid = f.grid();
    const Layout<D> lay{grid.axis_nodes(), 1.0 / grid.h()};
    const double* fv = f.values().data();
    const double sdt = std::sqrt(cfg.dt);
    const std::uint64_t base = stream_id("fk-schrodinger");
    auto step = [lay, fv, sdt](const double* x, const Cell<D>& c, const double* z, double* xn) {
        for (int a = 0; a < D; ++a) xn[a] = x[a] + sdt * z[a];
        return lay.eval(fv, c);
    };
    Welford w;
    for (int p = 0; p < cfg.n_paths; ++p) {
        Stream rng = path_stream(cfg, base, p);
        double integral = 0.0;
        Point exit{};
        if (run_path<D>(lay, x0, cfg, rng, step, integral, exit)) w.add(point_eval(g, exit) * std::exp(-integral));
    }
    return summarize(w, cfg, "fk_schrodinger");
}

// Nodal centered differences along one axis, one-sided at the boundary.
std::vector<double> nodal_gradient(const GridFunction& f, int axis) {
    const Grid& grid = f.grid();
    const int m = grid.axis_nodes();
    std::vector<double> out(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
        const int i = static_cast<int>(k % m), j = static_cast<int>(k / m);
        const int c = axis == 0 ? i : j;
        const int lo = std::max(c - 1, 0), hi = std::min(c + 1, m - 1);
        const std::size_t klo = axis == 0 ? grid.index(lo, j) : grid.index(i, lo);
        const std::size_t khi = axis == 0 ? grid.index(hi, j) : grid.index(i, hi);
        out[k] = (f[khi] - f[klo]) / ((hi - lo) * grid.h());
    }
    return out;
}

template <int D>
McEstimate darcy_impl(const GridFunction& f, const GridFunction& g, const Point& x0, const McConfig& cfg) {
    const Grid& grid = f.grid();
    const Layout<D> lay{grid.axis_nodes(), 1.0 / grid.h()};
    std::vector<double> grad[D];
    for (int a = 0; a < D; ++a) grad[a] = nodal_gradient(f, a);
    std::vector<double> diffusion(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) diffusion[k] = std::sqrt(2.0 * std::max(f[k], 0.0));
    const double* sv = diffusion.data();
    const double* gv = g.values().data();
    const double* gradv[D];
    for (int a = 0; a < D; ++a) gradv[a] = grad[a].data();
    const double dt = cfg.dt, sdt = std::sqrt(dt);
    const std::uint64_t base = stream_id("fk-darcy");
    auto step = [lay, sv, gv, gradv, dt, sdt](const double* x, const Cell<D>& c, const double* z, double* xn) {
        const double diff = lay.eval(sv, c) * sdt;
        for (int a = 0; a < D; ++a) xn[a] = x[a] + lay.eval(gradv[a], c) * dt + diff * z[a];
        return lay.eval(gv, c);
    };
    Welford w;
    for (int p = 0; p < cfg.n_paths; ++p) {
        Stream rng = path_stream(cfg, base, p);
        double integral = 0.0;
        Point exit{};
        if (run_path<D>(lay, x0, cfg, rng, step, integral, exit)) w.add(-integral);
    }
    return summarize(w, cfg, "fk_darcy");
}

void check_inputs(const GridFunction& f, const GridFunction& g, const Point& x, const McConfig& cfg, const char* name) {
    cfg.validate();
    if (!(f.grid() == g.grid())) throw InvalidArgument(fmt::format("{}: f and g live on different grids", name));
    check_point(f.grid(), x, name);
}

}  // namespace

McEstimate fk_schrodinger(const GridFunction& f, const GridFunction& g_boundary, const Point& x, const McConfig& cfg) {
    check_inputs(f, g_boundary, x, cfg, "fk_schrodinger");
    if (f.min() < 0.0) throw InvalidArgument("fk_schrodinger: potential must be non-negative");
    return f.grid().dim() == 1 ? schrodinger_impl<1>(f, g_boundary, x, cfg) : schrodinger_impl<2>(f, g_boundary, x, cfg);
}

McEstimate fk_darcy(const GridFunction& f, const GridFunction& g, const Point& x, const McConfig& cfg) {
    check_inputs(f, g, x, cfg, "fk_darcy");
    if (!(f.min() > 0.0)) throw InvalidArgument("fk_darcy: conductivity must be positive");
    return f.grid().dim() == 1 ? darcy_impl<1>(f, g, x, cfg) : darcy_impl<2>(f, g, x, cfg);
}

}  // namespace pdemap
