#pragma once

// Feynman-Kac Monte Carlo point values, used to cross-check the grid solvers.
//
// Paths are simulated with Euler-Maruyama and absorbed at the first boundary
// crossing, located by linear interpolation along the last step. Each path
// draws from its own counter-based stream, so results depend only on the seed.

#include <cstdint>

#include "pdemap/fnspace.hpp"

namespace pdemap {

struct McConfig {
    int n_paths = 100000;
    double dt = 1e-5;  ///< dt <= h^2 is recommended but not enforced
    std::uint64_t seed = 0;
    long max_steps = 1000000;  ///< per-path cap; max_steps * dt >= 10 is required

    void validate() const;
};

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;  ///< sample std over exited paths / sqrt(n_exited)
    long n_exited = 0;
    long n_censored = 0;
};

/// u(x) = E^x[g(X_tau) exp(-int_0^tau f(X_s) ds)] for Brownian motion with generator lap/2.
McEstimate fk_schrodinger(const GridFunction& f, const GridFunction& g_boundary, const Point& x, const McConfig& cfg);

/// u(x) = -E^x[int_0^tau g(X_s) ds] for dX = grad f dt + sqrt(2f) dW, which solves div(f grad u) = g.
McEstimate fk_darcy(const GridFunction& f, const GridFunction& g, const Point& x, const McConfig& cfg);

}  // namespace pdemap
