#pragma once

#include "pdemap/fnspace.hpp"

namespace pdemap {

/// Regular link Psi(x) = f_min + (1 - f_min) softplus(x + b) / softplus(b).
///
/// Strictly increasing bijection from the real line onto (f_min, inf) with
/// Psi(0) = 1 and every derivative bounded; sup Psi' = (1 - f_min) / softplus(b).
class LinkFunction {
public:
    explicit LinkFunction(double f_min = 0.5, double shift = 1.0);

    double f_min() const noexcept { return f_min_; }
    double shift() const noexcept { return shift_; }

    double operator()(double x) const noexcept;
    double derivative(double x) const noexcept;
    /// Inverse on (f_min, inf); throws for values at or below f_min.
    double inverse(double f) const;
    double derivative_bound() const noexcept;

private:
    double f_min_;
    double shift_;
    double scale_;  // (1 - f_min) / softplus(shift)
};

double softplus(double t) noexcept;

GridFunction link_apply(const LinkFunction& link, const GridFunction& theta);
GridFunction link_inverse(const LinkFunction& link, const GridFunction& f);
GridFunction link_deriv(const LinkFunction& link, const GridFunction& theta);

}  // namespace pdemap
