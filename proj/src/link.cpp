#include "pdemap/link.hpp"

#include <cmath>

#include <fmt/format.h>

#include "pdemap/error.hpp"

namespace pdemap {

namespace {

double logistic(double t) noexcept {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Inverse of softplus on (0, inf): log(e^s - 1).
double softplus_inverse(double s) noexcept {
    if (s > 30.0) return s + std::log1p(-std::exp(-s));
    return std::log(std::expm1(s));
}

}  // namespace

double softplus(double t) noexcept {
    // log(1 + e^t) = max(t, 0) + log1p(e^{-|t|})
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

LinkFunction::LinkFunction(double f_min, double shift) : f_min_(f_min), shift_(shift) {
    if (!(f_min > 0.0 && f_min < 1.0)) {
        throw InvalidArgument(fmt::format("link: f_min must lie in (0, 1), got {}", f_min));
    }
    if (!(shift > 0.0) || !std::isfinite(shift)) {
        throw InvalidArgument(fmt::format("link: shift b must be positive, got {}", shift));
    }
    scale_ = (1.0 - f_min) / softplus(shift);
}

double LinkFunction::operator()(double x) const noexcept {
    if (x == 0.0) return 1.0;
    return f_min_ + scale_ * softplus(x + shift_);
}

double LinkFunction::derivative(double x) const noexcept { return scale_ * logistic(x + shift_); }

double LinkFunction::inverse(double f) const {
    if (!(f > f_min_)) {
        throw InvalidArgument(fmt::format("link inverse: value {} is not above f_min = {}", f, f_min_));
    }
    if (f == 1.0) return 0.0;
    return softplus_inverse((f - f_min_) / scale_) - shift_;
}

double LinkFunction::derivative_bound() const noexcept { return scale_; }

GridFunction link_apply(const LinkFunction& link, const GridFunction& theta) {
    GridFunction out(theta.grid());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = link(theta[i]);
    return out;
}

GridFunction link_inverse(const LinkFunction& link, const GridFunction& f) {
    GridFunction out(f.grid());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = link.inverse(f[i]);
    return out;
}

GridFunction link_deriv(const LinkFunction& link, const GridFunction& theta) {
    GridFunction out(theta.grid());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = link.derivative(theta[i]);
    return out;
}

}  // namespace pdemap
