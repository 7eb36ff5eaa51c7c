#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "pdemap/fnspace.hpp"

namespace pdemap {

/// Random-design regression sample: responses Y_i observed at design points X_i.
struct Dataset {
    int dim = 1;
    std::vector<Point> points;
    std::vector<double> responses;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }

    /// Noise scale used in the log-likelihood. Noiseless data (sigma == 0) is
    /// scored with unit scale.
    double likelihood_sigma() const noexcept { return sigma > 0.0 ? sigma : 1.0; }
};

void write_csv(std::ostream& os, const Dataset& ds);
Dataset read_dataset_csv(std::istream& is, int dim, double sigma);

}  // namespace pdemap
