#include "pdemap/dataset.hpp"

#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "pdemap/error.hpp"

namespace pdemap {

void write_csv(std::ostream& os, const Dataset& ds) {
    os << (ds.dim == 1 ? "x,response\n" : "x,y,response\n");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.dim == 1) {
            os << fmt::format("{:.17g},{:.17g}\n", ds.points[i][0], ds.responses[i]);
        } else {
            os << fmt::format("{:.17g},{:.17g},{:.17g}\n", ds.points[i][0], ds.points[i][1], ds.responses[i]);
        }
    }
}

Dataset read_dataset_csv(std::istream& is, int dim, double sigma) {
    Dataset ds;
    ds.dim = dim;
    ds.sigma = sigma;
    std::string line;
    if (!std::getline(is, line)) throw InvalidArgument("dataset csv: missing header");
    const std::string expected = dim == 1 ? "x,response" : "x,y,response";
    if (line != expected) {
        throw InvalidArgument(fmt::format("dataset csv: header '{}' does not match '{}'", line, expected));
    }
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(row, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InvalidArgument(fmt::format("dataset csv line {}: cannot parse '{}'", lineno, cell));
            }
        }
        if (vals.size() != static_cast<std::size_t>(dim + 1)) {
            throw InvalidArgument(fmt::format("dataset csv line {}: expected {} columns", lineno, dim + 1));
        }
        Point p{vals[0], dim == 2 ? vals[1] : 0.0};
        for (int a = 0; a < dim; ++a) {
            if (!(p[a] > 0.0 && p[a] < 1.0)) {
                throw InvalidArgument(fmt::format("dataset csv line {}: design point not strictly interior", lineno));
            }
        }
        ds.points.push_back(p);
        ds.responses.push_back(vals.back());
    }
    return ds;
}

}  // namespace pdemap
