#pragma once

#include <vector>

#include "stanp/coords.hpp"
#include "stanp/errors.hpp"
#include "stanp/footprint.hpp"
#include "stanp/tensor.hpp"

namespace stanp {

// Single feature encoding shared by the baselines and any flat-input
// consumer: 5 normalized coordinates then the 9·D patch values.
inline std::vector<double> flat_feature(const SpatioTemporalCoord& coord, const Tensor& patch) {
    if (patch.rank() != 3 || patch.dim(0) != 3 || patch.dim(1) != 3) {
        throw ContractViolation("flat feature needs a (3,3,D) patch, got " + patch.shape_str());
    }
    std::vector<double> out;
    out.reserve(5 + patch.size());
    out.push_back(coord.lon_norm);
    out.push_back(coord.lat_norm);
    out.push_back(coord.doy_sin);
    out.push_back(coord.doy_cos);
    out.push_back(coord.tau);
    out.insert(out.end(), patch.values().begin(), patch.values().end());
    return out;
}

inline std::vector<double> flat_feature(const Footprint& fp) { return flat_feature(fp.coord, fp.patch); }

struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major

    const double* row(std::size_t i) const { return data.data() + i * cols; }
};

inline FeatureMatrix feature_matrix(const std::vector<const Footprint*>& footprints) {
    FeatureMatrix m;
    if (footprints.empty()) return m;
    m.rows = footprints.size();
    std::vector<double> first = flat_feature(*footprints.front());
    m.cols = first.size();
    m.data.reserve(m.rows * m.cols);
    m.data.insert(m.data.end(), first.begin(), first.end());
    for (std::size_t i = 1; i < footprints.size(); ++i) {
        std::vector<double> f = flat_feature(*footprints[i]);
        if (f.size() != m.cols) throw ContractViolation("inconsistent feature widths across footprints");
        m.data.insert(m.data.end(), f.begin(), f.end());
    }
    return m;
}

}  // namespace stanp
