#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stanp/coords.hpp"
#include "stanp/footprint.hpp"

namespace stanp {

// One dataset row. lon/lat and day_of_year are raw values; normalization
// happens when records are lifted into footprints against a frame.
struct DatasetRecord {
    long footprint_id = 0;
    int tile_id = 0;
    int year = 0;
    double day_of_year = 0.0;
    double lon = 0.0;
    double lat = 0.0;
    double y_norm = 0.0;
    std::vector<double> patch;  // 9·D values, (row, col, channel) order
};

struct Dataset {
    std::size_t embed_dim = 0;
    std::vector<DatasetRecord> records;
};

// Text format: header line "version,D", then one comma-separated record per
// line with columns footprint_id, tile_id, year, day_of_year, lon, lat,
// y_norm, 9·D patch values. Doubles use shortest round-trip formatting, so
// write → read is bit-exact.
constexpr int kDatasetVersion = 1;

void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

// Region box and study period used to normalize coordinates.
struct NormalizationFrame {
    Region region;
    StudyPeriod period;
};

// Frame derived from the data itself: min/max lon/lat box and Jan 1 of the
// earliest year through Dec 31 of the latest. Fallback for datasets whose
// generating configuration is unavailable.
NormalizationFrame frame_from_records(const Dataset& dataset);

std::vector<Footprint> to_footprints(const Dataset& dataset, const NormalizationFrame& frame);

}  // namespace stanp
