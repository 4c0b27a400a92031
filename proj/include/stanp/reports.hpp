#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stanp/evaluate.hpp"
#include "stanp/metrics.hpp"

namespace stanp {

// key=value pairs echoed as comment lines (CSV) or a config object (JSON)
// at the top of every artifact, so outputs are traceable to their run.
struct ConfigEcho {
    std::vector<std::pair<std::string, std::string>> items;
};

struct MethodSeedReports {
    std::string method;
    std::vector<MetricsReport> seeds;
};

struct MethodStrata {
    std::string method;
    std::map<Stratum, PooledR2> by_stratum;
};

// Pools prediction records (already concatenated across seeds) by the tile's
// stratum and computes the pooled R² per stratum in normalized log space.
std::map<Stratum, PooledR2> pooled_strata_r2(const std::vector<PredictionRecord>& records,
                                             const std::map<int, DisturbanceRecord>& strata);

// Shortest round-trip decimal for doubles, shared by all artifact writers.
std::string format_double(double v);

// Summary table: rows are the accuracy block then the calibration block,
// columns are methods, cells "mean ± std" across seeds.
void write_summary_csv(const std::string& path, const ConfigEcho& echo,
                       const std::vector<MethodSeedReports>& methods);
void write_summary_json(const std::string& path, const ConfigEcho& echo,
                        const std::vector<MethodSeedReports>& methods);

// Strata table: rows Stable/Moderate/Disturbed, columns methods, cells the
// pooled R² (or n/a when a stratum is empty or degenerate).
void write_strata_csv(const std::string& path, const ConfigEcho& echo,
                      const std::vector<MethodStrata>& methods);
void write_strata_json(const std::string& path, const ConfigEcho& echo,
                       const std::vector<MethodStrata>& methods);

struct GridCell {
    int year = 0;
    std::size_t tile_row = 0;
    std::size_t tile_col = 0;
    double mu = 0.0;
    double sigma = 0.0;
};

void write_grid_csv(const std::string& path, const ConfigEcho& echo, const std::vector<GridCell>& cells);

}  // namespace stanp
