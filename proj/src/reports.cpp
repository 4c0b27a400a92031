#include "stanp/reports.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

using nlohmann::json;

struct MetricColumn {
    const char* label;
    double (*get)(const MetricsReport&);
    bool maybe_undefined;
};

// Table rows: accuracy block first, then the calibration block.
constexpr MetricColumn kMetricRows[] = {
    {"Log R2", [](const MetricsReport& r) { return r.log_r2; }, true},
    {"Log RMSE", [](const MetricsReport& r) { return r.log_rmse; }, false},
    {"Linear RMSE (Mg/ha)", [](const MetricsReport& r) { return r.linear_rmse_mgha; }, false},
    {"Linear MAE (Mg/ha)", [](const MetricsReport& r) { return r.linear_mae_mgha; }, false},
    {"1-sigma Coverage", [](const MetricsReport& r) { return r.cov1; }, false},
    {"2-sigma Coverage", [](const MetricsReport& r) { return r.cov2; }, false},
    {"Z-Score Mean", [](const MetricsReport& r) { return r.z_mean; }, false},
    {"Z-Score Std", [](const MetricsReport& r) { return r.z_std; }, false},
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
    std::size_t n = 0;
};

// population std across seeds; undefined entries (NaN R²) are dropped
MeanStd aggregate(const std::vector<MetricsReport>& seeds, const MetricColumn& col) {
    MeanStd out;
    std::vector<double> values;
    for (const MetricsReport& r : seeds) {
        const double v = col.get(r);
        if (col.maybe_undefined && !std::isfinite(v)) continue;
        values.push_back(v);
    }
    out.n = values.size();
    if (values.empty()) return out;
    for (double v : values) out.mean += v;
    out.mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size()));
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw ConfigError("cannot open " + path + " for writing");
    return out;
}

void write_echo(std::ofstream& out, const ConfigEcho& echo) {
    for (const auto& [key, value] : echo.items) {
        out << "# " << key << "=" << value << "\n";
    }
}

json echo_json(const ConfigEcho& echo) {
    json j = json::object();
    for (const auto& [key, value] : echo.items) j[key] = value;
    return j;
}

constexpr Stratum kStrataOrder[] = {Stratum::Stable, Stratum::Moderate, Stratum::Disturbed};

}  // namespace

std::map<Stratum, PooledR2> pooled_strata_r2(const std::vector<PredictionRecord>& records,
                                             const std::map<int, DisturbanceRecord>& strata) {
    std::map<Stratum, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (const PredictionRecord& rec : records) {
        const auto it = strata.find(rec.tile_id);
        if (it == strata.end() || !it->second.available) continue;
        auto& [ys, mus] = groups[it->second.stratum];
        ys.push_back(rec.y_norm);
        mus.push_back(rec.mu);
    }
    std::map<Stratum, PooledR2> out;
    for (Stratum s : kStrataOrder) {
        const auto it = groups.find(s);
        if (it == groups.end()) {
            out[s] = PooledR2{};  // empty stratum stays flagged undefined
        } else {
            out[s] = pooled_r2(it->second.first, it->second.second);
        }
    }
    return out;
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_summary_csv(const std::string& path, const ConfigEcho& echo,
                       const std::vector<MethodSeedReports>& methods) {
    std::ofstream out = open_out(path);
    write_echo(out, echo);
    out << "Metric";
    for (const MethodSeedReports& m : methods) out << "," << m.method;
    out << "\n";
    for (const MetricColumn& col : kMetricRows) {
        out << col.label;
        for (const MethodSeedReports& m : methods) {
            const MeanStd ms = aggregate(m.seeds, col);
            if (ms.n == 0) {
                out << ",n/a";
            } else {
                out << "," << format_double(ms.mean) << " \xC2\xB1 " << format_double(ms.std);
            }
        }
        out << "\n";
    }
}

void write_summary_json(const std::string& path, const ConfigEcho& echo,
                        const std::vector<MethodSeedReports>& methods) {
    json root;
    root["config"] = echo_json(echo);
    json jm = json::object();
    for (const MethodSeedReports& m : methods) {
        json method;
        for (const MetricColumn& col : kMetricRows) {
            const MeanStd ms = aggregate(m.seeds, col);
            json cell;
            if (ms.n == 0) {
                cell["mean"] = nullptr;
                cell["std"] = nullptr;
            } else {
                cell["mean"] = ms.mean;
                cell["std"] = ms.std;
            }
            json per_seed = json::array();
            for (const MetricsReport& r : m.seeds) {
                const double v = col.get(r);
                if (col.maybe_undefined && !std::isfinite(v)) {
                    per_seed.push_back(nullptr);
                } else {
                    per_seed.push_back(v);
                }
            }
            cell["per_seed"] = per_seed;
            method[col.label] = cell;
        }
        json ns = json::array();
        for (const MetricsReport& r : m.seeds) ns.push_back(r.n);
        method["n_per_seed"] = ns;
        jm[m.method] = method;
    }
    root["methods"] = jm;
    std::ofstream out = open_out(path);
    out << root.dump(2) << "\n";
}

void write_strata_csv(const std::string& path, const ConfigEcho& echo,
                      const std::vector<MethodStrata>& methods) {
    std::ofstream out = open_out(path);
    write_echo(out, echo);
    out << "Stratum";
    for (const MethodStrata& m : methods) out << "," << m.method;
    out << "\n";
    for (Stratum s : kStrataOrder) {
        out << stratum_name(s);
        for (const MethodStrata& m : methods) {
            const auto it = m.by_stratum.find(s);
            if (it == m.by_stratum.end() || !it->second.defined) {
                out << ",n/a";
            } else {
                out << "," << format_double(it->second.value);
            }
        }
        out << "\n";
    }
}

void write_strata_json(const std::string& path, const ConfigEcho& echo,
                       const std::vector<MethodStrata>& methods) {
    json root;
    root["config"] = echo_json(echo);
    json js = json::object();
    for (Stratum s : kStrataOrder) {
        json row = json::object();
        for (const MethodStrata& m : methods) {
            const auto it = m.by_stratum.find(s);
            if (it == m.by_stratum.end() || !it->second.defined) {
                json cell;
                cell["r2"] = nullptr;
                cell["n"] = it == m.by_stratum.end() ? 0 : it->second.n;
                row[m.method] = cell;
            } else {
                json cell;
                cell["r2"] = it->second.value;
                cell["n"] = it->second.n;
                row[m.method] = cell;
            }
        }
        js[stratum_name(s)] = row;
    }
    root["strata"] = js;
    std::ofstream out = open_out(path);
    out << root.dump(2) << "\n";
}

void write_grid_csv(const std::string& path, const ConfigEcho& echo, const std::vector<GridCell>& cells) {
    std::ofstream out = open_out(path);
    write_echo(out, echo);
    out << "year,tile_row,tile_col,mu_norm,sigma_norm\n";
    for (const GridCell& c : cells) {
        out << c.year << "," << c.tile_row << "," << c.tile_col << "," << format_double(c.mu) << ","
            << format_double(c.sigma) << "\n";
    }
}

}  // namespace stanp
