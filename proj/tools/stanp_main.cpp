#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stanp/checkpoint.hpp"
#include "stanp/dataset_io.hpp"
#include "stanp/errors.hpp"
#include "stanp/evaluate.hpp"
#include "stanp/flat_feature.hpp"
#include "stanp/gbq.hpp"
#include "stanp/model.hpp"
#include "stanp/parallel.hpp"
#include "stanp/partition.hpp"
#include "stanp/qrf.hpp"
#include "stanp/reports.hpp"
#include "stanp/rng.hpp"
#include "stanp/run_config.hpp"
#include "stanp/trainer.hpp"
#include "stanp/world.hpp"

namespace {

using namespace stanp;

constexpr double kQuantLo = 0.16;
constexpr double kQuantHi = 0.84;

struct CommonArgs {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    std::int64_t seed_override = -1;  // -1 → use config
    std::size_t jobs = 1;
};

std::string out_path(const CommonArgs& args, const std::string& rel) {
    std::filesystem::create_directories(args.out_dir);
    return (std::filesystem::path(args.out_dir) / rel).string();
}

void write_echo_file(const std::string& path, const ConfigEcho& echo) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw FormatError("cannot open " + path + " for writing");
    for (const auto& [key, value] : echo.items) out << "# " << key << "=" << value << "\n";
}

std::vector<Footprint> load_footprints(const RunConfig& cfg, const std::string& path, Dataset* keep = nullptr) {
    Dataset dataset = read_dataset(path);
    if (dataset.embed_dim != cfg.world.embed_dim) {
        throw ConfigError("dataset embedding width " + std::to_string(dataset.embed_dim) +
                          " does not match world.embed_dim " + std::to_string(cfg.world.embed_dim));
    }
    std::vector<Footprint> fps = to_footprints(dataset, cfg.world.frame());
    if (keep) *keep = std::move(dataset);
    return fps;
}

std::uint64_t resolve_partition_seed(const RunConfig& cfg, const CommonArgs& args) {
    return args.seed_override >= 0 ? static_cast<std::uint64_t>(args.seed_override) : cfg.partition_seed_base;
}

struct MaterializedSplit {
    std::vector<Footprint> train;
    TilePartition partition;
};

MaterializedSplit training_split(const RunConfig& cfg, const std::vector<Footprint>& fps, std::uint64_t pseed) {
    MaterializedSplit out;
    out.partition = partition_tiles(cfg.world.tiles_y, cfg.world.tiles_x, pseed, cfg.buffer_radius);
    const HoldoutSplit split = temporal_holdout(fps, out.partition, cfg.effective_holdout_year());
    out.train.reserve(split.train.size());
    for (const Footprint* fp : split.train) out.train.push_back(*fp);
    return out;
}

void push_protocol_headers(ckpt::Container& c, const RunConfig& cfg, std::uint64_t pseed) {
    c.header.emplace_back("partition_seed", static_cast<double>(pseed));
    c.header.emplace_back("holdout_year", static_cast<double>(cfg.effective_holdout_year()));
    c.header.emplace_back("buffer_radius", static_cast<double>(cfg.buffer_radius));
}

int cmd_synth(const CommonArgs& args) {
    RunConfig cfg = load_run_config(args.config_path);
    if (args.seed_override >= 0) cfg.world.seed = static_cast<std::uint64_t>(args.seed_override);
    const SampleResult sample = sample_footprints(cfg.world);
    const std::string data_path = out_path(args, "dataset.txt");
    write_dataset(sample.dataset, data_path);
    write_echo_file(out_path(args, "synth_config.txt"), config_echo(cfg));
    std::cout << "wrote " << sample.dataset.records.size() << " footprints to " << data_path << "\n";
    if (!sample.sparse_tiles.empty()) {
        std::cout << "note: " << sample.sparse_tiles.size() << " tiles have a year with under 4 shots\n";
    }
    return 0;
}

int train_anp(const RunConfig& cfg, const CommonArgs& args, const std::vector<Footprint>& train_set,
              std::uint64_t pseed, std::ofstream& log) {
    TrainingConfig tcfg = cfg.train;
    tcfg.seed = cfg.train.seed + pseed;
    if (args.jobs > 1) tcfg.jobs = args.jobs;
    Rng init_rng = Rng::from_tag(cfg.train.seed, 0xA17C0000ULL + pseed);
    model::ModelParams params = model::ModelParams::init(cfg.model, init_rng);
    const LogSink sink = [&log](const std::string& line) { log << line << "\n"; };
    TrainResult result = train(std::move(params), train_set, tcfg, sink);
    ckpt::Container c = model_to_container(result.params);
    push_protocol_headers(c, cfg, pseed);
    const std::string path = out_path(args, "anp_s" + std::to_string(pseed) + ".ckpt");
    ckpt::write_container(c, path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int train_qrf(const RunConfig& cfg, const CommonArgs& args, const std::vector<Footprint>& train_set,
              std::uint64_t pseed, std::ofstream& log) {
    std::vector<const Footprint*> ptrs;
    ptrs.reserve(train_set.size());
    for (const Footprint& fp : train_set) ptrs.push_back(&fp);
    const FeatureMatrix x = feature_matrix(ptrs);
    std::vector<double> y(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) y[i] = train_set[i].y_norm;
    QrfConfig qcfg = cfg.qrf;
    qcfg.seed = cfg.qrf.seed + pseed;
    qcfg.jobs = args.jobs;
    QuantileForest forest;
    forest.fit(x, std::move(y), qcfg);
    log << "fit " << qcfg.trees << " trees on " << x.rows << " rows, " << x.cols << " features\n";
    ckpt::Container c = qrf_to_container(forest);
    push_protocol_headers(c, cfg, pseed);
    const std::string path = out_path(args, "qrf_s" + std::to_string(pseed) + ".ckpt");
    ckpt::write_container(c, path);
    std::cout << "wrote " << path << "\n";
    return 0;
}

int train_gbq(const RunConfig& cfg, const CommonArgs& args, const std::vector<Footprint>& train_set,
              std::uint64_t pseed, std::ofstream& log) {
    std::vector<const Footprint*> ptrs;
    ptrs.reserve(train_set.size());
    for (const Footprint& fp : train_set) ptrs.push_back(&fp);
    const FeatureMatrix x = feature_matrix(ptrs);
    std::vector<double> y(train_set.size());
    for (std::size_t i = 0; i < train_set.size(); ++i) y[i] = train_set[i].y_norm;
    GbqConfig gcfg = cfg.gbq;
    gcfg.seed = cfg.gbq.seed + pseed;
    for (const double q : {kQuantLo, kQuantHi}) {
        BoostedQuantile booster;
        booster.fit(x, y, q, gcfg);
        log << "q" << std::lround(q * 100.0) << " pinball " << booster.training_pinball().front() << " -> "
            << booster.training_pinball().back() << "\n";
        ckpt::Container c = gbq_to_container(booster);
        push_protocol_headers(c, cfg, pseed);
        const std::string path = out_path(
            args, "gbq_q" + std::to_string(std::lround(q * 100.0)) + "_s" + std::to_string(pseed) + ".ckpt");
        ckpt::write_container(c, path);
        std::cout << "wrote " << path << "\n";
    }
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& method) {
    const RunConfig cfg = load_run_config(args.config_path);
    if (std::find(cfg.methods.begin(), cfg.methods.end(), method) == cfg.methods.end()) {
        throw ConfigError("method '" + method + "' is not listed in run.methods");
    }
    const std::vector<Footprint> fps = load_footprints(cfg, args.data_path);
    const std::uint64_t pseed = resolve_partition_seed(cfg, args);
    const MaterializedSplit split = training_split(cfg, fps, pseed);

    std::ofstream log(out_path(args, "train_" + method + "_s" + std::to_string(pseed) + ".log"), std::ios::binary);
    if (!log.good()) throw FormatError("cannot open training log for writing");
    const ConfigEcho echo = config_echo(cfg);
    for (const auto& [key, value] : echo.items) log << "# " << key << "=" << value << "\n";
    log << "# train.partition_seed=" << pseed << "\n";
    log << "# train.rows=" << split.train.size() << "\n";

    if (method == "anp") return train_anp(cfg, args, split.train, pseed, log);
    if (method == "qrf") return train_qrf(cfg, args, split.train, pseed, log);
    return train_gbq(cfg, args, split.train, pseed, log);
}

struct GbqPair {
    std::optional<BoostedQuantile> lo, mid, hi;
};

struct EvalJob {
    std::string method;
    std::uint64_t pseed = 0;
    std::unique_ptr<Predictor> predictor;
    EvaluationResult result;
};

int cmd_eval(const CommonArgs& args, const std::vector<std::string>& ckpt_paths) {
    const RunConfig cfg = load_run_config(args.config_path);
    const std::vector<Footprint> fps = load_footprints(cfg, args.data_path);
    const int holdout = cfg.effective_holdout_year();

    // keep deserialized models alive for the predictors
    std::vector<std::unique_ptr<model::ModelParams>> anps;
    std::vector<std::unique_ptr<QuantileForest>> forests;
    std::map<std::uint64_t, GbqPair> gbq_pairs;
    std::vector<EvalJob> jobs;

    for (const std::string& path : ckpt_paths) {
        const ckpt::Container c = ckpt::read_container(path);
        const std::uint64_t pseed = static_cast<std::uint64_t>(c.header_value("partition_seed"));
        if (static_cast<int>(c.header_value("holdout_year")) != holdout) {
            throw ConfigError("checkpoint " + path + " was trained against a different holdout year");
        }
        if (c.kind == 1) {
            anps.push_back(std::make_unique<model::ModelParams>(model::model_from_container(c)));
            EvalJob job;
            job.method = "anp";
            job.pseed = pseed;
            job.predictor = std::make_unique<AnpPredictor>(*anps.back(), cfg.model.latent_samples,
                                                           0xE7A1ULL + pseed);
            jobs.push_back(std::move(job));
        } else if (c.kind == 2) {
            forests.push_back(std::make_unique<QuantileForest>(qrf_from_container(c)));
            EvalJob job;
            job.method = "qrf";
            job.pseed = pseed;
            job.predictor = std::make_unique<QrfPredictor>(*forests.back(), cfg.model.sigma_floor);
            jobs.push_back(std::move(job));
        } else if (c.kind == 3) {
            BoostedQuantile booster = gbq_from_container(c);
            GbqPair& pair = gbq_pairs[pseed];
            const double q = booster.quantile_level();
            if (std::abs(q - kQuantLo) < 1e-9) pair.lo = std::move(booster);
            else if (std::abs(q - kQuantHi) < 1e-9) pair.hi = std::move(booster);
            else if (std::abs(q - 0.5) < 1e-9) pair.mid = std::move(booster);
            else throw ConfigError("checkpoint " + path + " holds an unexpected quantile level");
        } else {
            throw FormatError("checkpoint " + path + " has unknown kind " + std::to_string(c.kind));
        }
    }
    for (auto& [pseed, pair] : gbq_pairs) {
        if (!pair.lo || !pair.hi) {
            throw ConfigError("gbq seed " + std::to_string(pseed) + " needs both the q16 and q84 checkpoints");
        }
        EvalJob job;
        job.method = "gbq";
        job.pseed = pseed;
        job.predictor = std::make_unique<GbqPredictor>(*pair.lo, pair.mid ? &*pair.mid : nullptr, *pair.hi,
                                                       cfg.model.sigma_floor);
        jobs.push_back(std::move(job));
    }

    parallel_for(jobs.size(), static_cast<unsigned>(args.jobs), [&](std::size_t i) {
        const TilePartition partition =
            partition_tiles(cfg.world.tiles_y, cfg.world.tiles_x, jobs[i].pseed, cfg.buffer_radius);
        jobs[i].result = evaluate_model(*jobs[i].predictor, fps, partition, holdout);
    });

    const auto strata = stratify_tiles(fps, holdout);
    const ConfigEcho echo = config_echo(cfg);
    std::vector<MethodSeedReports> summary;
    std::vector<MethodStrata> strata_rows;
    for (const std::string& method : cfg.methods) {
        MethodSeedReports reports;
        MethodStrata srow;
        reports.method = srow.method = method;
        std::vector<PredictionRecord> pooled_records;
        for (EvalJob& job : jobs) {
            if (job.method != method) continue;
            reports.seeds.push_back(job.result.report);
            pooled_records.insert(pooled_records.end(), job.result.records.begin(), job.result.records.end());
        }
        if (reports.seeds.empty()) throw ConfigError("no checkpoints provided for method '" + method + "'");
        srow.by_stratum = pooled_strata_r2(pooled_records, strata);
        summary.push_back(std::move(reports));
        strata_rows.push_back(std::move(srow));
    }

    write_summary_csv(out_path(args, "summary.csv"), echo, summary);
    write_summary_json(out_path(args, "summary.json"), echo, summary);
    write_strata_csv(out_path(args, "strata.csv"), echo, strata_rows);
    write_strata_json(out_path(args, "strata.json"), echo, strata_rows);
    for (const MethodSeedReports& m : summary) {
        double r2 = 0.0;
        std::size_t defined = 0;
        for (const MetricsReport& r : m.seeds) {
            if (r.r2_defined) {
                r2 += r.log_r2;
                ++defined;
            }
        }
        std::cout << m.method << ": " << m.seeds.size() << " seeds, mean log R2 "
                  << (defined ? format_double(r2 / static_cast<double>(defined)) : "n/a") << "\n";
    }
    std::cout << "wrote " << out_path(args, "summary.csv") << " and strata/json twins\n";
    return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& ckpt_path, std::vector<int> years,
                std::size_t context_cap) {
    const RunConfig cfg = load_run_config(args.config_path);
    const ckpt::Container c = ckpt::read_container(ckpt_path);
    if (c.kind != 1) throw ConfigError("predict needs a neural-process checkpoint");
    const model::ModelParams params = model::model_from_container(c);
    const std::vector<Footprint> fps = load_footprints(cfg, args.data_path);

    if (years.empty()) years = cfg.world.years;
    for (int y : years) {
        if (std::find(cfg.world.years.begin(), cfg.world.years.end(), y) == cfg.world.years.end()) {
            throw ConfigError("requested year " + std::to_string(y) + " is outside the world span");
        }
    }

    std::map<int, std::vector<const Footprint*>> by_tile;
    for (const Footprint& fp : fps) by_tile[fp.tile_id].push_back(&fp);

    const std::size_t tx = cfg.world.tiles_x, ty = cfg.world.tiles_y;
    const Region& region = cfg.world.region;
    const StudyPeriod period = cfg.world.period();
    std::vector<GridCell> cells;
    cells.reserve(tx * ty * years.size());

    for (std::size_t row = 0; row < ty; ++row) {
        for (std::size_t col = 0; col < tx; ++col) {
            const int tile = static_cast<int>(row * tx + col);
            // nearest context by expanding tile rings when the cell is empty
            std::vector<const Footprint*> context;
            for (std::size_t radius = 0; radius <= std::max(tx, ty); ++radius) {
                context.clear();
                for (const auto& [other, list] : by_tile) {
                    const std::size_t orow = static_cast<std::size_t>(other) / tx;
                    const std::size_t ocol = static_cast<std::size_t>(other) % tx;
                    const std::size_t dr = orow > row ? orow - row : row - orow;
                    const std::size_t dc = ocol > col ? ocol - col : col - ocol;
                    if (std::max(dr, dc) <= radius) context.insert(context.end(), list.begin(), list.end());
                }
                if (!context.empty()) break;
            }
            if (context.empty()) throw EvaluationEmptyError("dataset holds no context footprints at all");
            Rng tile_rng = Rng::from_tag(cfg.world.seed, 0x9D000000ULL + static_cast<std::uint64_t>(tile));
            if (context.size() > context_cap) {
                tile_rng.shuffle(context);
                context.resize(context_cap);
            }

            const double lon = region.lon_min +
                               (static_cast<double>(col) + 0.5) / static_cast<double>(tx) *
                                   (region.lon_max - region.lon_min);
            const double lat = region.lat_min +
                               (static_cast<double>(row) + 0.5) / static_cast<double>(ty) *
                                   (region.lat_max - region.lat_min);
            std::vector<Tensor> patches;
            std::vector<SpatioTemporalCoord> coords;
            patches.reserve(years.size());
            coords.reserve(years.size());
            for (int year : years) {
                const Date stamp{year, 7, 2};
                const double doy = static_cast<double>(day_of_year(stamp));
                const SpatioTemporalCoord coord = make_coord(region, period, lon, lat, doy, stamp);
                patches.push_back(synth_embedding(cfg.world, lon, lat, coord.tau, tile_rng));
                coords.push_back(coord);
            }
            std::vector<model::Query> queries(years.size());
            for (std::size_t i = 0; i < years.size(); ++i) queries[i] = {&patches[i], &coords[i]};
            const auto preds =
                model::predict(params, context, queries, cfg.model.latent_samples, tile_rng);
            for (std::size_t i = 0; i < years.size(); ++i) {
                cells.push_back({years[i], row, col, preds[i].mu, preds[i].sigma});
            }
        }
    }
    std::sort(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
        if (a.year != b.year) return a.year < b.year;
        if (a.tile_row != b.tile_row) return a.tile_row < b.tile_row;
        return a.tile_col < b.tile_col;
    });
    write_grid_csv(out_path(args, "grid.csv"), config_echo(cfg), cells);
    std::cout << "wrote " << cells.size() << " grid cells to " << out_path(args, "grid.csv") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatiotemporal biomass modeling pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string method = "anp";
    std::vector<std::string> ckpt_paths;
    std::string ckpt_path;
    std::vector<int> years;
    std::size_t context_cap = 512;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--config", args.config_path, "run config file")->required();
    synth->add_option("--out", args.out_dir, "output directory")->required();
    synth->add_option("--seed", args.seed_override, "override the world seed");

    CLI::App* train = app.add_subcommand("train", "train one method on the training partition");
    train->add_option("--config", args.config_path, "run config file")->required();
    train->add_option("--data", args.data_path, "dataset file")->required();
    train->add_option("--method", method, "anp, qrf, or gbq")->required();
    train->add_option("--out", args.out_dir, "output directory")->required();
    train->add_option("--seed", args.seed_override, "partition seed for this run");
    train->add_option("--jobs", args.jobs, "worker threads");

    CLI::App* eval = app.add_subcommand("eval", "evaluate checkpoints on the held-out year");
    eval->add_option("--config", args.config_path, "run config file")->required();
    eval->add_option("--data", args.data_path, "dataset file")->required();
    eval->add_option("--out", args.out_dir, "output directory")->required();
    eval->add_option("--jobs", args.jobs, "worker threads");
    eval->add_option("checkpoints", ckpt_paths, "checkpoint files")->required();

    CLI::App* predict = app.add_subcommand("predict", "export a gridded mu/sigma map per year");
    predict->add_option("--config", args.config_path, "run config file")->required();
    predict->add_option("--ckpt", ckpt_path, "neural-process checkpoint")->required();
    predict->add_option("--data", args.data_path, "dataset file providing context")->required();
    predict->add_option("--out", args.out_dir, "output directory")->required();
    predict->add_option("--year", years, "years to export (default: all world years)");
    predict->add_option("--context-cap", context_cap, "max context footprints per tile");

    try {
        app.parse(argc, argv);
        if (synth->parsed()) return cmd_synth(args);
        if (train->parsed()) return cmd_train(args, method);
        if (eval->parsed()) return cmd_eval(args, ckpt_paths);
        return cmd_predict(args, ckpt_path, years, context_cap);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ContractViolation& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
