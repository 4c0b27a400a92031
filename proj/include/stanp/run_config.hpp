#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stanp/gbq.hpp"
#include "stanp/model.hpp"
#include "stanp/qrf.hpp"
#include "stanp/reports.hpp"
#include "stanp/trainer.hpp"
#include "stanp/world.hpp"

namespace stanp {

struct ConfigEntry {
    std::string key;  // section-qualified, "world.seed"
    std::string value;
};

// Flat key=value text with [section] headers; '#' and ';' start comments.
// Duplicate keys are kept in file order (repeatable keys read them all).
struct ParsedConfig {
    std::vector<ConfigEntry> entries;
    const std::string* find(const std::string& key) const;       // last occurrence, null if absent
    std::vector<std::string> all(const std::string& key) const;  // every occurrence
};

ParsedConfig parse_config_text(const std::string& text);  // throws ConfigError
ParsedConfig parse_config_file(const std::string& path);  // throws ConfigError, also when unreadable

// One experiment description: world, model, training, baselines, protocol.
struct RunConfig {
    WorldConfig world;
    model::ModelConfig model;
    TrainingConfig train;
    QrfConfig qrf;
    GbqConfig gbq;
    std::size_t seeds = 10;  // number of per-experiment partition seeds
    std::uint64_t partition_seed_base = 1;
    std::size_t buffer_radius = 1;
    int holdout_year = 0;  // 0 → middle year of the world span
    std::vector<std::string> methods{"anp", "qrf", "gbq"};

    int effective_holdout_year() const;
    void validate() const;  // throws ConfigError
};

// Rejects unknown keys so config typos fail loudly instead of running with
// silent defaults.
RunConfig run_config_from(const ParsedConfig& parsed);
RunConfig load_run_config(const std::string& path);

// Effective values after overrides, in a stable order; written into every
// output artifact.
ConfigEcho config_echo(const RunConfig& config);

}  // namespace stanp
