#include "stanp/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " has non-numeric value '" + raw + "'");
    }
}

long long to_int(const std::string& key, const std::string& raw) {
    const std::string s = trim(raw);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key " + key + " has non-integer value '" + raw + "'");
    }
    return v;
}

std::size_t to_count(const std::string& key, const std::string& raw) {
    const long long v = to_int(key, raw);
    if (v < 0) throw ConfigError("config key " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
}

DisturbanceEvent parse_event(const std::string& raw) {
    const std::vector<std::string> parts = split_list(raw);
    if (parts.size() != 5) {
        throw ConfigError("world.event expects 'lon, lat, radius, time, retained_fraction', got '" + raw + "'");
    }
    DisturbanceEvent ev;
    ev.center_lon = to_double("world.event[0]", parts[0]);
    ev.center_lat = to_double("world.event[1]", parts[1]);
    ev.radius = to_double("world.event[2]", parts[2]);
    ev.event_time = to_double("world.event[3]", parts[3]);
    ev.retained_fraction = to_double("world.event[4]", parts[4]);
    return ev;
}

}  // namespace

const std::string* ParsedConfig::find(const std::string& key) const {
    const std::string* hit = nullptr;
    for (const ConfigEntry& e : entries) {
        if (e.key == key) hit = &e.value;
    }
    return hit;
}

std::vector<std::string> ParsedConfig::all(const std::string& key) const {
    std::vector<std::string> out;
    for (const ConfigEntry& e : entries) {
        if (e.key == key) out.push_back(e.value);
    }
    return out;
}

ParsedConfig parse_config_text(const std::string& text) {
    ParsedConfig out;
    std::stringstream ss(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError("config line " + std::to_string(lineno) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        const std::string qualified = section.empty() ? key : section + "." + key;
        out.entries.push_back({qualified, trim(line.substr(eq + 1))});
    }
    return out;
}

ParsedConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

int RunConfig::effective_holdout_year() const {
    if (holdout_year != 0) return holdout_year;
    if (world.years.empty()) throw ConfigError("world has no years");
    return world.years[world.years.size() / 2];
}

void RunConfig::validate() const {
    world.validate();
    model.validate();
    train.validate();
    if (model.embed_dim != world.embed_dim) {
        throw ConfigError("model embed_dim must match the world embedding width");
    }
    if (seeds == 0) throw ConfigError("run.seeds must be at least 1");
    if (methods.empty()) throw ConfigError("run.methods must name at least one method");
    for (const std::string& m : methods) {
        if (m != "anp" && m != "qrf" && m != "gbq") throw ConfigError("unknown method '" + m + "'");
    }
    const int hold = effective_holdout_year();
    if (std::find(world.years.begin(), world.years.end(), hold) == world.years.end()) {
        throw ConfigError("holdout year " + std::to_string(hold) + " is outside the world span");
    }
}

RunConfig run_config_from(const ParsedConfig& parsed) {
    RunConfig cfg;
    int year_start = cfg.world.years.front();
    int year_end = cfg.world.years.back();
    for (const ConfigEntry& e : parsed.entries) {
        const std::string& k = e.key;
        const std::string& v = e.value;
        if (k == "world.lon_min") cfg.world.region.lon_min = to_double(k, v);
        else if (k == "world.lon_max") cfg.world.region.lon_max = to_double(k, v);
        else if (k == "world.lat_min") cfg.world.region.lat_min = to_double(k, v);
        else if (k == "world.lat_max") cfg.world.region.lat_max = to_double(k, v);
        else if (k == "world.year_start") year_start = static_cast<int>(to_int(k, v));
        else if (k == "world.year_end") year_end = static_cast<int>(to_int(k, v));
        else if (k == "world.tiles_x") cfg.world.tiles_x = to_count(k, v);
        else if (k == "world.tiles_y") cfg.world.tiles_y = to_count(k, v);
        else if (k == "world.footprints_per_tile_per_year") cfg.world.footprints_per_tile_per_year = to_count(k, v);
        else if (k == "world.embed_dim") cfg.world.embed_dim = to_count(k, v);
        else if (k == "world.length_scale") cfg.world.length_scale = to_double(k, v);
        else if (k == "world.field_bumps") cfg.world.field_bumps = to_count(k, v);
        else if (k == "world.noise_sigma_log") cfg.world.noise_sigma_log = to_double(k, v);
        else if (k == "world.embedding_noise") cfg.world.embedding_noise = to_double(k, v);
        else if (k == "world.along_spacing") cfg.world.along_spacing = to_double(k, v);
        else if (k == "world.patch_cell_size") cfg.world.patch_cell_size = to_double(k, v);
        else if (k == "world.seed") cfg.world.seed = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "world.event") cfg.world.events.push_back(parse_event(v));
        else if (k == "model.feature_width") cfg.model.feature_width = to_count(k, v);
        else if (k == "model.repr_width") cfg.model.repr_width = to_count(k, v);
        else if (k == "model.latent_width") cfg.model.latent_width = to_count(k, v);
        else if (k == "model.decoder_hidden") cfg.model.decoder_hidden = to_count(k, v);
        else if (k == "model.conv_channels") cfg.model.conv_channels = to_count(k, v);
        else if (k == "model.heads") cfg.model.heads = to_count(k, v);
        else if (k == "model.sigma_floor") cfg.model.sigma_floor = to_double(k, v);
        else if (k == "model.latent_samples") cfg.model.latent_samples = to_count(k, v);
        else if (k == "train.steps") cfg.train.steps = to_count(k, v);
        else if (k == "train.learning_rate") cfg.train.learning_rate = to_double(k, v);
        else if (k == "train.beta_max") cfg.train.beta_max = to_double(k, v);
        else if (k == "train.anneal_steps") cfg.train.anneal_steps = to_count(k, v);
        else if (k == "train.context_ratio_low") cfg.train.context_ratio_low = to_double(k, v);
        else if (k == "train.context_ratio_high") cfg.train.context_ratio_high = to_double(k, v);
        else if (k == "train.episode_batch") cfg.train.episode_batch = to_count(k, v);
        else if (k == "train.latent_samples_train") cfg.train.latent_samples_train = to_count(k, v);
        else if (k == "train.episode_max_footprints") cfg.train.episode_max_footprints = to_count(k, v);
        else if (k == "train.log_every") cfg.train.log_every = to_count(k, v);
        else if (k == "train.seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "train.jobs") cfg.train.jobs = to_count(k, v);
        else if (k == "qrf.trees") cfg.qrf.trees = to_count(k, v);
        else if (k == "qrf.max_depth") cfg.qrf.tree.max_depth = to_count(k, v);
        else if (k == "qrf.min_leaf") cfg.qrf.tree.min_leaf = to_count(k, v);
        else if (k == "qrf.feature_subsample") cfg.qrf.tree.feature_subsample = to_count(k, v);
        else if (k == "qrf.seed") cfg.qrf.seed = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "gbq.rounds") cfg.gbq.rounds = to_count(k, v);
        else if (k == "gbq.learning_rate") cfg.gbq.learning_rate = to_double(k, v);
        else if (k == "gbq.max_depth") cfg.gbq.tree.max_depth = to_count(k, v);
        else if (k == "gbq.min_leaf") cfg.gbq.tree.min_leaf = to_count(k, v);
        else if (k == "gbq.seed") cfg.gbq.seed = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "run.seeds") cfg.seeds = to_count(k, v);
        else if (k == "run.partition_seed_base") cfg.partition_seed_base = static_cast<std::uint64_t>(to_int(k, v));
        else if (k == "run.buffer_radius") cfg.buffer_radius = to_count(k, v);
        else if (k == "run.holdout_year") cfg.holdout_year = static_cast<int>(to_int(k, v));
        else if (k == "run.methods") {
            cfg.methods = split_list(v);
        } else {
            throw ConfigError("unknown config key '" + k + "'");
        }
    }
    if (year_end < year_start) throw ConfigError("world.year_end precedes world.year_start");
    cfg.world.years.clear();
    for (int y = year_start; y <= year_end; ++y) cfg.world.years.push_back(y);
    cfg.model.embed_dim = cfg.world.embed_dim;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) { return run_config_from(parse_config_file(path)); }

ConfigEcho config_echo(const RunConfig& cfg) {
    ConfigEcho echo;
    auto put = [&echo](const std::string& key, const std::string& value) {
        echo.items.push_back({key, value});
    };
    auto put_d = [&put](const std::string& key, double v) { put(key, format_double(v)); };
    auto put_u = [&put](const std::string& key, std::uint64_t v) { put(key, std::to_string(v)); };

    put_d("world.lon_min", cfg.world.region.lon_min);
    put_d("world.lon_max", cfg.world.region.lon_max);
    put_d("world.lat_min", cfg.world.region.lat_min);
    put_d("world.lat_max", cfg.world.region.lat_max);
    put_u("world.year_start", static_cast<std::uint64_t>(cfg.world.years.front()));
    put_u("world.year_end", static_cast<std::uint64_t>(cfg.world.years.back()));
    put_u("world.tiles_x", cfg.world.tiles_x);
    put_u("world.tiles_y", cfg.world.tiles_y);
    put_u("world.footprints_per_tile_per_year", cfg.world.footprints_per_tile_per_year);
    put_u("world.embed_dim", cfg.world.embed_dim);
    put_d("world.length_scale", cfg.world.length_scale);
    put_u("world.field_bumps", cfg.world.field_bumps);
    put_d("world.noise_sigma_log", cfg.world.noise_sigma_log);
    put_d("world.embedding_noise", cfg.world.embedding_noise);
    put_d("world.along_spacing", cfg.world.along_spacing);
    put_d("world.patch_cell_size", cfg.world.patch_cell_size);
    put_u("world.seed", cfg.world.seed);
    for (const DisturbanceEvent& ev : cfg.world.events) {
        put("world.event", format_double(ev.center_lon) + "," + format_double(ev.center_lat) + "," +
                               format_double(ev.radius) + "," + format_double(ev.event_time) + "," +
                               format_double(ev.retained_fraction));
    }
    put_u("model.feature_width", cfg.model.feature_width);
    put_u("model.repr_width", cfg.model.repr_width);
    put_u("model.latent_width", cfg.model.latent_width);
    put_u("model.decoder_hidden", cfg.model.decoder_hidden);
    put_u("model.conv_channels", cfg.model.conv_channels);
    put_u("model.heads", cfg.model.heads);
    put_d("model.sigma_floor", cfg.model.sigma_floor);
    put_u("model.latent_samples", cfg.model.latent_samples);
    put_u("train.steps", cfg.train.steps);
    put_d("train.learning_rate", cfg.train.learning_rate);
    put_d("train.beta_max", cfg.train.beta_max);
    put_u("train.anneal_steps", cfg.train.anneal_steps);
    put_d("train.context_ratio_low", cfg.train.context_ratio_low);
    put_d("train.context_ratio_high", cfg.train.context_ratio_high);
    put_u("train.episode_batch", cfg.train.episode_batch);
    put_u("train.latent_samples_train", cfg.train.latent_samples_train);
    put_u("train.episode_max_footprints", cfg.train.episode_max_footprints);
    put_u("train.log_every", cfg.train.log_every);
    put_u("train.seed", cfg.train.seed);
    put_u("train.jobs", cfg.train.jobs);
    put_u("qrf.trees", cfg.qrf.trees);
    put_u("qrf.max_depth", cfg.qrf.tree.max_depth);
    put_u("qrf.min_leaf", cfg.qrf.tree.min_leaf);
    put_u("qrf.feature_subsample", cfg.qrf.tree.feature_subsample);
    put_u("qrf.seed", cfg.qrf.seed);
    put_u("gbq.rounds", cfg.gbq.rounds);
    put_d("gbq.learning_rate", cfg.gbq.learning_rate);
    put_u("gbq.max_depth", cfg.gbq.tree.max_depth);
    put_u("gbq.min_leaf", cfg.gbq.tree.min_leaf);
    put_u("gbq.seed", cfg.gbq.seed);
    put_u("run.seeds", cfg.seeds);
    put_u("run.partition_seed_base", cfg.partition_seed_base);
    put_u("run.buffer_radius", cfg.buffer_radius);
    put_u("run.holdout_year", static_cast<std::uint64_t>(cfg.effective_holdout_year()));
    std::string joined;
    for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
        if (i) joined += ",";
        joined += cfg.methods[i];
    }
    put("run.methods", joined);
    return echo;
}

}  // namespace stanp
