#include "stanp/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

constexpr std::uint64_t kFieldTag = 0xF1E1D;
constexpr std::uint64_t kChannelTag = 0xC4A77E1;
constexpr std::uint64_t kYearTagBase = 0x59EA0000;
constexpr std::size_t kMaxTracksPerYear = 10000;

struct Bump {
    double cx, cy, amp, inv_2ls2;
};

struct FieldParams {
    double offset = 0.0;
    std::vector<Bump> bumps;
};

FieldParams make_field(const WorldConfig& w) {
    Rng rng = Rng::from_tag(w.seed, kFieldTag);
    FieldParams fp;
    fp.offset = rng.uniform(20.0, 60.0);
    fp.bumps.reserve(w.field_bumps);
    const double extent = std::max(w.region.lon_max - w.region.lon_min, w.region.lat_max - w.region.lat_min);
    for (std::size_t i = 0; i < w.field_bumps; ++i) {
        Bump b;
        b.cx = w.region.lon_min + (w.region.lon_max - w.region.lon_min) * rng.uniform(-0.1, 1.1);
        b.cy = w.region.lat_min + (w.region.lat_max - w.region.lat_min) * rng.uniform(-0.1, 1.1);
        b.amp = (i % 3 == 2) ? rng.uniform(-80.0, -20.0) : rng.uniform(60.0, 260.0);
        const double ls = extent * w.length_scale * rng.uniform(0.6, 1.4);
        b.inv_2ls2 = 1.0 / (2.0 * ls * ls);
        fp.bumps.push_back(b);
    }
    return fp;
}

double eval_field(const FieldParams& fp, const WorldConfig& w, double lon, double lat, double t) {
    double v = fp.offset;
    for (const Bump& b : fp.bumps) {
        const double dx = lon - b.cx;
        const double dy = lat - b.cy;
        v += b.amp * std::exp(-(dx * dx + dy * dy) * b.inv_2ls2);
    }
    v = std::clamp(v, 0.0, kBiomassCap);
    for (const DisturbanceEvent& e : w.events) {
        const double dx = lon - e.center_lon;
        const double dy = lat - e.center_lat;
        if (t >= e.event_time && dx * dx + dy * dy <= e.radius * e.radius) {
            v *= e.retained_fraction;
        }
    }
    return v;
}

enum class ChannelKind { LogAffine, Saturating, Concave, Root };

struct ChannelParams {
    ChannelKind kind;
    double alpha, beta;
};

std::vector<ChannelParams> make_channels(const WorldConfig& w) {
    Rng rng = Rng::from_tag(w.seed, kChannelTag);
    std::vector<ChannelParams> out(w.embed_dim);
    for (std::size_t d = 0; d < w.embed_dim; ++d) {
        ChannelKind kind;
        if (d == 0) {
            kind = ChannelKind::LogAffine;  // keeps a clean log-biomass proxy
        } else {
            switch (d % 4) {
                case 1: kind = ChannelKind::Saturating; break;
                case 2: kind = ChannelKind::Concave; break;
                case 3: kind = ChannelKind::Root; break;
                default: kind = ChannelKind::LogAffine; break;
            }
        }
        out[d] = ChannelParams{kind, rng.uniform(0.6, 1.4), rng.uniform(-0.2, 0.2)};
    }
    return out;
}

double channel_response(const ChannelParams& c, double biomass) {
    const double frac = biomass / kBiomassCap;
    double g = 0.0;
    switch (c.kind) {
        case ChannelKind::LogAffine: g = agbd_to_norm(biomass); break;
        case ChannelKind::Saturating: g = std::tanh(biomass / (0.6 * kBiomassCap)); break;
        case ChannelKind::Concave: g = frac * (2.0 - frac); break;
        case ChannelKind::Root: g = std::sqrt(frac); break;
    }
    return c.alpha * g + c.beta;
}

double cell_size(const WorldConfig& w) {
    if (w.patch_cell_size > 0.0) return w.patch_cell_size;
    return (w.region.lon_max - w.region.lon_min) / 3000.0;
}

Tensor embed_patch(const WorldConfig& w, const FieldParams& field, const std::vector<ChannelParams>& channels,
                   double lon, double lat, double t, Rng& rng) {
    const double step = cell_size(w);
    Tensor patch({3, 3, w.embed_dim});
    std::size_t idx = 0;
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) {
            // sample points clamp to the region so edge patches stay valid
            const double cl = std::clamp(lon + (col - 1) * step, w.region.lon_min, w.region.lon_max);
            const double ca = std::clamp(lat + (row - 1) * step, w.region.lat_min, w.region.lat_max);
            const double b = eval_field(field, w, cl, ca, t);
            for (std::size_t d = 0; d < w.embed_dim; ++d) {
                patch[idx++] = channel_response(channels[d], b) + w.embedding_noise * rng.normal();
            }
        }
    }
    return patch;
}

}  // namespace

void WorldConfig::validate() const {
    if (!(region.lon_min < region.lon_max && region.lat_min < region.lat_max)) {
        throw ContractViolation("world region box is degenerate");
    }
    if (years.empty()) throw ContractViolation("world needs at least one year");
    for (std::size_t i = 1; i < years.size(); ++i) {
        if (years[i] != years[i - 1] + 1) throw ContractViolation("world years must be consecutive");
    }
    if (tiles_x == 0 || tiles_y == 0) throw ContractViolation("tile grid must be non-empty");
    if (embed_dim < 2) throw ContractViolation("embedding needs at least 2 channels");
    if (!(noise_sigma_log >= 0.0)) throw ContractViolation("observation noise must be non-negative");
    if (!(embedding_noise >= 0.0)) throw ContractViolation("embedding noise must be non-negative");
    if (field_bumps == 0) throw ContractViolation("field needs at least one bump");
    if (!(length_scale > 0.0)) throw ContractViolation("length scale must be positive");
    for (const DisturbanceEvent& e : events) {
        if (!(e.radius > 0.0)) throw ContractViolation("event radius must be positive");
        if (!(e.event_time >= 0.0 && e.event_time <= 1.0)) {
            throw ContractViolation("event time must lie in [0,1]");
        }
        if (!(e.retained_fraction >= 0.0 && e.retained_fraction < 1.0)) {
            throw ContractViolation("retained fraction must lie in [0,1)");
        }
    }
}

StudyPeriod WorldConfig::period() const {
    return StudyPeriod{Date{years.front(), 1, 1}, Date{years.back(), 12, 31}};
}

int tile_of(const WorldConfig& world, double lon, double lat) {
    const double u = (lon - world.region.lon_min) / (world.region.lon_max - world.region.lon_min);
    const double v = (lat - world.region.lat_min) / (world.region.lat_max - world.region.lat_min);
    if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0)) {
        throw ContractViolation("point outside the world region");
    }
    const auto tx = std::min(world.tiles_x - 1, static_cast<std::size_t>(u * static_cast<double>(world.tiles_x)));
    const auto ty = std::min(world.tiles_y - 1, static_cast<std::size_t>(v * static_cast<double>(world.tiles_y)));
    return static_cast<int>(ty * world.tiles_x + tx);
}

double true_biomass(const WorldConfig& world, double lon, double lat, double t) {
    if (lon < world.region.lon_min || lon > world.region.lon_max || lat < world.region.lat_min ||
        lat > world.region.lat_max) {
        throw ContractViolation("point outside the world region");
    }
    if (!(t >= 0.0 && t <= 1.0)) throw ContractViolation("normalized time must lie in [0,1]");
    return eval_field(make_field(world), world, lon, lat, t);
}

Tensor synth_embedding(const WorldConfig& world, double lon, double lat, double t, Rng& rng) {
    if (lon < world.region.lon_min || lon > world.region.lon_max || lat < world.region.lat_min ||
        lat > world.region.lat_max) {
        throw ContractViolation("point outside the world region");
    }
    if (!(t >= 0.0 && t <= 1.0)) throw ContractViolation("normalized time must lie in [0,1]");
    return embed_patch(world, make_field(world), make_channels(world), lon, lat, t, rng);
}

SampleResult sample_footprints(const WorldConfig& world) {
    world.validate();
    const FieldParams field = make_field(world);
    const std::vector<ChannelParams> channels = make_channels(world);
    const StudyPeriod period = world.period();
    const long period_start = day_number(period.start);
    const long period_span = day_number(period.end) - period_start;

    const double width = world.region.lon_max - world.region.lon_min;
    const double height = world.region.lat_max - world.region.lat_min;
    const double spacing = world.along_spacing > 0.0 ? world.along_spacing : width / 150.0;
    const double half_span = std::hypot(width, height);  // covers any chord

    SampleResult result;
    result.dataset.embed_dim = world.embed_dim;
    const std::size_t per_year = world.footprints_per_tile_per_year * world.tile_count();
    result.dataset.records.reserve(per_year * world.years.size());
    result.true_y_norm.reserve(per_year * world.years.size());

    std::vector<std::size_t> tile_year_counts(world.tile_count() * world.years.size(), 0);
    long next_id = 0;

    for (std::size_t yi = 0; yi < world.years.size(); ++yi) {
        const int year = world.years[yi];
        Rng rng = Rng::from_tag(world.seed, kYearTagBase + static_cast<std::uint64_t>(year));
        const long jan1 = day_number(Date{year, 1, 1});
        std::size_t placed = 0;
        std::size_t tracks = 0;
        while (placed < per_year && tracks < kMaxTracksPerYear) {
            ++tracks;
            const double theta = rng.uniform(0.0, M_PI);
            const double ax = rng.uniform(world.region.lon_min, world.region.lon_max);
            const double ay = rng.uniform(world.region.lat_min, world.region.lat_max);
            const double dx = std::cos(theta);
            const double dy = std::sin(theta);
            const auto steps = static_cast<long>(std::ceil(2.0 * half_span / spacing));
            for (long k = 0; k <= steps && placed < per_year; ++k) {
                const double s = -half_span + static_cast<double>(k) * spacing;
                const double jx = 0.05 * spacing * rng.normal();
                const double jy = 0.05 * spacing * rng.normal();
                const double lon = ax + s * dx + jx;
                const double lat = ay + s * dy + jy;
                if (lon < world.region.lon_min || lon > world.region.lon_max || lat < world.region.lat_min ||
                    lat > world.region.lat_max) {
                    continue;
                }
                const int doy = rng.uniform_int(1, 365);
                const long abs_day = jan1 + doy - 1;
                const double t = static_cast<double>(abs_day - period_start) / static_cast<double>(period_span);

                const double truth = eval_field(field, world, lon, lat, t);
                const double eps = rng.normal(0.0, world.noise_sigma_log);
                const double observed = std::min(truth * std::exp(eps), kBiomassCap);

                const int tile = tile_of(world, lon, lat);
                DatasetRecord rec;
                rec.footprint_id = next_id++;
                rec.tile_id = tile;
                rec.year = year;
                rec.day_of_year = doy;
                rec.lon = lon;
                rec.lat = lat;
                rec.y_norm = agbd_to_norm(observed);
                Tensor patch = embed_patch(world, field, channels, lon, lat, t, rng);
                rec.patch.assign(patch.data(), patch.data() + patch.size());
                result.dataset.records.push_back(std::move(rec));
                result.true_y_norm.push_back(agbd_to_norm(truth));

                ++tile_year_counts[static_cast<std::size_t>(tile) * world.years.size() + yi];
                ++placed;
            }
        }
    }

    for (std::size_t tile = 0; tile < world.tile_count(); ++tile) {
        for (std::size_t yi = 0; yi < world.years.size(); ++yi) {
            if (tile_year_counts[tile * world.years.size() + yi] < 4) {
                result.sparse_tiles.push_back(static_cast<int>(tile));
                break;
            }
        }
    }
    return result;
}

}  // namespace stanp
