#include "stanp/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <system_error>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round trip
    out.append(buf, res.ptr);
}

std::string_view trimmed(std::string_view tok) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
    return tok;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            tokens.push_back(trimmed(line.substr(start)));
            return tokens;
        }
        tokens.push_back(trimmed(line.substr(start, comma - start)));
        start = comma + 1;
    }
}

double parse_double(std::string_view tok, long line) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || tok.empty()) {
        throw ParseError("bad numeric field '" + std::string(tok) + "'", line);
    }
    return v;
}

long parse_long(std::string_view tok, long line) {
    long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size() || tok.empty()) {
        throw ParseError("bad integer field '" + std::string(tok) + "'", line);
    }
    return v;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
    std::string out;
    out.reserve(dataset.records.size() * (9 * dataset.embed_dim + 7) * 12 + 64);
    out += std::to_string(kDatasetVersion);
    out += ',';
    out += std::to_string(dataset.embed_dim);
    out += '\n';
    const std::size_t patch_len = 9 * dataset.embed_dim;
    for (const DatasetRecord& rec : dataset.records) {
        if (rec.patch.size() != patch_len) {
            throw ContractViolation("record " + std::to_string(rec.footprint_id) + " has patch length " +
                                    std::to_string(rec.patch.size()) + ", expected " + std::to_string(patch_len));
        }
        out += std::to_string(rec.footprint_id);
        out += ',';
        out += std::to_string(rec.tile_id);
        out += ',';
        out += std::to_string(rec.year);
        out += ',';
        append_double(out, rec.day_of_year);
        out += ',';
        append_double(out, rec.lon);
        out += ',';
        append_double(out, rec.lat);
        out += ',';
        append_double(out, rec.y_norm);
        for (double v : rec.patch) {
            out += ',';
            append_double(out, v);
        }
        out += '\n';
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw ConfigError("cannot open '" + path + "' for writing");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw ConfigError("failed writing '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ConfigError("cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(file, line)) throw ParseError("dataset is missing its header", 1);
    const std::vector<std::string_view> header = split_csv(line);
    if (header.size() != 2) throw FormatError("header needs exactly version and dimension fields");
    const long version = parse_long(header[0], 1);
    if (version != kDatasetVersion) {
        throw FormatError("unsupported dataset version " + std::to_string(version));
    }
    const long d = parse_long(header[1], 1);
    if (d < 2) throw FormatError("embedding dimension " + std::to_string(d) + " below minimum");

    Dataset dataset;
    dataset.embed_dim = static_cast<std::size_t>(d);
    const std::size_t want = 7 + 9 * dataset.embed_dim;
    long line_no = 1;
    while (std::getline(file, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string_view> tokens = split_csv(line);
        if (tokens.size() != want) {
            const bool last_row = file.peek() == std::char_traits<char>::eof();
            if (last_row && tokens.size() < want) {
                throw ParseError("dataset appears truncated", line_no);
            }
            throw FormatError("row " + std::to_string(line_no - 1) + " has " + std::to_string(tokens.size()) +
                              " fields, expected " + std::to_string(want));
        }
        DatasetRecord rec;
        rec.footprint_id = parse_long(tokens[0], line_no);
        rec.tile_id = static_cast<int>(parse_long(tokens[1], line_no));
        rec.year = static_cast<int>(parse_long(tokens[2], line_no));
        rec.day_of_year = parse_double(tokens[3], line_no);
        rec.lon = parse_double(tokens[4], line_no);
        rec.lat = parse_double(tokens[5], line_no);
        rec.y_norm = parse_double(tokens[6], line_no);
        rec.patch.reserve(9 * dataset.embed_dim);
        for (std::size_t i = 7; i < want; ++i) rec.patch.push_back(parse_double(tokens[i], line_no));
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

NormalizationFrame frame_from_records(const Dataset& dataset) {
    if (dataset.records.empty()) throw ContractViolation("cannot derive a frame from an empty dataset");
    NormalizationFrame frame;
    frame.region.lon_min = frame.region.lon_max = dataset.records.front().lon;
    frame.region.lat_min = frame.region.lat_max = dataset.records.front().lat;
    int min_year = dataset.records.front().year;
    int max_year = min_year;
    for (const DatasetRecord& rec : dataset.records) {
        frame.region.lon_min = std::min(frame.region.lon_min, rec.lon);
        frame.region.lon_max = std::max(frame.region.lon_max, rec.lon);
        frame.region.lat_min = std::min(frame.region.lat_min, rec.lat);
        frame.region.lat_max = std::max(frame.region.lat_max, rec.lat);
        min_year = std::min(min_year, rec.year);
        max_year = std::max(max_year, rec.year);
    }
    frame.period = StudyPeriod{Date{min_year, 1, 1}, Date{max_year, 12, 31}};
    return frame;
}

std::vector<Footprint> to_footprints(const Dataset& dataset, const NormalizationFrame& frame) {
    std::vector<Footprint> out;
    out.reserve(dataset.records.size());
    for (const DatasetRecord& rec : dataset.records) {
        const long jan1 = day_number(Date{rec.year, 1, 1});
        const Date ts = date_from_day_number(jan1 + static_cast<long>(std::floor(rec.day_of_year)) - 1);
        Footprint fp;
        fp.coord = make_coord(frame.region, frame.period, rec.lon, rec.lat, rec.day_of_year, ts);
        fp.patch = Tensor({3, 3, dataset.embed_dim}, rec.patch);
        fp.y_norm = rec.y_norm;
        fp.year = rec.year;
        fp.tile_id = rec.tile_id;
        out.push_back(std::move(fp));
    }
    return out;
}

}  // namespace stanp
