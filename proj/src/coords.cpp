#include "stanp/coords.hpp"

#include <cmath>
#include <string>

#include "stanp/errors.hpp"

namespace stanp {

namespace {

constexpr double kTwoPi = 6.283185307179586;
constexpr double kLogCap1 = 6.2166061010848646;  // ln(501)

bool valid_date(const Date& d) {
    if (d.month < 1 || d.month > 12 || d.day < 1 || d.day > 31) return false;
    return true;
}

}  // namespace

double agbd_to_norm(double agbd_mgha) {
    if (!(agbd_mgha == agbd_mgha)) throw ContractViolation("agbd_to_norm: NaN input");
    const double clipped = agbd_mgha < 0.0 ? 0.0 : (agbd_mgha > kBiomassCap ? kBiomassCap : agbd_mgha);
    return std::log1p(clipped) / kLogCap1;
}

double norm_to_agbd(double y_norm) { return std::expm1(y_norm * kLogCap1); }

long day_number(const Date& d) {
    if (!valid_date(d)) {
        throw ContractViolation("invalid date " + std::to_string(d.year) + "-" + std::to_string(d.month) + "-" +
                                std::to_string(d.day));
    }
    // Hinnant's civil-days algorithm
    int y = d.year;
    const unsigned m = static_cast<unsigned>(d.month);
    const unsigned dd = static_cast<unsigned>(d.day);
    y -= m <= 2;
    const long era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + dd - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long>(doe) - 719468;
}

Date date_from_day_number(long days) {
    const long z = days + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

int day_of_year(const Date& d) {
    return static_cast<int>(day_number(d) - day_number(Date{d.year, 1, 1})) + 1;
}

bool operator==(const Date& a, const Date& b) { return a.year == b.year && a.month == b.month && a.day == b.day; }
bool operator<(const Date& a, const Date& b) { return day_number(a) < day_number(b); }
bool operator<=(const Date& a, const Date& b) { return day_number(a) <= day_number(b); }

TemporalEncoding temporal_encode(double day_of_year, const Date& timestamp, const StudyPeriod& period) {
    if (!(day_of_year >= 0.0 && day_of_year <= 366.0)) {
        throw ContractViolation("day_of_year " + std::to_string(day_of_year) + " outside [0, 366]");
    }
    const long start = day_number(period.start);
    const long end = day_number(period.end);
    if (start >= end) throw ContractViolation("study period start must precede end");
    const long ts = day_number(timestamp);
    if (ts < start || ts > end) {
        throw ContractViolation("timestamp day " + std::to_string(ts) + " outside study period [" +
                                std::to_string(start) + ", " + std::to_string(end) + "]");
    }
    const double phase = kTwoPi * day_of_year / 365.0;
    TemporalEncoding enc;
    enc.doy_sin = std::sin(phase);
    enc.doy_cos = std::cos(phase);
    enc.tau = static_cast<double>(ts - start) / static_cast<double>(end - start);
    return enc;
}

SpatioTemporalCoord make_coord(const Region& region, const StudyPeriod& period, double lon, double lat,
                               double day_of_year, const Date& timestamp) {
    if (region.lon_min >= region.lon_max || region.lat_min >= region.lat_max) {
        throw ContractViolation("degenerate region box");
    }
    if (lon < region.lon_min || lon > region.lon_max || lat < region.lat_min || lat > region.lat_max) {
        throw ContractViolation("point (" + std::to_string(lon) + ", " + std::to_string(lat) +
                                ") outside region box");
    }
    const TemporalEncoding enc = temporal_encode(day_of_year, timestamp, period);
    SpatioTemporalCoord c;
    c.lon_norm = (lon - region.lon_min) / (region.lon_max - region.lon_min);
    c.lat_norm = (lat - region.lat_min) / (region.lat_max - region.lat_min);
    c.doy_sin = enc.doy_sin;
    c.doy_cos = enc.doy_cos;
    c.tau = enc.tau;
    return c;
}

}  // namespace stanp
