#pragma once

#include <cstdint>

namespace stanp {

// Biomass values are capped here and mapped to [0,1] in log space; every
// module shares this one convention.
constexpr double kBiomassCap = 500.0;

double agbd_to_norm(double agbd_mgha);  // ln(1+a)/ln(1+cap), a clipped to [0,cap]
double norm_to_agbd(double y_norm);     // exp(y·ln(1+cap)) − 1

struct Date {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31
};

// Days since 1970-01-01 (proleptic Gregorian).
long day_number(const Date& d);
int day_of_year(const Date& d);  // 1..366
Date date_from_day_number(long days);

bool operator==(const Date& a, const Date& b);
bool operator<(const Date& a, const Date& b);
bool operator<=(const Date& a, const Date& b);

struct StudyPeriod {
    Date start;
    Date end;  // inclusive
};

struct Region {
    double lon_min = 0.0;
    double lon_max = 1.0;
    double lat_min = 0.0;
    double lat_max = 1.0;
};

struct TemporalEncoding {
    double doy_sin = 0.0;
    double doy_cos = 1.0;
    double tau = 0.0;
};

// Seasonal phase from day of year (divisor 365; day 366 runs slightly past a
// full cycle) plus the timestamp normalized over the study period.
// day_of_year may be fractional; must lie in [0, 366].
TemporalEncoding temporal_encode(double day_of_year, const Date& timestamp, const StudyPeriod& period);

struct SpatioTemporalCoord {
    double lon_norm = 0.0;  // [0,1] within the region box
    double lat_norm = 0.0;
    double doy_sin = 0.0;
    double doy_cos = 1.0;
    double tau = 0.0;  // [0,1] within the study period
};

SpatioTemporalCoord make_coord(const Region& region, const StudyPeriod& period, double lon, double lat,
                               double day_of_year, const Date& timestamp);

}  // namespace stanp
