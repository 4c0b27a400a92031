#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stanp/errors.hpp"
#include "stanp/evaluate.hpp"
#include "stanp/metrics.hpp"
#include "stanp/partition.hpp"
#include "stanp/reports.hpp"
#include "stanp/rng.hpp"
#include "stanp/world.hpp"

using namespace stanp;

namespace {

// brute-force counterparts, written independently of the library versions
double naive_mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double naive_r2(const std::vector<double>& y, const std::vector<double>& p) {
    const double m = naive_mean(y);
    double sse = 0.0, sst = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        sse += (y[i] - p[i]) * (y[i] - p[i]);
        sst += (y[i] - m) * (y[i] - m);
    }
    return 1.0 - sse / sst;
}

double naive_agbd(double norm) { return std::pow(501.0, norm) - 1.0; }

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Footprint make_fp(int tile, int year, double y_norm) {
    static const Region region{0.0, 1.0, 0.0, 1.0};
    static const StudyPeriod period{{2019, 1, 1}, {2023, 12, 31}};
    Footprint fp;
    fp.coord = make_coord(region, period, 0.5, 0.5, 180.0, Date{year, 6, 29});
    fp.patch = Tensor({3, 3, 1}, std::vector<double>(9, 0.1));
    fp.y_norm = y_norm;
    fp.year = year;
    fp.tile_id = tile;
    return fp;
}

struct ConstantPredictor final : Predictor {
    double mu, sigma;
    ConstantPredictor(double m, double s) : mu(m), sigma(s) {}
    std::string name() const override { return "Const"; }
    std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>&,
                                                   const std::vector<const Footprint*>& targets) override {
        return std::vector<model::PredictiveGaussian>(targets.size(), {mu, sigma});
    }
};

// knows the generative truth; sigma is the observation noise propagated
// through the log-normalization at the true biomass
struct OraclePredictor final : Predictor {
    const Footprint* base;
    const std::vector<double>* truth;
    double noise_sigma;
    double scale = 1.0;
    std::string name() const override { return "Oracle"; }
    std::vector<model::PredictiveGaussian> predict(const std::vector<const Footprint*>&,
                                                   const std::vector<const Footprint*>& targets) override {
        std::vector<model::PredictiveGaussian> out;
        out.reserve(targets.size());
        for (const Footprint* fp : targets) {
            const std::size_t idx = static_cast<std::size_t>(fp - base);
            const double mu = (*truth)[idx];
            const double b = norm_to_agbd(mu);
            const double slope = b / (1.0 + b);
            const double sigma = std::max(scale * noise_sigma * slope / std::log(501.0), 1e-9);
            out.push_back({mu, sigma});
        }
        return out;
    }
};

}  // namespace

TEST_CASE("partition fractions follow largest-remainder rounding") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const TilePartition p = partition_tiles(10, 10, seed, 0);
        CHECK(p.count(TileRole::Train) == 70);
        CHECK(p.count(TileRole::Val) == 15);
        CHECK(p.count(TileRole::Test) == 15);
        CHECK(p.count(TileRole::BufferExcluded) == 0);
    }
    // 25 tiles: 17.5 / 3.75 / 3.75 -> 17/4/4 after remainder distribution
    const TilePartition p25 = partition_tiles(5, 5, 3, 0);
    CHECK(p25.count(TileRole::Train) == 17);
    CHECK(p25.count(TileRole::Val) == 4);
    CHECK(p25.count(TileRole::Test) == 4);

    CHECK_THROWS_AS(partition_tiles(1, 2, 0, 0), ContractViolation);
}

TEST_CASE("partitions are deterministic per seed and vary across seeds") {
    const TilePartition a = partition_tiles(6, 7, 11, 1);
    const TilePartition b = partition_tiles(6, 7, 11, 1);
    REQUIRE(a.roles.size() == b.roles.size());
    for (std::size_t i = 0; i < a.roles.size(); ++i) CHECK(a.roles[i] == b.roles[i]);

    bool any_differs = false;
    const TilePartition c = partition_tiles(6, 7, 12, 1);
    for (std::size_t i = 0; i < a.roles.size(); ++i) {
        if (a.roles[i] != c.roles[i]) any_differs = true;
    }
    CHECK(any_differs);
}

TEST_CASE("a strip grid buffers the neighbors of its test tile") {
    // find a seed whose single test tile sits at index 2
    bool found = false;
    for (std::uint64_t seed = 0; seed < 300 && !found; ++seed) {
        const TilePartition p = partition_tiles(1, 5, seed, 1);
        if (p.role(2) != TileRole::Test || p.count(TileRole::Test) != 1) continue;
        found = true;
        CHECK(p.role(1) == TileRole::BufferExcluded);
        CHECK(p.role(3) == TileRole::BufferExcluded);
        CHECK(p.role(0) != TileRole::BufferExcluded);
        CHECK(p.role(4) != TileRole::BufferExcluded);
    }
    CHECK(found);
}

TEST_CASE("zero buffer radius excludes nothing") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const TilePartition p = partition_tiles(4, 4, seed, 0);
        CHECK(p.count(TileRole::BufferExcluded) == 0);
    }
}

TEST_CASE("buffering enforces the chebyshev separation invariant") {
    Rng rng(404);
    int feasible = 0;
    for (int it = 0; it < 200; ++it) {
        const std::size_t rows = 3 + rng.uniform_index(6);
        const std::size_t cols = 3 + rng.uniform_index(6);
        const std::size_t radius = rng.uniform_index(3);
        TilePartition p;
        try {
            p = partition_tiles(rows, cols, rng.next_u64(), radius);
        } catch (const PartitionInfeasibleError&) {
            continue;
        }
        ++feasible;
        const std::vector<std::size_t> tests = p.tiles_with(TileRole::Test);
        for (std::size_t t = 0; t < p.roles.size(); ++t) {
            if (p.role(t) != TileRole::Train && p.role(t) != TileRole::Val) continue;
            for (std::size_t s : tests) {
                const std::ptrdiff_t dr = static_cast<std::ptrdiff_t>(t / cols) -
                                          static_cast<std::ptrdiff_t>(s / cols);
                const std::ptrdiff_t dc = static_cast<std::ptrdiff_t>(t % cols) -
                                          static_cast<std::ptrdiff_t>(s % cols);
                const std::size_t cheb =
                    static_cast<std::size_t>(std::max(std::abs(dr), std::abs(dc)));
                CHECK(cheb >= radius + 1);
            }
        }
    }
    CHECK(feasible > 100);
}

TEST_CASE("buffering every training tile away is an error") {
    // radius 2 on a 3x3 grid reaches every tile from any test tile
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        CHECK_THROWS_AS(partition_tiles(3, 3, seed, 2), PartitionInfeasibleError);
    }
}

TEST_CASE("z statistics match hand values and the brute-force oracle") {
    CHECK_THROWS_AS(z_stats({1.0}, {1.0}, {1.0}), ContractViolation);
    CHECK_THROWS_AS(z_stats({1.0, 2.0}, {1.0, 2.0}, {1.0, 0.0}), ContractViolation);
    CHECK_THROWS_AS(z_stats({1.0, 2.0}, {1.0}, {1.0, 1.0}), ContractViolation);

    ZStats s = z_stats({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0});
    CHECK(s.mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.std == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));

    s = z_stats({4.0, 5.0}, {4.0, 5.0}, {0.3, 0.7});
    CHECK(s.mean == 0.0);
    CHECK(s.std == 0.0);

    Rng rng(515);
    for (int it = 0; it < 1000; ++it) {
        const std::size_t n = 2 + rng.uniform_index(20);
        std::vector<double> y(n), mu(n), sg(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = rng.uniform(-5.0, 5.0);
            mu[i] = rng.uniform(-5.0, 5.0);
            sg[i] = rng.uniform(0.1, 2.0);
        }
        const ZStats got = z_stats(y, mu, sg);
        std::vector<double> z(n);
        for (std::size_t i = 0; i < n; ++i) z[i] = (y[i] - mu[i]) / sg[i];
        const double m = naive_mean(z);
        double ss = 0.0;
        for (double zi : z) ss += (zi - m) * (zi - m);
        CHECK(got.mean == doctest::Approx(m).epsilon(1e-12));
        CHECK(got.std == doctest::Approx(std::sqrt(ss / static_cast<double>(n))).epsilon(1e-12));
    }
}

TEST_CASE("large standard-normal samples match nominal z statistics") {
    Rng rng(616);
    const std::size_t n = 100000;
    std::vector<double> y(n), mu(n, 0.0), sg(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) y[i] = rng.normal();
    const ZStats s = z_stats(y, mu, sg);
    CHECK(std::abs(s.mean) < 0.02);
    CHECK(s.std > 0.99);
    CHECK(s.std < 1.01);
    CHECK(coverage(y, mu, sg, 1.0) == doctest::Approx(0.6827).epsilon(0.01));
    CHECK(coverage(y, mu, sg, 2.0) == doctest::Approx(0.9545).epsilon(0.005));
}

TEST_CASE("coverage counts boundaries inside and is monotone in k") {
    std::vector<double> y{1.0, -1.0, 2.0, -2.0};
    std::vector<double> mu{0.0, 0.0, 0.0, 0.0};
    std::vector<double> sg{1.0, 1.0, 2.0, 2.0};
    // every residual sits exactly on the 1-sigma boundary
    CHECK(coverage(y, mu, sg, 1.0) == 1.0);

    CHECK(coverage({5.0, 5.0}, {5.0, 5.0}, {0.1, 0.1}, 3.0) == 1.0);
    CHECK_THROWS_AS(coverage({1.0, 2.0}, {1.0, 2.0}, {1.0, 1.0}, 0.0), ContractViolation);

    Rng rng(717);
    for (int it = 0; it < 200; ++it) {
        const std::size_t n = 2 + rng.uniform_index(30);
        std::vector<double> yy(n), mm(n), ss(n);
        for (std::size_t i = 0; i < n; ++i) {
            yy[i] = rng.uniform(-3.0, 3.0);
            mm[i] = rng.uniform(-3.0, 3.0);
            ss[i] = rng.uniform(0.05, 2.0);
        }
        double prev = 0.0;
        for (double k = 0.25; k <= 4.0; k += 0.25) {
            const double c = coverage(yy, mm, ss, k);
            CHECK(c >= prev);
            std::size_t inside = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (std::abs(yy[i] - mm[i]) <= k * ss[i]) ++inside;
            }
            CHECK(c == doctest::Approx(static_cast<double>(inside) / n).epsilon(1e-14));
            prev = c;
        }
    }
}

TEST_CASE("accuracy metrics match the brute-force formulas") {
    std::vector<double> y{0.2, 0.4, 0.6};
    AccuracyMetrics m = accuracy_metrics(y, y);
    CHECK(m.log_r2 == 1.0);
    CHECK(m.log_rmse == 0.0);
    CHECK(m.linear_rmse == 0.0);
    CHECK(m.linear_mae == 0.0);
    CHECK(m.r2_defined);

    // constant prediction at the mean scores zero
    m = accuracy_metrics({0.2, 0.4, 0.6}, {0.4, 0.4, 0.4});
    CHECK(m.log_r2 == doctest::Approx(0.0).epsilon(1e-12));

    // zero target variance: R² flagged, error metrics still real
    m = accuracy_metrics({0.5, 0.5}, {0.4, 0.6});
    CHECK_FALSE(m.r2_defined);
    CHECK(std::isnan(m.log_r2));
    CHECK(m.log_rmse == doctest::Approx(0.1).epsilon(1e-12));

    CHECK_THROWS_AS(accuracy_metrics({0.5}, {0.5}), ContractViolation);

    Rng rng(818);
    for (int it = 0; it < 1000; ++it) {
        const std::size_t n = 2 + rng.uniform_index(20);
        std::vector<double> yy(n), pp(n);
        for (std::size_t i = 0; i < n; ++i) {
            yy[i] = rng.uniform(0.05, 0.95);
            pp[i] = rng.uniform(0.05, 0.95);
        }
        const AccuracyMetrics got = accuracy_metrics(yy, pp);
        double sse = 0.0, lin_sq = 0.0, lin_abs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sse += (yy[i] - pp[i]) * (yy[i] - pp[i]);
            const double le = naive_agbd(yy[i]) - naive_agbd(pp[i]);
            lin_sq += le * le;
            lin_abs += std::abs(le);
        }
        CHECK(got.log_r2 == doctest::Approx(naive_r2(yy, pp)).epsilon(1e-12));
        CHECK(got.log_rmse == doctest::Approx(std::sqrt(sse / n)).epsilon(1e-12));
        CHECK(got.linear_rmse == doctest::Approx(std::sqrt(lin_sq / n)).epsilon(1e-11));
        CHECK(got.linear_mae == doctest::Approx(lin_abs / n).epsilon(1e-11));
    }
}

TEST_CASE("disturbance deltas hit the documented strata") {
    DisturbanceRecord r = disturbance_delta(
        {{2019, 100.0}, {2020, 100.0}, {2021, 100.0}, {2022, 100.0}, {2023, 100.0}}, 2021, 7);
    CHECK(r.available);
    CHECK(r.tile_id == 7);
    CHECK(r.delta == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.stratum == Stratum::Stable);

    // delta exactly 0.3 is Moderate (inclusive upper boundary)
    r = disturbance_delta({{2019, 100.0}, {2020, 100.0}, {2021, 70.0}, {2022, 100.0}, {2023, 100.0}}, 2021, 0);
    CHECK(r.delta == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(r.stratum == Stratum::Moderate);

    r = disturbance_delta({{2019, 200.0}, {2020, 200.0}, {2021, 120.0}, {2022, 200.0}, {2023, 200.0}}, 2021, 0);
    CHECK(r.delta == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(r.stratum == Stratum::Disturbed);

    // biomass gain: negative delta, Stable
    r = disturbance_delta({{2019, 100.0}, {2020, 100.0}, {2021, 130.0}, {2022, 100.0}, {2023, 100.0}}, 2021, 0);
    CHECK(r.delta < 0.0);
    CHECK(r.stratum == Stratum::Stable);

    // delta exactly 0.1 is Moderate, just below is Stable
    r = disturbance_delta({{2019, 100.0}, {2021, 90.0}, {2022, 100.0}}, 2021, 0);
    CHECK(r.delta == doctest::Approx(0.1).epsilon(1e-14));
    CHECK(r.stratum == Stratum::Moderate);
    r = disturbance_delta({{2019, 100.0}, {2021, 90.01}, {2022, 100.0}}, 2021, 0);
    CHECK(r.stratum == Stratum::Stable);

    // asymmetric year counts: unweighted mean over all pre+post years
    r = disturbance_delta({{2019, 100.0}, {2021, 150.0}, {2022, 200.0}, {2023, 200.0}}, 2021, 0);
    CHECK(r.ybar_exp == doctest::Approx((100.0 + 200.0 + 200.0) / 3.0).epsilon(1e-14));

    CHECK_FALSE(disturbance_delta({{2022, 100.0}, {2021, 90.0}}, 2021, 0).available);
    CHECK_FALSE(disturbance_delta({{2019, 100.0}, {2021, 90.0}}, 2021, 0).available);
    CHECK_FALSE(disturbance_delta({{2019, 100.0}, {2022, 100.0}}, 2021, 0).available);
    CHECK_FALSE(disturbance_delta({{2019, 0.0}, {2021, 0.0}, {2022, 0.0}}, 2021, 0).available);
}

TEST_CASE("pooled r2 matches the worked example and is not a mean of per-seed r2") {
    PooledR2 r = pooled_r2({1.0, 2.0, 3.0, 4.0}, {1.5, 1.5, 3.5, 3.5});
    CHECK(r.defined);
    CHECK(r.value == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(r.n == 4);

    CHECK(pooled_r2({1.0, 2.0}, {1.0, 2.0}).value == 1.0);
    CHECK(pooled_r2({1.0, 2.0, 3.0}, {2.0, 2.0, 2.0}).value == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_FALSE(pooled_r2({}, {}).defined);
    CHECK_FALSE(pooled_r2({3.0, 3.0}, {1.0, 2.0}).defined);

    // two seeds whose averaged r2 differs from the pooled-union r2
    const std::vector<double> y1{0.0, 1.0}, p1{0.0, 1.0};
    const std::vector<double> y2{10.0, 11.0}, p2{11.0, 10.0};
    const double mean_of_r2 = 0.5 * (naive_r2(y1, p1) + naive_r2(y2, p2));
    std::vector<double> yu{0.0, 1.0, 10.0, 11.0}, pu{0.0, 1.0, 11.0, 10.0};
    const PooledR2 pooled = pooled_r2(yu, pu);
    CHECK(std::abs(pooled.value - mean_of_r2) > 1.0);
}

TEST_CASE("temporal holdout filters by year and tile role") {
    TilePartition part;
    part.rows = 1;
    part.cols = 4;
    part.roles = {TileRole::Train, TileRole::Val, TileRole::Test, TileRole::BufferExcluded};

    std::vector<Footprint> fps;
    for (int tile = 0; tile < 4; ++tile) {
        for (int year = 2019; year <= 2023; ++year) {
            fps.push_back(make_fp(tile, year, 0.4));
        }
    }
    const HoldoutSplit split = temporal_holdout(fps, part, 2021);

    REQUIRE(split.train.size() == 4);  // tile 0, four non-holdout years
    std::vector<int> years;
    for (const Footprint* fp : split.train) {
        CHECK(fp->tile_id == 0);
        CHECK(fp->year != 2021);
        years.push_back(fp->year);
    }
    std::sort(years.begin(), years.end());
    CHECK(years == std::vector<int>{2019, 2020, 2022, 2023});

    REQUIRE(split.test.size() == 1);
    CHECK(split.test[0]->tile_id == 2);
    CHECK(split.test[0]->year == 2021);

    CHECK_THROWS_AS(temporal_holdout(fps, part, 1999), ConfigError);
}

TEST_CASE("evaluation skips contextless tiles and errors when nothing remains") {
    TilePartition part;
    part.rows = 1;
    part.cols = 3;
    part.roles = {TileRole::Train, TileRole::Test, TileRole::Test};

    // tile 1 has context years; tile 2 only exists in the holdout year
    std::vector<Footprint> fps;
    for (int year = 2019; year <= 2023; ++year) fps.push_back(make_fp(0, year, 0.3));
    for (int year = 2019; year <= 2023; ++year) fps.push_back(make_fp(1, year, 0.5));
    fps.push_back(make_fp(1, 2021, 0.52));
    fps.push_back(make_fp(2, 2021, 0.7));

    ConstantPredictor predictor(0.5, 0.1);
    const EvaluationResult res = evaluate_model(predictor, fps, part, 2021);
    CHECK(res.skipped_tiles == 1);
    CHECK(res.report.n == 2);  // both tile-1 holdout shots
    for (const PredictionRecord& rec : res.records) CHECK(rec.tile_id == 1);

    // only the contextless tile carries holdout shots -> nothing evaluable
    std::vector<Footprint> sparse;
    for (int year = 2019; year <= 2023; ++year) sparse.push_back(make_fp(0, year, 0.3));
    sparse.push_back(make_fp(2, 2021, 0.7));
    sparse.push_back(make_fp(2, 2021, 0.6));
    CHECK_THROWS_AS(evaluate_model(predictor, sparse, part, 2021), EvaluationEmptyError);
}

TEST_CASE("tile yearly means pool every footprint regardless of role") {
    std::vector<Footprint> fps;
    fps.push_back(make_fp(0, 2019, agbd_to_norm(100.0)));
    fps.push_back(make_fp(0, 2019, agbd_to_norm(300.0)));
    fps.push_back(make_fp(0, 2021, agbd_to_norm(50.0)));
    const auto means = tile_yearly_means(fps);
    CHECK(means.at(0).at(2019) == doctest::Approx(200.0).epsilon(1e-10));
    CHECK(means.at(0).at(2021) == doctest::Approx(50.0).epsilon(1e-10));
}

TEST_CASE("oracle calibration on the synthetic world is nominal") {
    WorldConfig world;
    world.region = {8.0, 9.0, 49.0, 50.0};
    world.tiles_x = 5;
    world.tiles_y = 5;
    world.footprints_per_tile_per_year = 400;
    world.embed_dim = 2;
    world.noise_sigma_log = 0.12;
    world.seed = 2024;

    const SampleResult sample = sample_footprints(world);
    const std::vector<Footprint> fps = to_footprints(sample.dataset, world.frame());
    REQUIRE(fps.size() == sample.true_y_norm.size());

    OraclePredictor oracle;
    oracle.base = fps.data();
    oracle.truth = &sample.true_y_norm;
    oracle.noise_sigma = world.noise_sigma_log;

    std::vector<double> y, mu, sg;
    double z_first = 0.0;
    for (std::uint64_t pseed : {41ULL, 42ULL, 43ULL}) {
        const TilePartition part = partition_tiles(world.tiles_y, world.tiles_x, pseed, 1);
        const EvaluationResult res = evaluate_model(oracle, fps, part, 2021);
        if (pseed == 41ULL) z_first = res.report.z_std;
        for (const PredictionRecord& rec : res.records) {
            y.push_back(rec.y_norm);
            mu.push_back(rec.mu);
            sg.push_back(rec.sigma);
        }
    }
    REQUIRE(y.size() > 3000);
    const double cov1 = coverage(y, mu, sg, 1.0);
    const double cov2 = coverage(y, mu, sg, 2.0);
    const ZStats zs = z_stats(y, mu, sg);
    CHECK(cov1 > 0.663);
    CHECK(cov1 < 0.703);
    CHECK(cov2 > 0.94);
    CHECK(zs.std > 0.98);
    CHECK(zs.std < 1.02);
    CHECK(std::abs(zs.mean) < 0.05);

    // halving sigma doubles the z spread exactly
    OraclePredictor halved = oracle;
    halved.scale = 0.5;
    const TilePartition part = partition_tiles(world.tiles_y, world.tiles_x, 41, 1);
    const EvaluationResult res = evaluate_model(halved, fps, part, 2021);
    CHECK(res.report.z_std == doctest::Approx(2.0 * z_first).epsilon(1e-9));
    CHECK(res.report.cov1 < cov1);
}

TEST_CASE("strata pooling groups records by tile stratum") {
    std::map<int, DisturbanceRecord> strata;
    DisturbanceRecord stable;
    stable.tile_id = 0;
    stable.stratum = Stratum::Stable;
    DisturbanceRecord disturbed;
    disturbed.tile_id = 1;
    disturbed.stratum = Stratum::Disturbed;
    DisturbanceRecord unavailable;
    unavailable.tile_id = 2;
    unavailable.available = false;
    strata[0] = stable;
    strata[1] = disturbed;
    strata[2] = unavailable;

    std::vector<PredictionRecord> records{
        {0, 1.0, 1.5, 0.1}, {0, 2.0, 1.5, 0.1}, {0, 3.0, 3.5, 0.1}, {0, 4.0, 3.5, 0.1},
        {1, 1.0, 1.0, 0.1}, {1, 2.0, 2.0, 0.1},
        {2, 9.0, 0.0, 0.1},
    };
    const auto pooled = pooled_strata_r2(records, strata);
    REQUIRE(pooled.count(Stratum::Stable) == 1);
    CHECK(pooled.at(Stratum::Stable).defined);
    CHECK(pooled.at(Stratum::Stable).value == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(pooled.at(Stratum::Disturbed).defined);
    CHECK(pooled.at(Stratum::Disturbed).value == 1.0);
    // no Moderate tile and the unavailable tile is dropped
    CHECK_FALSE(pooled.at(Stratum::Moderate).defined);
    CHECK(pooled.at(Stratum::Moderate).n == 0);
}

TEST_CASE("summary artifacts carry the echo, layout, and exact aggregates") {
    MetricsReport r1;
    r1.log_r2 = 0.8;
    r1.log_rmse = 0.1;
    r1.linear_rmse_mgha = 30.0;
    r1.linear_mae_mgha = 20.0;
    r1.cov1 = 0.68;
    r1.cov2 = 0.95;
    r1.z_mean = 0.01;
    r1.z_std = 1.02;
    r1.n = 100;
    MetricsReport r2 = r1;
    r2.log_r2 = 0.6;
    r2.cov1 = 0.70;
    MetricsReport r3 = r1;
    r3.log_r2 = std::numeric_limits<double>::quiet_NaN();
    r3.r2_defined = false;

    std::vector<MethodSeedReports> methods;
    methods.push_back({"QRF", {r1, r2, r3}});
    methods.push_back({"ANP", {r2, r2, r2}});

    ConfigEcho echo;
    echo.items = {{"world_seed", "7"}, {"holdout_year", "2021"}};

    const std::string csv_path = "/tmp/stanp_table1.csv";
    const std::string json_path = "/tmp/stanp_table1.json";
    write_summary_csv(csv_path, echo, methods);
    write_summary_json(json_path, echo, methods);

    const std::vector<std::string> lines = read_lines(csv_path);
    REQUIRE(lines.size() == 11);  // 2 echo + header + 8 metric rows
    CHECK(lines[0] == "# world_seed=7");
    CHECK(lines[1] == "# holdout_year=2021");
    CHECK(lines[2] == "Metric,QRF,ANP");
    CHECK(lines[3].rfind("Log R2,", 0) == 0);
    CHECK(lines[4].rfind("Log RMSE,", 0) == 0);
    CHECK(lines[5].rfind("Linear RMSE (Mg/ha),", 0) == 0);
    CHECK(lines[6].rfind("Linear MAE (Mg/ha),", 0) == 0);
    CHECK(lines[7].rfind("1-sigma Coverage,", 0) == 0);
    CHECK(lines[8].rfind("2-sigma Coverage,", 0) == 0);
    CHECK(lines[9].rfind("Z-Score Mean,", 0) == 0);
    CHECK(lines[10].rfind("Z-Score Std,", 0) == 0);
    // NaN seed dropped: mean of 0.8 and 0.6, population std 0.1
    CHECK(lines[3].find("0.7 \xC2\xB1 0.1") != std::string::npos);

    nlohmann::json j = nlohmann::json::parse(std::ifstream(json_path));
    CHECK(j["config"]["world_seed"] == "7");
    CHECK(j["methods"]["QRF"]["Log R2"]["mean"].get<double>() == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(j["methods"]["QRF"]["Log R2"]["per_seed"][2].is_null());
    CHECK(std::abs(j["methods"]["ANP"]["1-sigma Coverage"]["std"].get<double>()) < 1e-12);
    CHECK(j["methods"]["QRF"]["n_per_seed"][0] == 100);

    // byte-stable rewrites
    const std::vector<char> before = file_bytes(csv_path);
    write_summary_csv(csv_path, echo, methods);
    CHECK(before == file_bytes(csv_path));
    const std::vector<char> jbefore = file_bytes(json_path);
    write_summary_json(json_path, echo, methods);
    CHECK(jbefore == file_bytes(json_path));

    std::remove(csv_path.c_str());
    std::remove(json_path.c_str());
}

TEST_CASE("strata artifacts mark empty strata and keep pooled values") {
    std::vector<MethodStrata> methods(2);
    methods[0].method = "QRF";
    methods[0].by_stratum[Stratum::Stable] = {0.75, true, 120};
    methods[0].by_stratum[Stratum::Moderate] = {0.0, false, 0};
    methods[0].by_stratum[Stratum::Disturbed] = {0.5, true, 30};
    methods[1].method = "ANP";
    methods[1].by_stratum[Stratum::Stable] = {0.9, true, 120};
    methods[1].by_stratum[Stratum::Moderate] = {0.0, false, 0};
    methods[1].by_stratum[Stratum::Disturbed] = {0.8, true, 30};

    ConfigEcho echo;
    echo.items = {{"seeds", "1,2,3"}};
    const std::string csv_path = "/tmp/stanp_table2.csv";
    const std::string json_path = "/tmp/stanp_table2.json";
    write_strata_csv(csv_path, echo, methods);
    write_strata_json(json_path, echo, methods);

    const std::vector<std::string> lines = read_lines(csv_path);
    REQUIRE(lines.size() == 5);
    CHECK(lines[0] == "# seeds=1,2,3");
    CHECK(lines[1] == "Stratum,QRF,ANP");
    CHECK(lines[2] == "Stable,0.75,0.9");
    CHECK(lines[3] == "Moderate,n/a,n/a");
    CHECK(lines[4] == "Disturbed,0.5,0.8");

    nlohmann::json j = nlohmann::json::parse(std::ifstream(json_path));
    CHECK(j["strata"]["Stable"]["QRF"]["r2"].get<double>() == 0.75);
    CHECK(j["strata"]["Moderate"]["ANP"]["r2"].is_null());
    CHECK(j["strata"]["Disturbed"]["QRF"]["n"] == 30);

    std::remove(csv_path.c_str());
    std::remove(json_path.c_str());
}

TEST_CASE("grid exports are plain delimited text with the echo header") {
    std::vector<GridCell> cells{{2021, 0, 0, 0.5, 0.1}, {2021, 0, 1, 0.25, 0.125}};
    ConfigEcho echo;
    echo.items = {{"kind", "grid"}};
    const std::string path = "/tmp/stanp_grid.csv";
    write_grid_csv(path, echo, cells);
    const std::vector<std::string> lines = read_lines(path);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "# kind=grid");
    CHECK(lines[1] == "year,tile_row,tile_col,mu_norm,sigma_norm");
    CHECK(lines[2] == "2021,0,0,0.5,0.1");
    CHECK(lines[3] == "2021,0,1,0.25,0.125");
    std::remove(path.c_str());
}
