#include "orvicon/frost.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace orvicon;
using namespace orvicon::frost;
using orvicon::testing::flood_fill_components;
using orvicon::testing::reference_idw;

namespace {

FrostConfig cfg(double critical = 0.0) {
    FrostConfig c{critical};
    return c;
}

Snapshot grid_of(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return {rows, cols, std::move(values)};
}

provider::SensorRecord rec(const geo::GridSpec& g, std::uint64_t dev, geo::Cell cell, UnixSeconds ts, double temp,
                           std::uint32_t ctr = 1) {
    auto ll = g.cell_center(cell);
    provider::SensorRecord r;
    r.device_id = dev;
    r.frame_counter = ctr;
    r.timestamp_s = ts;
    r.temperature_cdeg = wire::to_centidegrees(temp);
    r.lat = ll.lat;
    r.lon = ll.lon;
    r.field_id = "f";
    return r;
}

}  // namespace

TEST(Idw, HandExample) {
    std::vector<Reading> readings{{1, {0, 0}, 0.0}, {2, {3, 0}, 3.0}};
    EXPECT_NEAR(idw_interpolate({1, 0}, readings, cfg()), 0.6, 1e-12);
}

TEST(Idw, SnapTieGoesToLowestDeviceId) {
    std::vector<Reading> readings{{5, {-0.1, 0}, 1.0}, {3, {0.1, 0}, 2.0}, {9, {10, 0}, 7.0}};
    EXPECT_DOUBLE_EQ(idw_interpolate({0, 0}, readings, cfg()), 2.0);
    std::vector<Reading> nearest{{5, {0.05, 0}, 1.0}, {3, {0.3, 0}, 2.0}};
    EXPECT_DOUBLE_EQ(idw_interpolate({0, 0}, nearest, cfg()), 1.0);
}

TEST(Idw, SnapEpsilonIsStrict) {
    auto c = cfg();
    c.snap_epsilon_m = 0.5;
    std::vector<Reading> readings{{1, {0.5, 0}, 4.0}, {2, {-2.0, 0}, 0.0}};
    // d == eps does not snap: w = 4 and 1/4
    EXPECT_NEAR(idw_interpolate({0, 0}, readings, c), (4.0 * 4.0) / (4.0 + 0.25), 1e-12);
}

TEST(Idw, NoReadings) {
    try {
        idw_interpolate({0, 0}, {}, cfg());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoReadings);
    }
}

TEST(Snapshot, MatchesBruteForceOnRandomGrids) {
    std::mt19937_64 rng(31337);
    for (int trial = 0; trial < 200; ++trial) {
        geo::GridSpec g{1 + rng() % 16, 1 + rng() % 16, 5.0 + static_cast<double>(rng() % 20), {47.0, 9.0}};
        auto c = cfg();
        c.idw_power = 1.0 + static_cast<double>(rng() % 3);
        std::vector<Reading> readings;
        auto n = 1 + rng() % 5;
        for (std::uint64_t i = 0; i < n; ++i) {
            double x = std::uniform_real_distribution<double>(-5, g.cols * g.cell_size_m)(rng);
            double y = std::uniform_real_distribution<double>(-5, g.rows * g.cell_size_m)(rng);
            if (rng() % 3 == 0) {
                x = static_cast<double>(rng() % g.cols) * g.cell_size_m;
                y = static_cast<double>(rng() % g.rows) * g.cell_size_m;
            }
            readings.push_back({100 + (rng() % 50), {x, y}, std::uniform_real_distribution<double>(-8, 8)(rng)});
        }
        auto snap = field_snapshot(g, readings, c, 1 + static_cast<unsigned>(rng() % 4));
        ASSERT_EQ(snap.temp_c.size(), g.cell_count());
        double lo = readings[0].temp_c, hi = lo;
        for (const auto& r : readings) {
            lo = std::min(lo, r.temp_c);
            hi = std::max(hi, r.temp_c);
        }
        for (std::size_t row = 0; row < g.rows; ++row) {
            for (std::size_t col = 0; col < g.cols; ++col) {
                double expect = reference_idw(g.cell_center_local({row, col}), readings, c.idw_power, c.snap_epsilon_m);
                ASSERT_EQ(snap.at(row, col), expect) << "trial " << trial << " cell " << row << "," << col;
                ASSERT_GE(snap.at(row, col), lo - 1e-9);
                ASSERT_LE(snap.at(row, col), hi + 1e-9);
            }
        }
    }
}

TEST(Snapshot, ThreadedEqualsSequential) {
    geo::GridSpec g{37, 23, 3.0, {47.0, 9.0}};
    std::vector<Reading> readings{{1, {5, 5}, -2.0}, {2, {60, 90}, 3.0}, {3, {10, 100}, 1.0}};
    auto one = field_snapshot(g, readings, cfg(), 1);
    for (unsigned t : {2u, 3u, 7u, 64u, 5000u}) EXPECT_EQ(field_snapshot(g, readings, cfg(), t).temp_c, one.temp_c);
}

TEST(Snapshot, LatestReadingPerDevice) {
    geo::GridSpec g{4, 4, 10.0, {47.0, 9.0}};
    std::vector<provider::SensorRecord> records{rec(g, 1, {0, 0}, 100, 5.0, 1), rec(g, 1, {0, 0}, 200, 1.0, 2),
                                                rec(g, 1, {0, 0}, 300, -9.0, 3), rec(g, 2, {3, 3}, 50, 2.0, 1)};
    auto readings = latest_readings(g, records, 250);
    ASSERT_EQ(readings.size(), 2u);
    EXPECT_DOUBLE_EQ(readings[0].temp_c, 1.0);
    EXPECT_NEAR(readings[0].position.x, 0.0, 1e-6);
    EXPECT_NEAR(readings[1].position.x, 30.0, 1e-6);
    EXPECT_NEAR(readings[1].position.y, 30.0, 1e-6);
    EXPECT_TRUE(latest_readings(g, records, 10).empty());
    EXPECT_THROW(field_snapshot(g, records, cfg(), 10), Error);
}

TEST(Zones, LShapeAndIsolatedCell) {
    // row 0 is the bottom row
    auto s = grid_of(4, 4, {-1, -1, 5, 5,  //
                            -1, 5, 5, 5,   //
                            -1, 5, 5, -2,  //
                            5, 5, 5, 5});
    auto zones = detect_zones(s, 0.0);
    ASSERT_EQ(zones.size(), 2u);
    EXPECT_EQ(zones[0].zone_id, 1u);
    EXPECT_EQ(zones[0].cells.size(), 4u);
    EXPECT_EQ(zones[0].bbox, (CellBox{0, 0, 2, 1}));
    EXPECT_DOUBLE_EQ(zones[0].min_temp_c, -1);
    EXPECT_EQ(zones[1].cells, (std::vector<geo::Cell>{{2, 3}}));
    EXPECT_DOUBLE_EQ(zones[1].min_temp_c, -2);
    EXPECT_EQ(render_zone_map(s, zones), "....\n1..2\n1...\n11..\n");
}

TEST(Zones, ThresholdIsInclusiveAndDiagonalsSeparate) {
    auto s = grid_of(2, 2, {0, 1, 1, 0});
    auto zones = detect_zones(s, 0.0);
    EXPECT_EQ(zones.size(), 2u);
    EXPECT_TRUE(detect_zones(s, -0.01).empty());
}

TEST(Zones, MatchFloodFillOnRandomFields) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 300; ++trial) {
        auto rows = 1 + rng() % 12, cols = 1 + rng() % 12;
        Snapshot s{rows, cols, {}};
        for (std::size_t i = 0; i < rows * cols; ++i) s.temp_c.push_back(static_cast<double>(rng() % 7) - 3.0);
        auto zones = detect_zones(s, 0.0);
        auto comps = flood_fill_components(s, 0.0);
        ASSERT_EQ(zones.size(), comps.size());
        std::set<std::set<geo::Cell>> a, b(comps.begin(), comps.end());
        for (const auto& z : zones) {
            a.insert(std::set<geo::Cell>(z.cells.begin(), z.cells.end()));
            for (const auto& c : z.cells) EXPECT_TRUE(z.bbox.contains(c));
        }
        EXPECT_EQ(a, b);
        for (std::size_t i = 1; i < zones.size(); ++i) EXPECT_LT(zones[i - 1].cells.front(), zones[i].cells.front());
    }
}

TEST(Eta, LinearExample) {
    std::vector<TimedReading> r{{0, 2.0}, {600, 1.5}, {1200, 1.0}};
    auto eta = cooling_eta(r, 0.0, 6);
    ASSERT_TRUE(eta);
    EXPECT_NEAR(*eta, 1200.0, 1e-9);
}

TEST(Eta, AlreadyColdWarmingAndErrors) {
    std::vector<TimedReading> cold{{0, 2.0}, {600, -0.5}};
    EXPECT_EQ(cooling_eta(cold, 0.0, 6), 0.0);
    std::vector<TimedReading> warming{{0, 1.0}, {600, 2.0}};
    EXPECT_FALSE(cooling_eta(warming, 0.0, 6));
    std::vector<TimedReading> one{{0, 1.0}};
    EXPECT_THROW(cooling_eta(one, 0.0, 6), Error);
    std::vector<TimedReading> same_t{{5, 1.0}, {5, 2.0}};
    EXPECT_THROW(cooling_eta(same_t, 0.0, 6), Error);
}

TEST(Eta, UsesOnlyTrendWindow) {
    // old readings rising, last three falling 1 degree per 600 s
    std::vector<TimedReading> r{{0, -5}, {600, 0}, {1200, 5}, {1800, 3}, {2400, 2}, {3000, 1}};
    auto eta = cooling_eta(r, 0.0, 3);
    ASSERT_TRUE(eta);
    EXPECT_NEAR(*eta, 600.0, 1e-9);
}

TEST(Alert, CornerColdThreeByThree) {
    geo::GridSpec g{3, 3, 10.0, {47.0, 9.0}};
    std::vector<provider::SensorRecord> records;
    std::uint64_t dev = 1;
    for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            records.push_back(rec(g, dev++, {r, c}, 1000, r == 0 && c == 0 ? -3.0 : 4.0));
        }
    }
    auto alert = build_alert(g, records, cfg(-1.0), 1000);
    ASSERT_TRUE(alert);
    ASSERT_EQ(alert->zones.size(), 1u);
    EXPECT_EQ(alert->zones[0].cells, (std::vector<geo::Cell>{{0, 0}}));
    EXPECT_NEAR(alert->coverage_fraction, 1.0 / 9.0, 1e-12);
    EXPECT_DOUBLE_EQ(alert->min_temp_c, -3.0);
    EXPECT_FALSE(build_alert(g, records, cfg(-10.0), 1000));
}

TEST(Alert, EtaPerSensor) {
    geo::GridSpec g{2, 2, 10.0, {47.0, 9.0}};
    std::vector<provider::SensorRecord> records{
        rec(g, 1, {0, 0}, 0, 2.0, 1), rec(g, 1, {0, 0}, 600, 1.0, 2), rec(g, 1, {0, 0}, 1200, -1.0, 3),
        rec(g, 2, {1, 1}, 0, 5.0, 1), rec(g, 2, {1, 1}, 600, 5.5, 2),
        rec(g, 3, {0, 1}, 0, 4.0, 1),
    };
    auto alert = build_alert(g, records, cfg(0.0), 1200);
    ASSERT_TRUE(alert);
    EXPECT_EQ(alert->eta_s.at(1), 0.0);
    EXPECT_FALSE(alert->eta_s.contains(2));
    EXPECT_FALSE(alert->eta_s.contains(3));
}

TEST(Config, Validation) {
    EXPECT_NO_THROW(cfg().validate());
    auto c = cfg();
    c.idw_power = 0;
    EXPECT_THROW(c.validate(), Error);
    c = cfg();
    c.trend_window = 1;
    EXPECT_THROW(c.validate(), Error);
    c = cfg(std::numeric_limits<double>::quiet_NaN());
    EXPECT_THROW(c.validate(), Error);
    c = cfg();
    c.snap_epsilon_m = -1;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Output, Csv) {
    std::ostringstream out;
    write_snapshot_csv(out, grid_of(1, 2, {1.5, -0.25}));
    EXPECT_EQ(out.str(), "row,col,temp_c\n0,0,1.5000\n0,1,-0.2500\n");
}
