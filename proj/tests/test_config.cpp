#include "orvicon/config.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace orvicon;
using namespace orvicon::harness;
using orvicon::testing::scenario_path;

namespace {

json load_doc(const std::string& name) {
    std::ifstream in(scenario_path(name));
    return json::parse(in);
}

std::vector<std::string> diagnostics_of(const json& doc) {
    try {
        parse_scenario(doc);
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
        return e.diagnostics();
    }
    return {};
}

bool mentions(const std::vector<std::string>& diag, const std::string& needle) {
    for (const auto& d : diag) {
        if (d.find(needle) != std::string::npos) return true;
    }
    return false;
}

std::string joined(const std::vector<std::string>& diag) {
    std::string out;
    for (const auto& d : diag) out += d + "\n";
    return out;
}

}  // namespace

class ShippedScenario : public ::testing::TestWithParam<std::string> {};

TEST_P(ShippedScenario, ParsesAndRoundTrips) {
    auto cfg = load_scenario(scenario_path(GetParam()));
    EXPECT_FALSE(cfg.sensors.empty());
    auto doc = scenario_to_json(cfg);
    auto again = parse_scenario(doc);
    EXPECT_EQ(scenario_to_json(again), doc);
}

INSTANTIATE_TEST_SUITE_P(All, ShippedScenario,
                         ::testing::Values("minimal", "corner_frost", "no_frost", "adversary", "reference", "net_9x2h"));

TEST(Config, ReferenceContents) {
    auto cfg = load_scenario(scenario_path("reference"));
    EXPECT_EQ(cfg.sensors.size(), 9u);
    EXPECT_DOUBLE_EQ(cfg.sim.radio.duplicate_fraction, 0.2);
    ASSERT_TRUE(cfg.frost);
    EXPECT_EQ(cfg.sim.field.elevation_m.size(), cfg.sim.field.grid.cell_count());
    EXPECT_TRUE(cfg.find_member(cfg.gateway.member_id));
    EXPECT_GE(cfg.offers.size(), 2u);
}

TEST(Config, DefaultsApplied) {
    auto doc = load_doc("minimal");
    auto& sensor = doc["sensors"][0];
    sensor.erase("report_period_s");
    sensor.erase("first_report_s");
    doc["gateway"].erase("flush_max_frames");
    doc["gateway"].erase("flush_max_age_s");
    auto cfg = parse_scenario(doc);
    EXPECT_EQ(cfg.sensors[0].sim.report_period_s, 600);
    EXPECT_EQ(cfg.sensors[0].sim.first_report_s, cfg.clock.start_s);
    EXPECT_EQ(cfg.gateway.flush.max_pending, 32u);
    EXPECT_EQ(cfg.gateway.flush.max_age_s, 5);
}

TEST(Config, UnknownKeysReportedWithPath) {
    auto doc = load_doc("minimal");
    doc["bogus"] = 1;
    doc["sensors"][0]["colour"] = "red";
    doc["field"]["climate"]["humidity"] = 0.5;
    auto diag = diagnostics_of(doc);
    EXPECT_TRUE(mentions(diag, "$.bogus: unknown key")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.sensors[0].colour: unknown key")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.field.climate.humidity: unknown key")) << joined(diag);
}

TEST(Config, TypeErrors) {
    auto doc = load_doc("minimal");
    doc["seed"] = "seven";
    doc["clock"]["tick_s"] = 1.5;
    doc["sensors"][0]["cell"] = {1};
    auto diag = diagnostics_of(doc);
    EXPECT_TRUE(mentions(diag, "$.seed: expected")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.clock.tick_s: expected an integer")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.sensors[0].cell: expected [row, col]")) << joined(diag);
}

TEST(Config, MissingRequired) {
    auto doc = load_doc("minimal");
    doc.erase("clock");
    doc["members"][0].erase("member_id");
    auto diag = diagnostics_of(doc);
    EXPECT_TRUE(mentions(diag, "$.clock: required field missing")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.members[0].member_id")) << joined(diag);
}

TEST(Config, ValueRanges) {
    auto doc = load_doc("minimal");
    doc["schema_version"] = 2;
    doc["radio"] = {{"duplicate_fraction", 1.5}};
    doc["sensors"][0]["cell"] = {99, 0};
    doc["sensors"][0]["battery_pct"] = 101;
    doc["field"]["rows"] = 0;
    auto diag = diagnostics_of(doc);
    EXPECT_TRUE(mentions(diag, "$.schema_version: unsupported version 2")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.radio.duplicate_fraction")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.sensors[0].cell: outside")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.sensors[0].battery_pct")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.field.rows")) << joined(diag);
}

TEST(Config, ElevationGrid) {
    auto doc = load_doc("minimal");
    auto rows = doc["field"]["rows"].get<std::size_t>();
    auto cols = doc["field"]["cols"].get<std::size_t>();
    doc["field"].erase("elevation_plane");
    json grid = json::array();
    for (std::size_t r = 0; r < rows; ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < cols; ++c) row.push_back(static_cast<double>(r * 10 + c));
        grid.push_back(row);
    }
    doc["field"]["elevation_m"] = grid;
    auto cfg = parse_scenario(doc);
    EXPECT_DOUBLE_EQ(cfg.sim.field.elevation({1, 2}), 12.0);

    grid.back().erase(0);
    doc["field"]["elevation_m"] = grid;
    EXPECT_TRUE(mentions(diagnostics_of(doc), "$.field.elevation_m"));
    doc["field"]["elevation_plane"] = {{"base_m", 1.0}};
    EXPECT_TRUE(mentions(diagnostics_of(doc), "either elevation_m or elevation_plane"));
}

TEST(Config, BrokenReferences) {
    auto doc = load_doc("adversary");
    doc["gateway"]["member_id"] = "farm";
    doc["offers"][0]["provider"] = "frostwatch";
    doc["offers"][0]["dataset_id"] = "nowhere";
    doc["members"][0]["cert_id"] = "cert-missing";
    doc["script"].push_back({{"at_s", doc["clock"]["start_s"]}, {"actor", "ghost"}, {"action", "catalog_query"}});
    doc["script"].push_back({{"at_s", doc["clock"]["start_s"]}, {"actor", "frostwatch"}, {"action", "revoke_member"}, {"target", "farm"}});
    doc["script"].push_back({{"at_s", doc["clock"]["start_s"]}, {"actor", "frostwatch"}, {"action", "data_request"}, {"offer", "temps"}});
    doc["script"].push_back({{"at_s", doc["clock"]["start_s"]}, {"actor", "frostwatch"}, {"action", "countersign"}, {"offer", "nope"}});
    doc["script"].push_back({{"at_s", doc["clock"]["start_s"]}, {"actor", "frostwatch"}, {"action", "catalog_query"}, {"variant", "forged_sender"}});
    doc["script"].push_back({{"at_s", 0}, {"actor", "frostwatch"}, {"action", "dance"}});
    auto diag = diagnostics_of(doc);
    EXPECT_TRUE(mentions(diag, "$.gateway.member_id: must name a member with role gateway")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.offers[0].provider")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.offers[0].dataset_id")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "$.members[0].cert_id: unknown certificate")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "unknown member 'ghost'")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "only the operator revokes members")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "data_request needs window")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "unknown offer 'nope'")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "forged_sender needs")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "unknown action 'dance'")) << joined(diag);
    EXPECT_TRUE(mentions(diag, "outside the clock range")) << joined(diag);
}

TEST(Config, NotAnObject) {
    auto diag = diagnostics_of(json::array());
    ASSERT_EQ(diag.size(), 1u);
    EXPECT_EQ(diag[0], "$: expected an object");
}

TEST(Config, LoadErrors) {
    orvicon::testing::TempDir dir;
    EXPECT_THROW(load_scenario(dir / "missing.json"), ConfigError);
    {
        std::ofstream out(dir / "bad.json");
        out << "{ not json";
    }
    EXPECT_THROW(load_scenario(dir / "bad.json"), ConfigError);
}

TEST(Config, RandomScenariosAreValid) {
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        auto cfg = orvicon::testing::random_sovereignty_scenario(seed);
        EXPECT_EQ(scenario_to_json(parse_scenario(scenario_to_json(cfg))), scenario_to_json(cfg));
    }
}
