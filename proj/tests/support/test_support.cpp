#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

#ifndef ORVICON_SCENARIO_DIR
#error "ORVICON_SCENARIO_DIR must be defined"
#endif

namespace orvicon::testing {

namespace fs = std::filesystem;
using wire::json;

fs::path scenario_path(std::string_view name) { return fs::path(ORVICON_SCENARIO_DIR) / (std::string(name) + ".json"); }

harness::ScenarioConfig load_named(std::string_view name) { return harness::load_scenario(scenario_path(name)); }

TempDir::TempDir() {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("orvicon-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

namespace {

class Dice {
public:
    explicit Dice(std::uint64_t seed) : engine_(seed) {}
    std::int64_t range(std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    bool chance(double p) { return std::bernoulli_distribution(p)(engine_); }
    template <typename T>
    const T& pick(const std::vector<T>& v) { return v.at(static_cast<std::size_t>(range(0, static_cast<std::int64_t>(v.size()) - 1))); }

private:
    std::mt19937_64 engine_;
};

json cert(const std::string& id, UnixSeconds valid_until) {
    return {{"cert_id", id}, {"connector_build_hash", "ab12cd34"}, {"issued_by", "test-ca"}, {"valid_until", valid_until}};
}

}  // namespace

harness::ScenarioConfig random_sovereignty_scenario(std::uint64_t seed) {
    Dice dice(seed * 0x9E3779B97F4A7C15ULL + 1);
    const auto duration = dice.range(40, 90) * 60;
    const auto t_end = kT0 + duration;
    const auto rows = dice.range(5, 9);
    const auto cols = dice.range(5, 9);
    const double cell = 10.0;
    const geo::LatLon origin{47.0 + dice.real(0, 1), 9.0 + dice.real(0, 1)};
    geo::GridSpec grid{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols), cell, origin};

    json sensors = json::array();
    std::set<std::pair<std::int64_t, std::int64_t>> used;
    const auto n_sensors = dice.range(2, 6);
    for (std::int64_t i = 0; i < n_sensors; ++i) {
        std::pair<std::int64_t, std::int64_t> rc;
        do rc = {dice.range(0, rows - 1), dice.range(0, cols - 1)};
        while (!used.insert(rc).second);
        sensors.push_back({{"device_id", 500 + i},
                           {"cell", {rc.first, rc.second}},
                           {"report_period_s", dice.pick(std::vector<std::int64_t>{120, 300, 600})},
                           {"first_report_s", kT0 + dice.range(0, 119)},
                           {"field_id", "field-x"},
                           {"registered", i == 0 || !dice.chance(0.15)}});
    }
    sensors[0]["registered"] = true;

    const std::vector<std::string> consumers = {"c1", "c2", "rev", "late", "eve"};
    json members = json::array({
        {{"member_id", "gw"}, {"role", "gateway"}, {"cert_id", "cert-ok"}, {"enroll_at_s", kT0}},
        {{"member_id", "farm"}, {"role", "provider"}, {"cert_id", "cert-ok"}, {"enroll_at_s", kT0}},
        {{"member_id", "c1"}, {"role", "consumer"}, {"cert_id", "cert-ok"}, {"enroll_at_s", kT0 + dice.range(0, 300)}},
        {{"member_id", "c2"}, {"role", "consumer"}, {"cert_id", "cert-ok"}, {"enroll_at_s", kT0 + dice.range(0, 900)}},
        {{"member_id", "rev"}, {"role", "consumer"}, {"cert_id", "cert-ok"}, {"enroll_at_s", kT0}},
        {{"member_id", "late"}, {"role", "consumer"}, {"cert_id", "cert-ok"}},
        {{"member_id", "eve"}, {"role", "consumer"}, {"cert_id", dice.chance(0.5) ? "cert-rogue" : "cert-old"}},
    });

    auto random_box = [&] {
        auto r0 = dice.range(0, rows - 1), r1 = dice.range(0, rows - 1);
        auto c0 = dice.range(0, cols - 1), c1 = dice.range(0, cols - 1);
        auto lo = grid.cell_center({static_cast<std::size_t>(std::min(r0, r1)), static_cast<std::size_t>(std::min(c0, c1))});
        auto hi = grid.cell_center({static_cast<std::size_t>(std::max(r0, r1)), static_cast<std::size_t>(std::max(c0, c1))});
        const double pad = 1e-6;
        return json{{"lat_min", lo.lat - pad}, {"lat_max", hi.lat + pad}, {"lon_min", lo.lon - pad}, {"lon_max", hi.lon + pad}};
    };

    json offers = json::array();
    std::vector<std::string> offer_keys;
    std::vector<std::pair<std::int64_t, std::int64_t>> offer_windows;
    const auto n_offers = dice.range(1, 3);
    for (std::int64_t i = 0; i < n_offers; ++i) {
        auto from = kT0 + dice.range(-600, duration / 2);
        auto to = from + dice.range(600, duration);
        json policy = {{"policy_id", "pol-" + std::to_string(i)},
                       {"time_window", {{"from", from}, {"to", to}}},
                       {"max_requests_per_hour", dice.range(1, 4)},
                       {"expires_at", kT0 + dice.range(duration / 3, duration * 3 / 2)},
                       {"purpose", "test"}};
        if (dice.chance(0.5)) policy["spatial_scope"] = random_box();
        std::string key = "o" + std::to_string(i);
        offer_keys.push_back(key);
        offer_windows.emplace_back(from, to);
        offers.push_back({{"key", key}, {"provider", "farm"}, {"dataset_id", "field-x"}, {"publish_at_s", kT0 + dice.range(0, 600)}, {"policy", policy}});
    }

    json script = json::array();
    auto at = [&](std::int64_t lo, std::int64_t hi) { return std::clamp<std::int64_t>(kT0 + dice.range(lo, hi), kT0, t_end); };
    auto variant = [&]() -> std::string {
        auto roll = dice.range(0, 19);
        if (roll == 0) return "bad_signature";
        if (roll == 1) return "forged_sender";
        if (roll == 2) return "replay";
        return "none";
    };

    script.push_back({{"at_s", at(60, 600)}, {"actor", "late"}, {"action", "enroll"}});
    script.push_back({{"at_s", at(0, 600)}, {"actor", "eve"}, {"action", "enroll"}});
    for (const auto& consumer : consumers) {
        for (std::size_t oi = 0; oi < offer_keys.size(); ++oi) {
            const auto& key = offer_keys[oi];
            if (!dice.chance(0.8)) continue;
            auto t_req = dice.range(600, duration / 2);
            script.push_back({{"at_s", at(t_req, t_req)}, {"actor", consumer}, {"action", "request_contract"}, {"offer", key}});
            if (dice.chance(0.75)) {
                auto t_sign = t_req + dice.range(-60, 600);
                script.push_back({{"at_s", at(t_sign, t_sign)}, {"actor", consumer}, {"action", "countersign"}, {"offer", key}});
                // pulls a compliant client would make
                const auto [w_from, w_to] = offer_windows[oi];
                for (auto k = dice.range(1, 4); k > 0; --k) {
                    auto t_pull = dice.range(t_sign + 1, duration);
                    auto from = dice.range(w_from, w_to - 60);
                    script.push_back({{"at_s", at(t_pull, t_pull)}, {"actor", consumer}, {"action", "data_request"}, {"offer", key},
                                      {"window", {{"from", from}, {"to", dice.range(from, w_to)}}}});
                }
            }
            auto pulls = dice.range(2, 7);
            for (std::int64_t k = 0; k < pulls; ++k) {
                auto t_pull = dice.range(t_req - 120, duration);
                json a = {{"at_s", at(t_pull, t_pull)}, {"actor", consumer}, {"action", "data_request"}, {"offer", key}};
                if (dice.chance(0.5)) {
                    a["window_last_s"] = dice.range(300, 3600);
                } else {
                    auto from = kT0 + dice.range(-900, duration);
                    a["window"] = {{"from", from}, {"to", from + dice.range(0, 2400)}};
                }
                if (dice.chance(0.3)) a["bbox"] = random_box();
                if (dice.chance(0.1)) a["contract_of"] = dice.pick(consumers);
                auto v = variant();
                if (v != "none") a["variant"] = v;
                if (v == "forged_sender") a["target"] = dice.pick(consumers);
                script.push_back(std::move(a));
            }
            if (dice.chance(0.15)) {
                script.push_back({{"at_s", at(duration / 2, duration)}, {"actor", "farm"}, {"action", "revoke_contract"},
                                  {"offer", key}, {"contract_of", consumer}});
            }
        }
    }
    script.push_back({{"at_s", at(duration / 4, duration)}, {"actor", "dataspace"}, {"action", "revoke_member"}, {"target", "rev"}});
    if (dice.chance(0.3)) {
        script.push_back({{"at_s", at(duration / 2, duration)}, {"actor", "dataspace"}, {"action", "revoke_member"}, {"target", "farm"}});
    }

    json doc = {
        {"schema_version", 1},
        {"name", "random-" + std::to_string(seed)},
        {"seed", seed},
        {"clock", {{"start_s", kT0}, {"end_s", t_end}, {"tick_s", dice.pick(std::vector<std::int64_t>{1, 5, 10})}}},
        {"field",
         {{"rows", rows},
          {"cols", cols},
          {"cell_size_m", cell},
          {"origin", {{"lat", origin.lat}, {"lon", origin.lon}}},
          {"elevation_plane", {{"base_m", 300.0}, {"per_row_m", dice.real(-1, 1)}, {"per_col_m", dice.real(-1, 1)}}},
          {"climate", {{"t_mean_c", dice.real(-3, 6)}, {"noise_sigma_c", 0.2}}}}},
        {"radio", {{"duplicate_fraction", dice.real(0, 0.3)}, {"replay_delay_s", dice.range(0, 30)}}},
        {"sensors", sensors},
        {"gateway", {{"member_id", "gw"}, {"cell", {0, 0}}, {"flush_max_frames", dice.range(1, 32)}, {"flush_max_age_s", dice.range(0, 10)}}},
        {"dataspace",
         {{"operator_id", "dataspace"},
          {"approved_certs", {"cert-ok", "cert-old"}},
          {"certificates", {cert("cert-ok", kT0 + 365 * 86400), cert("cert-old", kT0 - 1), cert("cert-rogue", kT0 + 365 * 86400)}}}},
        {"members", members},
        {"offers", offers},
        {"provider_agent", {{"auto_accept", true}, {"reject_consumers", dice.chance(0.3) ? json::array({"c2"}) : json::array()}}},
        {"script", script},
        {"frost", {{"critical_temp_c", 0.0}}},
    };
    return harness::parse_scenario(doc);
}

BruteForceScan brute_force_scan(std::span<const audit::AuditRecord> log) {
    BruteForceScan out;
    auto name = [](const audit::AuditRecord& r) { return std::string(audit::to_string(r.event)); };
    for (std::size_t i = 0; i < log.size(); ++i) {
        const auto& r = log[i];
        if (name(r) == "POLICY_DENY") ++out.denials;
        if (name(r) != "DATA_TRANSFER") continue;
        ++out.transfers;
        const auto& d = r.details;
        const auto count = d.at("record_count").get<std::uint64_t>();
        out.records_by_actor[r.actor] += count;
        auto bad = [&](const std::string& what) { out.violations.push_back("seq " + std::to_string(r.seq) + ": " + what); };

        // membership: enrolled before, not revoked since
        bool enrolled = false;
        for (std::size_t j = 0; j < i; ++j) {
            const auto& p = log[j];
            if (name(p) == "ENROLL" && p.details.value("member_id", "") == r.actor) enrolled = true;
            if (name(p) == "REVOKE" && p.details.contains("member_id") && p.details.at("member_id") == r.actor) enrolled = false;
        }
        if (!enrolled) bad("recipient " + r.actor + " not an enrolled, unrevoked member");

        // contract: latest transition state and the policy negotiated on request
        const auto cid = d.at("contract_id").get<std::string>();
        std::string state;
        std::string consumer;
        json policy;
        for (std::size_t j = 0; j < i; ++j) {
            const auto& p = log[j];
            if (!p.details.is_object() || !p.details.contains("contract_id") || p.details.at("contract_id") != cid) continue;
            auto ev = name(p);
            if (ev == "REQUEST") {
                consumer = p.details.at("consumer_id").get<std::string>();
                policy = p.details.at("policy");
            }
            if (ev == "REQUEST" || ev == "DECISION" || ev == "COUNTERSIGN" || ev == "REVOKE") {
                state = p.details.at("to").get<std::string>();
            }
        }
        if (state != "ACTIVE") bad(cid + " in state '" + state + "' at transfer time");
        if (consumer != r.actor) bad(cid + " was negotiated by '" + consumer + "'");
        if (policy.is_null()) continue;
        if (r.at >= policy.at("expires_at").get<UnixSeconds>()) bad("transfer after expiry");
        if (count == 0) continue;
        const auto& got = d.at("delivered");
        auto from = policy.at("time_window").at("from").get<UnixSeconds>();
        auto to = policy.at("time_window").at("to").get<UnixSeconds>();
        if (got.at("ts_min").get<UnixSeconds>() < from || got.at("ts_max").get<UnixSeconds>() > to) {
            bad("delivered timestamps outside the policy window");
        }
        const auto& scope = policy.at("spatial_scope");
        if (!scope.is_null()) {
            const auto& e = got.at("extent");
            if (e.at("lat_min").get<double>() < scope.at("lat_min").get<double>() ||
                e.at("lat_max").get<double>() > scope.at("lat_max").get<double>() ||
                e.at("lon_min").get<double>() < scope.at("lon_min").get<double>() ||
                e.at("lon_max").get<double>() > scope.at("lon_max").get<double>()) {
                bad("delivered records outside the spatial scope");
            }
        }
    }
    return out;
}

std::vector<std::set<geo::Cell>> flood_fill_components(const frost::Snapshot& snapshot, double threshold) {
    std::vector<std::set<geo::Cell>> out;
    std::set<geo::Cell> seen;
    for (std::size_t r = 0; r < snapshot.rows; ++r) {
        for (std::size_t c = 0; c < snapshot.cols; ++c) {
            if (snapshot.at(r, c) > threshold || seen.contains({r, c})) continue;
            std::set<geo::Cell> comp;
            std::vector<geo::Cell> stack{{r, c}};
            while (!stack.empty()) {
                auto cell = stack.back();
                stack.pop_back();
                if (seen.contains(cell) || snapshot.at(cell.row, cell.col) > threshold) continue;
                seen.insert(cell);
                comp.insert(cell);
                if (cell.row > 0) stack.push_back({cell.row - 1, cell.col});
                if (cell.row + 1 < snapshot.rows) stack.push_back({cell.row + 1, cell.col});
                if (cell.col > 0) stack.push_back({cell.row, cell.col - 1});
                if (cell.col + 1 < snapshot.cols) stack.push_back({cell.row, cell.col + 1});
            }
            out.push_back(std::move(comp));
        }
    }
    return out;
}

double reference_idw(geo::LocalPoint q, std::span<const frost::Reading> readings, double power, double snap_eps) {
    std::vector<std::pair<double, const frost::Reading*>> near;
    for (const auto& r : readings) {
        double d = std::hypot(q.x - r.position.x, q.y - r.position.y);
        if (d < snap_eps) near.push_back({d, &r});
    }
    if (!near.empty()) {
        auto best = std::ranges::min_element(near, [](const auto& a, const auto& b) {
            return std::tie(a.first, a.second->device_id) < std::tie(b.first, b.second->device_id);
        });
        return best->second->temp_c;
    }
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : readings) {
        double w = std::pow(std::hypot(q.x - r.position.x, q.y - r.position.y), -power);
        num += w * r.temp_c;
        den += w;
    }
    return num / den;
}

}  // namespace orvicon::testing
