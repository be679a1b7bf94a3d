#include "orvicon/sensorsim.hpp"

#include "orvicon/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace orvicon::sim {

namespace {

constexpr std::int64_t kSecondsPerDay = 86400;

std::int64_t second_of_day(UnixSeconds t) noexcept {
    auto sod = t % kSecondsPerDay;
    return sod < 0 ? sod + kSecondsPerDay : sod;
}

// first k >= 0 with first + k*period >= t
std::int64_t first_index_at_or_after(UnixSeconds first, std::int64_t period, UnixSeconds t) {
    if (t <= first) return 0;
    return (t - first + period - 1) / period;
}

bool is_duplicated(const Scenario& s, std::uint64_t device_id, std::uint32_t counter) {
    if (s.radio.duplicate_fraction <= 0.0) return false;
    auto h = mix64(mix64(s.seed ^ 0xD0D0CAFEULL) ^ mix64(device_id) ^ (std::uint64_t{counter} << 1));
    return unit_interval(h) < s.radio.duplicate_fraction;
}

}  // namespace

void FieldModel::validate() const {
    grid.validate();
    if (elevation_m.size() != grid.cell_count()) {
        fail(ErrorCode::InvalidModel, "elevation grid has " + std::to_string(elevation_m.size()) + " cells, expected " +
                                          std::to_string(grid.cell_count()));
    }
    if (!(climate.diurnal_amp_c >= 0.0)) fail(ErrorCode::InvalidModel, "diurnal_amp_c must be >= 0");
    if (!(climate.noise_sigma_c >= 0.0)) fail(ErrorCode::InvalidModel, "noise_sigma_c must be >= 0");
    for (const auto& e : frost_events) {
        if (!(e.start_s < e.end_s)) fail(ErrorCode::InvalidModel, "frost event needs start_s < end_s");
        if (!(e.cooling_rate_c_per_h >= 0.0)) fail(ErrorCode::InvalidModel, "cooling_rate_c_per_h must be >= 0");
        if (!(e.pooling_gain >= 0.0)) fail(ErrorCode::InvalidModel, "pooling_gain must be >= 0");
    }
}

void Scenario::validate() const {
    field.validate();
    std::set<std::uint64_t> ids;
    for (const auto& s : sensors) {
        if (!ids.insert(s.device_id).second) {
            fail(ErrorCode::InvalidModel, "duplicate device_id " + std::to_string(s.device_id));
        }
        if (s.report_period_s <= 0) fail(ErrorCode::InvalidModel, "report_period_s must be > 0");
        if (!field.grid.contains(s.cell)) fail(ErrorCode::CellOutOfRange, "sensor cell outside grid");
        if (s.battery_pct > 100) fail(ErrorCode::InvalidModel, "battery_pct must be <= 100");
    }
    if (!(radio.duplicate_fraction >= 0.0 && radio.duplicate_fraction <= 1.0)) {
        fail(ErrorCode::InvalidModel, "duplicate_fraction must lie in [0, 1]");
    }
    if (radio.replay_delay_s < 0) fail(ErrorCode::InvalidModel, "replay_delay_s must be >= 0");
}

double normal_from_key(std::uint64_t key) noexcept {
    double u1 = unit_interval(mix64(key));
    double u2 = unit_interval(mix64(key ^ 0x5851F42D4C957F2DULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double true_temperature(const FieldModel& model, geo::Cell cell, UnixSeconds t, std::uint64_t seed) {
    if (!model.grid.contains(cell)) {
        fail(ErrorCode::CellOutOfRange,
             "cell (" + std::to_string(cell.row) + "," + std::to_string(cell.col) + ") outside grid");
    }
    const auto& c = model.climate;
    double phase = 2.0 * std::numbers::pi * static_cast<double>(second_of_day(t) - c.t_peak_s) / kSecondsPerDay;
    double temp = c.t_mean_c + c.diurnal_amp_c * std::sin(phase + std::numbers::pi / 2.0);

    if (!model.frost_events.empty()) {
        auto [lo, hi] = std::minmax_element(model.elevation_m.begin(), model.elevation_m.end());
        double max_elev = *hi;
        double range = *hi - *lo;
        double depth = max_elev - model.elevation(cell);
        for (const auto& e : model.frost_events) {
            if (t < e.start_s) continue;
            double hours = static_cast<double>(std::min(t, e.end_s) - e.start_s) / 3600.0;
            temp -= e.cooling_rate_c_per_h * hours * (1.0 + e.pooling_gain * depth / std::max(1.0, range));
        }
    }

    if (c.noise_sigma_c > 0.0) {
        auto key = mix64(seed) ^ mix64(0xCE11ULL + model.grid.index(cell)) ^ mix64(static_cast<std::uint64_t>(t) * 3 + 1);
        temp += c.noise_sigma_c * normal_from_key(key);
    }
    return temp;
}

std::vector<Emission> emission_schedule(const Scenario& scenario, UnixSeconds t0, UnixSeconds t1) {
    std::vector<Emission> out;
    if (t1 < t0) return out;
    const auto delay = scenario.radio.replay_delay_s;

    for (const auto& sensor : scenario.sensors) {
        auto make = [&](std::int64_t k) {
            wire::UplinkFrame f;
            f.device_id = sensor.device_id;
            f.frame_counter = sensor.next_counter + static_cast<std::uint32_t>(k);
            f.timestamp_s = static_cast<std::uint64_t>(sensor.first_report_s + k * sensor.report_period_s);
            f.temperature_cdeg = wire::to_centidegrees(
                true_temperature(scenario.field, sensor.cell, static_cast<UnixSeconds>(f.timestamp_s), scenario.seed));
            f.battery_pct = sensor.battery_pct;
            return wire::with_crc(f);
        };

        for (auto k = first_index_at_or_after(sensor.first_report_s, sensor.report_period_s, t0);; ++k) {
            UnixSeconds t = sensor.first_report_s + k * sensor.report_period_s;
            if (t > t1) break;
            out.push_back({t, sensor.device_id, make(k), false});
        }
        if (scenario.radio.duplicate_fraction > 0.0) {
            for (auto k = first_index_at_or_after(sensor.first_report_s, sensor.report_period_s, t0 - delay);; ++k) {
                UnixSeconds t = sensor.first_report_s + k * sensor.report_period_s;
                if (t + delay > t1) break;
                auto counter = sensor.next_counter + static_cast<std::uint32_t>(k);
                if (is_duplicated(scenario, sensor.device_id, counter)) {
                    out.push_back({t + delay, sensor.device_id, make(k), true});
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Emission& a, const Emission& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.device_id != b.device_id) return a.device_id < b.device_id;
        return !a.duplicate && b.duplicate;
    });
    return out;
}

}  // namespace orvicon::sim
