#include "orvicon/frost.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <iomanip>
#include <limits>
#include <sstream>
#include <thread>

namespace orvicon::frost {

void FrostConfig::validate() const {
    if (!std::isfinite(critical_temp_c)) fail(ErrorCode::InvalidModel, "critical_temp_c must be finite");
    if (!(idw_power > 0.0)) fail(ErrorCode::InvalidModel, "idw_power must be > 0");
    if (!(snap_epsilon_m >= 0.0)) fail(ErrorCode::InvalidModel, "snap_epsilon_m must be >= 0");
    if (trend_window < 2) fail(ErrorCode::InvalidModel, "trend_window must be >= 2");
}

double idw_interpolate(geo::LocalPoint query, std::span<const Reading> readings, const FrostConfig& cfg) {
    if (readings.empty()) fail(ErrorCode::NoReadings, "no readings to interpolate");

    const Reading* snap = nullptr;
    double snap_d = 0.0;
    for (const auto& r : readings) {
        double d = geo::distance(query, r.position);
        if (d >= cfg.snap_epsilon_m) continue;
        if (!snap || d < snap_d || (d == snap_d && r.device_id < snap->device_id)) {
            snap = &r;
            snap_d = d;
        }
    }
    if (snap) return snap->temp_c;

    double weighted = 0.0;
    double total = 0.0;
    for (const auto& r : readings) {
        double w = std::pow(geo::distance(query, r.position), -cfg.idw_power);
        weighted += w * r.temp_c;
        total += w;
    }
    return weighted / total;
}

std::vector<Reading> latest_readings(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                                     UnixSeconds at) {
    std::map<std::uint64_t, const provider::SensorRecord*> latest;
    for (const auto& r : records) {
        if (r.timestamp_s > at) continue;
        auto& slot = latest[r.device_id];
        if (!slot || std::tie(r.timestamp_s, r.frame_counter) > std::tie(slot->timestamp_s, slot->frame_counter)) {
            slot = &r;
        }
    }
    auto proj = grid.projection();
    std::vector<Reading> out;
    out.reserve(latest.size());
    for (const auto& [id, r] : latest) out.push_back({id, proj.to_local({r->lat, r->lon}), r->temperature_c()});
    return out;
}

Snapshot field_snapshot(const geo::GridSpec& grid, std::span<const Reading> readings, const FrostConfig& cfg,
                        unsigned threads) {
    if (readings.empty()) fail(ErrorCode::NoReadings, "no readings for snapshot");
    Snapshot snap{grid.rows, grid.cols, std::vector<double>(grid.cell_count())};
    auto fill = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            geo::Cell c{i / grid.cols, i % grid.cols};
            snap.temp_c[i] = idw_interpolate(grid.cell_center_local(c), readings, cfg);
        }
    };
    const std::size_t n = grid.cell_count();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    if (threads == 1) {
        fill(0, n);
        return snap;
    }
    std::vector<std::jthread> workers;
    std::size_t chunk = (n + threads - 1) / threads;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        workers.emplace_back(fill, begin, std::min(n, begin + chunk));
    }
    return snap;
}

Snapshot field_snapshot(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                        const FrostConfig& cfg, UnixSeconds at, unsigned threads) {
    auto readings = latest_readings(grid, records, at);
    return field_snapshot(grid, readings, cfg, threads);
}

std::vector<MitigationZone> detect_zones(const Snapshot& snapshot, double threshold_c) {
    const auto rows = snapshot.rows;
    const auto cols = snapshot.cols;
    std::vector<bool> visited(rows * cols, false);
    std::vector<MitigationZone> zones;

    for (std::size_t start = 0; start < rows * cols; ++start) {
        if (visited[start] || !(snapshot.temp_c[start] <= threshold_c)) continue;
        MitigationZone zone;
        zone.zone_id = zones.size() + 1;
        zone.min_temp_c = std::numeric_limits<double>::infinity();
        zone.bbox = {start / cols, start % cols, start / cols, start % cols};
        std::deque<std::size_t> queue{start};
        visited[start] = true;
        while (!queue.empty()) {
            auto idx = queue.front();
            queue.pop_front();
            geo::Cell c{idx / cols, idx % cols};
            zone.cells.push_back(c);
            zone.min_temp_c = std::min(zone.min_temp_c, snapshot.temp_c[idx]);
            zone.bbox.min_row = std::min(zone.bbox.min_row, c.row);
            zone.bbox.max_row = std::max(zone.bbox.max_row, c.row);
            zone.bbox.min_col = std::min(zone.bbox.min_col, c.col);
            zone.bbox.max_col = std::max(zone.bbox.max_col, c.col);
            auto visit = [&](std::size_t r, std::size_t col) {
                auto n = r * cols + col;
                if (!visited[n] && snapshot.temp_c[n] <= threshold_c) {
                    visited[n] = true;
                    queue.push_back(n);
                }
            };
            if (c.row > 0) visit(c.row - 1, c.col);
            if (c.row + 1 < rows) visit(c.row + 1, c.col);
            if (c.col > 0) visit(c.row, c.col - 1);
            if (c.col + 1 < cols) visit(c.row, c.col + 1);
        }
        std::ranges::sort(zone.cells);
        zones.push_back(std::move(zone));
    }
    return zones;
}

std::optional<double> cooling_eta(std::span<const TimedReading> readings, double threshold_c, std::size_t trend_window) {
    if (trend_window < 2) fail(ErrorCode::InsufficientData, "trend window must cover at least two readings");
    std::vector<TimedReading> sorted(readings.begin(), readings.end());
    std::ranges::stable_sort(sorted, {}, &TimedReading::t);
    if (sorted.size() < 2) fail(ErrorCode::InsufficientData, "need at least two readings");
    std::span<const TimedReading> window(sorted);
    if (window.size() > trend_window) window = window.last(trend_window);

    const auto& last = window.back();
    if (last.temp_c <= threshold_c) return 0.0;

    // centre on the first timestamp to keep the sums well conditioned
    const double t0 = static_cast<double>(window.front().t);
    double n = static_cast<double>(window.size());
    double st = 0, sy = 0, stt = 0, sty = 0;
    for (const auto& r : window) {
        double t = static_cast<double>(r.t) - t0;
        st += t;
        sy += r.temp_c;
        stt += t * t;
        sty += t * r.temp_c;
    }
    double denom = n * stt - st * st;
    if (!(denom > 0.0)) fail(ErrorCode::InsufficientData, "readings share one timestamp");
    double slope = (n * sty - st * sy) / denom;
    if (slope >= 0.0) return std::nullopt;
    return (threshold_c - last.temp_c) / slope;
}

std::optional<FrostAlert> build_alert(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                                      const FrostConfig& cfg, UnixSeconds at, unsigned threads) {
    auto snapshot = field_snapshot(grid, records, cfg, at, threads);
    auto zones = detect_zones(snapshot, cfg.critical_temp_c);
    if (zones.empty()) return std::nullopt;

    FrostAlert alert;
    alert.at = at;
    alert.min_temp_c = *std::ranges::min_element(snapshot.temp_c);
    std::size_t cold = 0;
    for (const auto& z : zones) cold += z.cells.size();
    alert.coverage_fraction = static_cast<double>(cold) / static_cast<double>(snapshot.temp_c.size());

    std::map<std::uint64_t, std::vector<TimedReading>> series;
    for (const auto& r : records) {
        if (r.timestamp_s <= at) series[r.device_id].push_back({r.timestamp_s, r.temperature_c()});
    }
    for (const auto& [device, readings] : series) {
        try {
            if (auto eta = cooling_eta(readings, cfg.critical_temp_c, cfg.trend_window)) alert.eta_s[device] = *eta;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::InsufficientData) throw;
        }
    }
    alert.zones = std::move(zones);
    alert.snapshot = std::move(snapshot);
    return alert;
}

void write_snapshot_csv(std::ostream& out, const Snapshot& snapshot) {
    out << "row,col,temp_c\n";
    for (std::size_t r = 0; r < snapshot.rows; ++r) {
        for (std::size_t c = 0; c < snapshot.cols; ++c) {
            out << r << ',' << c << ',' << std::fixed << std::setprecision(4) << snapshot.at(r, c) << '\n';
        }
    }
}

std::string render_zone_map(const Snapshot& snapshot, std::span<const MitigationZone> zones) {
    static constexpr std::string_view glyphs = "123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    std::vector<char> cells(snapshot.rows * snapshot.cols, '.');
    for (const auto& z : zones) {
        char g = z.zone_id - 1 < glyphs.size() ? glyphs[z.zone_id - 1] : '#';
        for (const auto& c : z.cells) cells[c.row * snapshot.cols + c.col] = g;
    }
    std::string out;
    for (std::size_t r = snapshot.rows; r-- > 0;) {
        out.append(cells.begin() + static_cast<std::ptrdiff_t>(r * snapshot.cols),
                   cells.begin() + static_cast<std::ptrdiff_t>((r + 1) * snapshot.cols));
        out.push_back('\n');
    }
    return out;
}

}  // namespace orvicon::frost
