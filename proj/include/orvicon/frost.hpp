#pragma once

#include "orvicon/error.hpp"
#include "orvicon/geo.hpp"
#include "orvicon/provider.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace orvicon::frost {

/// The critical temperature has no default: it depends on crop and
/// phenological stage and must always be supplied.
struct FrostConfig {
    double critical_temp_c;
    double idw_power = 2.0;
    double snap_epsilon_m = 0.5;
    std::size_t trend_window = 6;

    /// Throws Error(InvalidModel).
    void validate() const;
};

struct Reading {
    std::uint64_t device_id = 0;
    geo::LocalPoint position;
    double temp_c = 0.0;
};

/// Inverse-distance weighting with weights d^-p. A query closer than
/// snap_epsilon_m to a reading returns that reading (nearest first, then the
/// lowest device_id). Throws Error(NoReadings).
double idw_interpolate(geo::LocalPoint query, std::span<const Reading> readings, const FrostConfig& cfg);

struct Snapshot {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> temp_c;  ///< row-major

    double at(std::size_t row, std::size_t col) const { return temp_c.at(row * cols + col); }
};

/// Latest record per device with timestamp <= at, projected onto the grid's
/// local frame.
std::vector<Reading> latest_readings(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                                     UnixSeconds at);

/// Per-cell IDW at every cell centre. Cells are independent; with threads > 1
/// they are split across workers and the result is identical to the
/// sequential one. Throws Error(NoReadings).
Snapshot field_snapshot(const geo::GridSpec& grid, std::span<const Reading> readings, const FrostConfig& cfg,
                        unsigned threads = 1);
Snapshot field_snapshot(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                        const FrostConfig& cfg, UnixSeconds at, unsigned threads = 1);

struct CellBox {
    std::size_t min_row = 0;
    std::size_t min_col = 0;
    std::size_t max_row = 0;
    std::size_t max_col = 0;

    bool contains(geo::Cell c) const noexcept {
        return min_row <= c.row && c.row <= max_row && min_col <= c.col && c.col <= max_col;
    }
    bool operator==(const CellBox&) const = default;
};

struct MitigationZone {
    std::size_t zone_id = 0;       ///< 1-based, row-major order of each zone's first cell
    std::vector<geo::Cell> cells;  ///< row-major
    CellBox bbox;
    double min_temp_c = 0.0;
};

/// 4-connected components of the cells at or below the threshold.
std::vector<MitigationZone> detect_zones(const Snapshot& snapshot, double threshold_c);

struct TimedReading {
    UnixSeconds t = 0;
    double temp_c = 0.0;
};

/// Least-squares cooling trend over the last `trend_window` readings. Returns
/// 0 when the latest reading is already at or below the threshold, nullopt
/// when the trend is not falling, otherwise seconds after the latest reading
/// until the threshold is reached. Throws Error(InsufficientData) with fewer
/// than two readings or a degenerate time base.
std::optional<double> cooling_eta(std::span<const TimedReading> readings, double threshold_c, std::size_t trend_window);

struct FrostAlert {
    UnixSeconds at = 0;
    std::vector<MitigationZone> zones;
    double min_temp_c = 0.0;
    double coverage_fraction = 0.0;
    std::map<std::uint64_t, double> eta_s;  ///< only sensors with a predicted crossing
    Snapshot snapshot;
};

/// Snapshot, zones, coverage and per-sensor ETAs. std::nullopt when no cell
/// is at or below the critical temperature. Throws Error(NoReadings).
std::optional<FrostAlert> build_alert(const geo::GridSpec& grid, std::span<const provider::SensorRecord> records,
                                      const FrostConfig& cfg, UnixSeconds at, unsigned threads = 1);

/// `row,col,temp_c` with a header line.
void write_snapshot_csv(std::ostream& out, const Snapshot& snapshot);
/// One character per cell, top row = highest row index (north up): '.' for
/// warm cells, zone digits/letters for zone members.
std::string render_zone_map(const Snapshot& snapshot, std::span<const MitigationZone> zones);

}  // namespace orvicon::frost
