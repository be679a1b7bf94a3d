#pragma once

#include "orvicon/error.hpp"
#include "orvicon/geo.hpp"
#include "orvicon/wire.hpp"

#include <cstdint>
#include <vector>

namespace orvicon::sim {

struct Climate {
    double t_mean_c = 10.0;
    double diurnal_amp_c = 0.0;
    std::int64_t t_peak_s = 14 * 3600;  ///< second-of-day of the daily maximum
    double noise_sigma_c = 0.0;
};

/// Linear radiative cooling between start_s and end_s, stronger in low
/// cells. After end_s the accumulated cooling is held, not released.
struct FrostEvent {
    UnixSeconds start_s = 0;
    UnixSeconds end_s = 0;
    double cooling_rate_c_per_h = 0.0;
    double pooling_gain = 0.0;
};

struct FieldModel {
    geo::GridSpec grid;
    std::vector<double> elevation_m;  ///< row-major, rows*cols entries
    Climate climate;
    std::vector<FrostEvent> frost_events;

    double elevation(geo::Cell c) const { return elevation_m.at(grid.index(c)); }

    /// Throws Error(InvalidModel) on any violated invariant.
    void validate() const;
};

struct SimSensor {
    std::uint64_t device_id = 0;
    geo::Cell cell;
    std::int64_t report_period_s = 600;
    UnixSeconds first_report_s = 0;  ///< first report instant; later ones follow every period
    std::uint32_t next_counter = 1;  ///< counter carried by the first report
    std::uint8_t battery_pct = 100;
};

/// Radio impairments. A duplicated frame is re-delivered replay_delay_s after
/// the original; the choice is a deterministic function of (seed, device,
/// counter).
struct RadioModel {
    double duplicate_fraction = 0.0;
    std::int64_t replay_delay_s = 0;
};

struct Scenario {
    FieldModel field;
    std::vector<SimSensor> sensors;
    RadioModel radio;
    std::uint64_t seed = 0;

    /// Throws Error(InvalidModel).
    void validate() const;
};

/// Field temperature at a cell; the deterministic noise term depends only on
/// (seed, cell, t).
double true_temperature(const FieldModel& model, geo::Cell cell, UnixSeconds t, std::uint64_t seed);

struct Emission {
    UnixSeconds t = 0;
    std::uint64_t device_id = 0;
    wire::UplinkFrame frame;
    bool duplicate = false;  ///< simulator-injected replay of an earlier frame
};

/// All frames delivered within [t0, t1] (both inclusive), ordered by
/// (t, device_id) with a replayed copy after originals at the same instant.
/// Splitting a horizon into adjacent windows yields the same stream.
std::vector<Emission> emission_schedule(const Scenario& scenario, UnixSeconds t0, UnixSeconds t1);

/// Standard normal deviate from a hash key (Box-Muller on two hashed uniforms).
double normal_from_key(std::uint64_t key) noexcept;

}  // namespace orvicon::sim
