#pragma once

#include "orvicon/error.hpp"
#include "orvicon/geo.hpp"
#include "orvicon/wire.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace orvicon::gateway {

/// Highest frame counter forwarded per device. Values only ever increase.
using DedupState = std::map<std::uint64_t, std::uint32_t>;

enum class DropReason { Replay, Stale, Corrupt, Malformed };
std::string_view to_string(DropReason reason) noexcept;

struct Verdict {
    bool accepted = false;
    DropReason reason = DropReason::Replay;  ///< meaningful only when !accepted

    static Verdict accept() noexcept { return {true, DropReason::Replay}; }
    static Verdict drop(DropReason r) noexcept { return {false, r}; }
};

/// Replay protection: accept iff the counter is above the last one seen for
/// the device. The state is updated on accept only.
Verdict accept_frame(DedupState& state, const wire::UplinkFrame& frame);

/// Simulated free-space loss: -60 - round(20 log10(max(1, d)/10)), clamped to
/// [-130, -30] dBm.
int simulated_rssi(double distance_m) noexcept;

struct FlushPolicy {
    std::size_t max_pending = 32;
    std::int64_t max_age_s = 5;
};

struct Stats {
    std::uint64_t received = 0;
    std::uint64_t accepted = 0;
    std::uint64_t dropped_replay = 0;
    std::uint64_t dropped_stale = 0;
    std::uint64_t dropped_corrupt = 0;
    std::uint64_t dropped_malformed = 0;
    std::uint64_t batches = 0;
};

/// Radio-side receiver. Frames arrive sequentially; accepted frames queue in
/// acceptance order until a flush produces an IngestionBatch.
class Gateway {
public:
    Gateway(std::string gateway_id, geo::LocalPoint position, FlushPolicy policy = {});

    void set_sensor_position(std::uint64_t device_id, geo::LocalPoint position);

    /// Decodes and admits one raw uplink frame received at `now`.
    Verdict receive(std::span<const std::uint8_t> raw, UnixSeconds now);
    /// Admits an already-decoded, CRC-valid frame.
    Verdict receive(const wire::UplinkFrame& frame, UnixSeconds now);

    /// A batch if the flush policy says one is due at `now`.
    std::optional<wire::IngestionBatch> poll(UnixSeconds now);

    /// Everything pending, in acceptance order. Throws Error(EmptyBatch) when
    /// nothing is pending.
    wire::IngestionBatch flush_batch(UnixSeconds now);

    std::size_t pending() const noexcept { return pending_.size(); }
    const DedupState& state() const noexcept { return state_; }
    const Stats& stats() const noexcept { return stats_; }
    const std::string& id() const noexcept { return gateway_id_; }

private:
    int rssi_for(std::uint64_t device_id) const;

    std::string gateway_id_;
    geo::LocalPoint position_;
    FlushPolicy policy_;
    DedupState state_;
    std::map<std::uint64_t, geo::LocalPoint> sensor_positions_;
    std::vector<wire::AnnotatedFrame> pending_;
    std::optional<UnixSeconds> first_pending_at_;
    Stats stats_;
};

}  // namespace orvicon::gateway
