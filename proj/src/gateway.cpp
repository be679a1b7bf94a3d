#include "orvicon/gateway.hpp"

#include <algorithm>
#include <cmath>

namespace orvicon::gateway {

std::string_view to_string(DropReason reason) noexcept {
    switch (reason) {
    case DropReason::Replay: return "replay";
    case DropReason::Stale: return "stale";
    case DropReason::Corrupt: return "corrupt";
    case DropReason::Malformed: return "malformed";
    }
    return "unknown";
}

Verdict accept_frame(DedupState& state, const wire::UplinkFrame& frame) {
    auto it = state.find(frame.device_id);
    if (it != state.end()) {
        if (frame.frame_counter == it->second) return Verdict::drop(DropReason::Replay);
        if (frame.frame_counter < it->second) return Verdict::drop(DropReason::Stale);
        it->second = frame.frame_counter;
    } else {
        state.emplace(frame.device_id, frame.frame_counter);
    }
    return Verdict::accept();
}

int simulated_rssi(double distance_m) noexcept {
    double d = std::max(1.0, std::isfinite(distance_m) ? distance_m : 1.0e9);
    long rssi = -60 - std::lround(20.0 * std::log10(d / 10.0));
    return static_cast<int>(std::clamp(rssi, -130L, -30L));
}

Gateway::Gateway(std::string gateway_id, geo::LocalPoint position, FlushPolicy policy)
    : gateway_id_(std::move(gateway_id)), position_(position), policy_(policy) {}

void Gateway::set_sensor_position(std::uint64_t device_id, geo::LocalPoint position) {
    sensor_positions_[device_id] = position;
}

int Gateway::rssi_for(std::uint64_t device_id) const {
    auto it = sensor_positions_.find(device_id);
    // unknown transmitters are reported at the sensitivity floor
    if (it == sensor_positions_.end()) return -130;
    return simulated_rssi(geo::distance(position_, it->second));
}

Verdict Gateway::receive(std::span<const std::uint8_t> raw, UnixSeconds now) {
    wire::UplinkFrame frame;
    try {
        frame = wire::decode_frame(raw);
    } catch (const Error& e) {
        ++stats_.received;
        auto reason = e.code() == ErrorCode::FrameCorrupt ? DropReason::Corrupt : DropReason::Malformed;
        ++(reason == DropReason::Corrupt ? stats_.dropped_corrupt : stats_.dropped_malformed);
        return Verdict::drop(reason);
    }
    return receive(frame, now);
}

Verdict Gateway::receive(const wire::UplinkFrame& frame, UnixSeconds now) {
    ++stats_.received;
    auto verdict = accept_frame(state_, frame);
    if (!verdict.accepted) {
        ++(verdict.reason == DropReason::Replay ? stats_.dropped_replay : stats_.dropped_stale);
        return verdict;
    }
    ++stats_.accepted;
    if (pending_.empty()) first_pending_at_ = now;
    pending_.push_back({frame, rssi_for(frame.device_id)});
    return verdict;
}

std::optional<wire::IngestionBatch> Gateway::poll(UnixSeconds now) {
    if (pending_.empty()) return std::nullopt;
    if (pending_.size() >= policy_.max_pending || now - *first_pending_at_ >= policy_.max_age_s) {
        return flush_batch(now);
    }
    return std::nullopt;
}

wire::IngestionBatch Gateway::flush_batch(UnixSeconds now) {
    if (pending_.empty()) fail(ErrorCode::EmptyBatch, "no frames pending at gateway " + gateway_id_);
    wire::IngestionBatch batch;
    batch.gateway_id = gateway_id_;
    batch.received_at_s = now;
    batch.frames = std::move(pending_);
    pending_.clear();
    first_pending_at_.reset();
    ++stats_.batches;
    return batch;
}

}  // namespace orvicon::gateway
