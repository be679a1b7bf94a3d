#pragma once

#include "orvicon/crypto.hpp"
#include "orvicon/error.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace orvicon::wire {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Uplink frame (26 bytes, big-endian)
//
//   off  len  field
//     0    1  version (= 1)
//     1    8  device_id
//     9    4  frame_counter
//    13    8  timestamp_s
//    21    2  temperature_cdeg (two's complement)
//    23    1  battery_pct (0..100)
//    24    2  crc16 over bytes 0..23
// ---------------------------------------------------------------------------

inline constexpr std::size_t kFrameSize = 26;
inline constexpr std::size_t kFrameCrcOffset = 24;
inline constexpr std::uint8_t kFrameVersion = 1;

using FrameBytes = std::array<std::uint8_t, kFrameSize>;

struct UplinkFrame {
    std::uint8_t version = kFrameVersion;
    std::uint64_t device_id = 0;
    std::uint32_t frame_counter = 0;
    std::uint64_t timestamp_s = 0;
    std::int16_t temperature_cdeg = 0;
    std::uint8_t battery_pct = 100;
    std::uint16_t crc = 0;  ///< ignored by encode_frame, filled in by decode_frame

    bool operator==(const UplinkFrame&) const = default;
};

/// Throws Error(RangeError) if version != 1 or battery_pct > 100.
FrameBytes encode_frame(const UplinkFrame& frame);

/// Throws Error(FrameMalformed) on length/version/battery violations and
/// Error(FrameCorrupt) on CRC mismatch.
UplinkFrame decode_frame(std::span<const std::uint8_t> buf);

/// Same frame with the CRC it would carry on the wire.
UplinkFrame with_crc(UplinkFrame frame);

/// Centi-degrees, rounded half away from zero and saturated to int16.
std::int16_t to_centidegrees(double celsius) noexcept;
inline double from_centidegrees(std::int16_t cdeg) noexcept { return cdeg / 100.0; }

// ---------------------------------------------------------------------------
// Gateway -> provider ingestion batch
// ---------------------------------------------------------------------------

struct AnnotatedFrame {
    UplinkFrame frame;
    int rssi_dbm = 0;

    bool operator==(const AnnotatedFrame&) const = default;
};

struct IngestionBatch {
    std::string gateway_id;
    std::int64_t received_at_s = 0;
    std::vector<AnnotatedFrame> frames;

    bool operator==(const IngestionBatch&) const = default;
};

/// Frames travel as hex of their 26-byte encoding so the provider re-checks
/// each CRC on receipt.
json batch_to_json(const IngestionBatch& batch);
/// Throws Error(MalformedBatch) on any structural problem, an empty frame
/// list, or a frame that fails to decode.
IngestionBatch batch_from_json(const json& body);

// ---------------------------------------------------------------------------
// Signed envelope
// ---------------------------------------------------------------------------

enum class MsgType {
    Enroll,
    EnrollAck,
    OfferPublish,
    CatalogQuery,
    CatalogResult,
    ContractRequest,
    ContractDecision,
    ContractCountersign,
    DataRequest,
    DataResponse,
    Error,
    IngestBatch,
};

std::string_view to_string(MsgType type) noexcept;
std::optional<MsgType> msg_type_from_string(std::string_view name) noexcept;

struct Envelope {
    std::string msg_id;     ///< 128-bit random identifier, 32 hex chars
    std::string sender_id;
    MsgType msg_type = MsgType::Error;
    json body = json::object();
    std::string signature;  ///< lowercase hex HMAC-SHA256; empty when unsigned

    bool operator==(const Envelope&) const = default;
};

/// UTF-8, keys sorted, no whitespace, signature excluded.
std::string canonical_bytes(const Envelope& envelope);

/// Throws Error(RangeError) on an empty key.
Envelope sign_envelope(Envelope envelope, std::span<const std::uint8_t> key);
bool verify_envelope(const Envelope& envelope, std::span<const std::uint8_t> key);

json envelope_to_json(const Envelope& envelope);
/// Throws Error(MessageMalformed).
Envelope envelope_from_json(const json& doc);

std::string serialize_envelope(const Envelope& envelope);
/// Throws Error(MessageMalformed).
Envelope parse_envelope(std::string_view text);

/// Canonical serialization shared by signing and the audit log.
std::string canonical_json(const json& doc);

// ---------------------------------------------------------------------------
// Length-prefixed stream framing: 32-bit big-endian length, then payload.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kMaxMessageSize = 64u << 20;

Bytes frame_message(std::string_view payload);

/// Incremental decoder for a byte stream carrying length-prefixed messages.
class MessageReader {
public:
    void feed(std::span<const std::uint8_t> data);
    /// Next complete message, if one is buffered. Throws
    /// Error(MessageMalformed) when a header announces more than
    /// kMaxMessageSize bytes.
    std::optional<std::string> next();
    std::size_t buffered() const noexcept { return buffer_.size() - consumed_; }

private:
    Bytes buffer_;
    std::size_t consumed_ = 0;
};

}  // namespace orvicon::wire
