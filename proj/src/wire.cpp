#include "orvicon/wire.hpp"

#include <cmath>
#include <limits>

namespace orvicon::wire {

namespace {

template <typename T>
void put_be(std::uint8_t* out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out[i] = static_cast<std::uint8_t>(u >> (8 * (sizeof(T) - 1 - i)));
    }
}

template <typename T>
T get_be(const std::uint8_t* in) {
    using U = std::make_unsigned_t<T>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u = static_cast<U>((u << 8) | in[i]);
    return static_cast<T>(u);
}

}  // namespace

FrameBytes encode_frame(const UplinkFrame& frame) {
    if (frame.version != kFrameVersion) {
        fail(ErrorCode::RangeError, "unsupported frame version " + std::to_string(frame.version));
    }
    if (frame.battery_pct > 100) {
        fail(ErrorCode::RangeError, "battery_pct " + std::to_string(frame.battery_pct) + " > 100");
    }
    FrameBytes out{};
    out[0] = frame.version;
    put_be(&out[1], frame.device_id);
    put_be(&out[9], frame.frame_counter);
    put_be(&out[13], frame.timestamp_s);
    put_be(&out[21], frame.temperature_cdeg);
    out[23] = frame.battery_pct;
    put_be(&out[kFrameCrcOffset], crc16_ccitt_false(std::span(out).first(kFrameCrcOffset)));
    return out;
}

UplinkFrame decode_frame(std::span<const std::uint8_t> buf) {
    if (buf.size() != kFrameSize) {
        fail(ErrorCode::FrameMalformed, "frame length " + std::to_string(buf.size()) + " != 26");
    }
    auto expected = crc16_ccitt_false(buf.first(kFrameCrcOffset));
    auto carried = get_be<std::uint16_t>(&buf[kFrameCrcOffset]);
    if (expected != carried) fail(ErrorCode::FrameCorrupt, "CRC mismatch");

    UplinkFrame frame;
    frame.version = buf[0];
    frame.device_id = get_be<std::uint64_t>(&buf[1]);
    frame.frame_counter = get_be<std::uint32_t>(&buf[9]);
    frame.timestamp_s = get_be<std::uint64_t>(&buf[13]);
    frame.temperature_cdeg = get_be<std::int16_t>(&buf[21]);
    frame.battery_pct = buf[23];
    frame.crc = carried;
    if (frame.version != kFrameVersion) {
        fail(ErrorCode::FrameMalformed, "unsupported frame version " + std::to_string(frame.version));
    }
    if (frame.battery_pct > 100) fail(ErrorCode::FrameMalformed, "battery_pct out of range");
    return frame;
}

UplinkFrame with_crc(UplinkFrame frame) {
    auto bytes = encode_frame(frame);
    frame.crc = get_be<std::uint16_t>(&bytes[kFrameCrcOffset]);
    return frame;
}

std::int16_t to_centidegrees(double celsius) noexcept {
    double scaled = std::round(celsius * 100.0);
    if (std::isnan(scaled)) return 0;
    if (scaled > std::numeric_limits<std::int16_t>::max()) return std::numeric_limits<std::int16_t>::max();
    if (scaled < std::numeric_limits<std::int16_t>::min()) return std::numeric_limits<std::int16_t>::min();
    return static_cast<std::int16_t>(scaled);
}

// ---------------------------------------------------------------------------

json batch_to_json(const IngestionBatch& batch) {
    json frames = json::array();
    for (const auto& f : batch.frames) {
        auto bytes = encode_frame(f.frame);
        frames.push_back({{"frame", to_hex(bytes)}, {"rssi_dbm", f.rssi_dbm}});
    }
    return {{"gateway_id", batch.gateway_id},
            {"received_at_s", batch.received_at_s},
            {"frames", std::move(frames)}};
}

IngestionBatch batch_from_json(const json& body) {
    IngestionBatch batch;
    try {
        if (!body.is_object() || body.size() != 3) fail(ErrorCode::MalformedBatch, "unexpected batch shape");
        batch.gateway_id = body.at("gateway_id").get<std::string>();
        batch.received_at_s = body.at("received_at_s").get<std::int64_t>();
        const auto& frames = body.at("frames");
        if (!frames.is_array() || frames.empty()) fail(ErrorCode::MalformedBatch, "frames must be a non-empty list");
        for (const auto& item : frames) {
            if (!item.is_object() || item.size() != 2) fail(ErrorCode::MalformedBatch, "unexpected frame entry");
            auto bytes = from_hex(item.at("frame").get<std::string>());
            AnnotatedFrame af;
            af.frame = decode_frame(bytes);
            af.rssi_dbm = item.at("rssi_dbm").get<int>();
            batch.frames.push_back(af);
        }
    } catch (const Error& e) {
        if (e.code() == ErrorCode::MalformedBatch) throw;
        fail(ErrorCode::MalformedBatch, e.what());
    } catch (const json::exception& e) {
        fail(ErrorCode::MalformedBatch, e.what());
    }
    return batch;
}

// ---------------------------------------------------------------------------

namespace {
constexpr std::pair<MsgType, std::string_view> kMsgTypeNames[] = {
    {MsgType::Enroll, "ENROLL"},
    {MsgType::EnrollAck, "ENROLL_ACK"},
    {MsgType::OfferPublish, "OFFER_PUBLISH"},
    {MsgType::CatalogQuery, "CATALOG_QUERY"},
    {MsgType::CatalogResult, "CATALOG_RESULT"},
    {MsgType::ContractRequest, "CONTRACT_REQUEST"},
    {MsgType::ContractDecision, "CONTRACT_DECISION"},
    {MsgType::ContractCountersign, "CONTRACT_COUNTERSIGN"},
    {MsgType::DataRequest, "DATA_REQUEST"},
    {MsgType::DataResponse, "DATA_RESPONSE"},
    {MsgType::Error, "ERROR"},
    {MsgType::IngestBatch, "INGEST_BATCH"},
};
}  // namespace

std::string_view to_string(MsgType type) noexcept {
    for (const auto& [t, name] : kMsgTypeNames) {
        if (t == type) return name;
    }
    return "ERROR";
}

std::optional<MsgType> msg_type_from_string(std::string_view name) noexcept {
    for (const auto& [t, n] : kMsgTypeNames) {
        if (n == name) return t;
    }
    return std::nullopt;
}

std::string canonical_json(const json& doc) {
    // nlohmann::json objects are std::map backed, so keys come out sorted
    // bytewise; dump() without indent emits no whitespace.
    try {
        return doc.dump(-1, ' ', false, json::error_handler_t::strict);
    } catch (const json::exception& e) {
        fail(ErrorCode::MessageMalformed, std::string("not valid UTF-8: ") + e.what());
    }
}

std::string canonical_bytes(const Envelope& envelope) {
    json doc = {{"msg_id", envelope.msg_id},
                {"sender_id", envelope.sender_id},
                {"msg_type", std::string(to_string(envelope.msg_type))},
                {"body", envelope.body}};
    return canonical_json(doc);
}

Envelope sign_envelope(Envelope envelope, std::span<const std::uint8_t> key) {
    if (key.empty()) fail(ErrorCode::RangeError, "signing key must be non-empty");
    envelope.signature = to_hex(hmac_sha256(key, canonical_bytes(envelope)));
    return envelope;
}

bool verify_envelope(const Envelope& envelope, std::span<const std::uint8_t> key) {
    if (key.empty() || envelope.signature.size() != 64) return false;
    std::string expected;
    try {
        expected = to_hex(hmac_sha256(key, canonical_bytes(envelope)));
    } catch (const Error&) {
        return false;
    }
    return constant_time_equal(expected, envelope.signature);
}

json envelope_to_json(const Envelope& envelope) {
    return {{"msg_id", envelope.msg_id},
            {"sender_id", envelope.sender_id},
            {"msg_type", std::string(to_string(envelope.msg_type))},
            {"body", envelope.body},
            {"signature", envelope.signature}};
}

Envelope envelope_from_json(const json& doc) {
    try {
        if (!doc.is_object()) fail(ErrorCode::MessageMalformed, "envelope must be an object");
        for (const auto& [key, _] : doc.items()) {
            if (key != "msg_id" && key != "sender_id" && key != "msg_type" && key != "body" &&
                key != "signature") {
                fail(ErrorCode::MessageMalformed, "unknown envelope field '" + key + "'");
            }
        }
        Envelope e;
        e.msg_id = doc.at("msg_id").get<std::string>();
        e.sender_id = doc.at("sender_id").get<std::string>();
        auto type_name = doc.at("msg_type").get<std::string>();
        auto type = msg_type_from_string(type_name);
        if (!type) fail(ErrorCode::MessageMalformed, "unknown msg_type '" + type_name + "'");
        e.msg_type = *type;
        e.body = doc.at("body");
        e.signature = doc.value("signature", std::string{});
        return e;
    } catch (const json::exception& ex) {
        fail(ErrorCode::MessageMalformed, ex.what());
    }
}

std::string serialize_envelope(const Envelope& envelope) { return canonical_json(envelope_to_json(envelope)); }

Envelope parse_envelope(std::string_view text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::MessageMalformed, "envelope is not a valid document");
    return envelope_from_json(doc);
}

// ---------------------------------------------------------------------------

Bytes frame_message(std::string_view payload) {
    if (payload.size() > kMaxMessageSize) fail(ErrorCode::MessageMalformed, "message too large");
    Bytes out(4 + payload.size());
    put_be(out.data(), static_cast<std::uint32_t>(payload.size()));
    std::copy(payload.begin(), payload.end(), out.begin() + 4);
    return out;
}

void MessageReader::feed(std::span<const std::uint8_t> data) {
    if (consumed_ > 0 && consumed_ >= buffer_.size() / 2) {
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_));
        consumed_ = 0;
    }
    buffer_.insert(buffer_.end(), data.begin(), data.end());
}

std::optional<std::string> MessageReader::next() {
    if (buffered() < 4) return std::nullopt;
    auto length = get_be<std::uint32_t>(&buffer_[consumed_]);
    if (length > kMaxMessageSize) fail(ErrorCode::MessageMalformed, "announced message too large");
    if (buffered() < 4 + static_cast<std::size_t>(length)) return std::nullopt;
    auto begin = buffer_.begin() + static_cast<std::ptrdiff_t>(consumed_ + 4);
    std::string message(begin, begin + length);
    consumed_ += 4 + length;
    return message;
}

}  // namespace orvicon::wire
