#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace orvicon {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final XOR.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data) noexcept;

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view text);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> message);
Digest hmac_sha256(std::span<const std::uint8_t> key, std::string_view message);

/// Lowercase hex.
std::string to_hex(std::span<const std::uint8_t> data);
/// Throws Error(MessageMalformed) on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Compares without early exit on the first differing byte.
bool constant_time_equal(std::string_view a, std::string_view b) noexcept;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) noexcept {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace orvicon
