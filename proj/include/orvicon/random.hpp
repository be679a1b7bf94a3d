#pragma once

#include "orvicon/crypto.hpp"

#include <cstdint>
#include <mutex>
#include <random>

namespace orvicon {

/// Source of identifiers and secrets. Seeded runs reproduce the same sequence;
/// an unseeded source draws its seed from std::random_device.
class RandomSource {
public:
    RandomSource() : engine_(std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)) {}
    explicit RandomSource(std::uint64_t seed) : engine_(seed) {}

    Bytes bytes(std::size_t n) {
        std::lock_guard lock(mutex_);
        Bytes out(n);
        for (std::size_t i = 0; i < n; i += 8) {
            std::uint64_t word = engine_();
            for (std::size_t j = 0; j < 8 && i + j < n; ++j) {
                out[i + j] = static_cast<std::uint8_t>(word >> (8 * j));
            }
        }
        return out;
    }

    std::string hex_id(std::size_t n_bytes = 16) { return to_hex(bytes(n_bytes)); }

private:
    std::mutex mutex_;
    std::mt19937_64 engine_;
};

/// splitmix64 finalizer; the building block for counter-based noise.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Maps a 64-bit hash onto (0, 1), never returning an endpoint.
constexpr double unit_interval(std::uint64_t h) noexcept {
    return (static_cast<double>(h >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

}  // namespace orvicon
