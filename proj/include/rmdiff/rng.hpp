#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace rmdiff {

/// What a stream is used for. Keys sampling so that the same replica index
/// can share initial conditions and Brownian increments across ensemble arms
/// while drawing couplings independently.
enum class Purpose : std::uint32_t {
    Coupling = 1,
    Initial = 2,
    Noise = 3,
    Generic = 4,
};

/// Keyed random stream. Identical (seed, stream, purpose, salt) yield identical
/// sequences; any differing key component yields an independently seeded engine.
class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t seed, std::uint64_t stream, Purpose purpose = Purpose::Generic,
              std::uint64_t salt = 0)
        : seed_(seed), stream_(stream), purpose_(purpose), salt_(salt) {
        std::seed_seq seq{lo(seed),   hi(seed),   lo(stream), hi(stream),
                          static_cast<std::uint32_t>(purpose), lo(salt),   hi(salt)};
        engine_.seed(seq);
    }

    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return engine_(); }

    double normal() { return normal_(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    bool bit() { return (engine_() >> 63) != 0; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    Purpose purpose() const { return purpose_; }
    std::uint64_t salt() const { return salt_; }

    /// Derive a sibling stream with a different purpose/salt but the same key otherwise.
    RngStream with(Purpose purpose, std::uint64_t salt = 0) const {
        return RngStream(seed_, stream_, purpose, salt);
    }

private:
    static std::uint32_t lo(std::uint64_t v) { return static_cast<std::uint32_t>(v); }
    static std::uint32_t hi(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

    std::uint64_t seed_;
    std::uint64_t stream_;
    Purpose purpose_;
    std::uint64_t salt_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

} // namespace rmdiff
