#pragma once

#include <cstdint>
#include <cmath>

namespace mdlm {

// 64-bit FNV-1a. Used for hashing string ids into seeds so that synthetic
// features are identical on every platform.
inline uint64_t fnv1a64(const void * data, size_t n) {
    const unsigned char * p = static_cast<const unsigned char *>(data);
    uint64_t h = 1469598103934665603ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t mix64(uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// PCG32 (pcg_xsh_rr_64_32). Two words of state, explicit stream selection,
// no platform-dependent behaviour. Every source of randomness in the engine
// is a Pcg32 keyed by (seed, stream), so any draw can be reproduced without
// replaying the draws that preceded it.
class Pcg32 {
  public:
    Pcg32() : Pcg32(0, 0) {}

    Pcg32(uint64_t seed, uint64_t stream) {
        inc_   = (mix64(stream) << 1u) | 1u;
        state_ = 0u;
        next_u32();
        state_ += mix64(seed);
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // uniform on [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform on (0, 1]
    double next_double_open_left() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // uniform integer in [0, bound) without modulo bias
    uint32_t next_below(uint32_t bound) {
        uint32_t threshold = (-bound) % bound;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    uint64_t state() const { return state_; }
    uint64_t inc() const { return inc_; }

    void restore(uint64_t state, uint64_t inc) {
        state_ = state;
        inc_   = inc;
    }

  private:
    uint64_t state_;
    uint64_t inc_;
};

// Stream ids for the independent generators used across the engine.
// Streams are combined with structural indices (epoch, step, slot) so that
// every draw is a pure function of (seed, purpose, indices).
namespace stream {
inline constexpr uint64_t kInit     = 0x01;
inline constexpr uint64_t kShuffle  = 0x02;
inline constexpr uint64_t kNoise    = 0x03;
inline constexpr uint64_t kMask     = 0x04;
inline constexpr uint64_t kSample   = 0x05;
inline constexpr uint64_t kFeatures = 0x06;
inline constexpr uint64_t kCorpus   = 0x07;

inline uint64_t sub(uint64_t purpose, uint64_t a = 0, uint64_t b = 0) {
    return mix64(purpose ^ mix64(a) ^ mix64(mix64(b)));
}
}  // namespace stream

}  // namespace mdlm
