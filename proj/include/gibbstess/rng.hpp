#pragma once

// Counter-based random number generation (Philox4x32-10).
//
// Replica reproducibility: every replica gets an independent stream keyed by
// (master seed, replica index). Streams are stateless functions of
// (key, counter), so a replica's draws do not depend on scheduling order and
// identical seeds reproduce bit-identical runs on any machine.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace gibbstess {

namespace detail {

inline void philox_mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                           std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

// One 10-round Philox4x32 block: 128-bit counter, 64-bit key -> 128 random bits.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        detail::philox_mulhilo(kMul0, ctr[0], hi0, lo0);
        detail::philox_mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

// A single replica's stream. The key holds the master seed; the high half of
// the counter holds the replica index, and the low half advances by one per
// block of 4 words drawn.
class RngStream {
  public:
    RngStream(std::uint64_t master_seed, std::uint64_t replica)
        : key_{static_cast<std::uint32_t>(master_seed),
               static_cast<std::uint32_t>(master_seed >> 32)},
          ctr_{0, 0, static_cast<std::uint32_t>(replica),
               static_cast<std::uint32_t>(replica >> 32)} {}

    std::uint32_t next_u32() {
        if (head_ == 4) refill();
        return block_[head_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0,1] — safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    // Standard exponential via inversion.
    double exponential() { return -std::log(uniform_pos()); }

    // Index i with probability weights[i] / sum(weights). Inverse-CDF walk in
    // index order, so the draw is a deterministic function of the stream.
    std::size_t discrete(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("discrete: negative weight");
            total += w;
        }
        if (total <= 0.0) throw std::invalid_argument("discrete: zero total weight");
        const double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

  private:
    void refill() {
        block_ = philox4x32(ctr_, key_);
        head_ = 0;
        // 64-bit increment of the low counter half; the high half holds the
        // replica index and is never touched.
        if (++ctr_[0] == 0) ++ctr_[1];
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint32_t, 4> block_{};
    int head_ = 4;
};

}  // namespace gibbstess
