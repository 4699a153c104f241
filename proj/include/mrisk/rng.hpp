#pragma once

// Reproducible per-path random streams.
//
// Each path index derives its own generator from (master seed, index) via a
// splitmix64 hash, so results are bit-identical no matter how paths are
// partitioned across threads, and common-random-number reruns only need the
// same seed. Normals come from the inverse cdf (one uniform per normal);
// std::normal_distribution is avoided because its draw pattern is
// implementation-defined.

#include <mrisk/math.hpp>

#include <cstdint>
#include <random>

namespace mrisk {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class PathRng {
public:
    explicit PathRng(std::uint64_t derived_seed) : eng_(derived_seed) {}

    // Uniform on the open interval (0,1); 53-bit resolution, end points
    // nudged inside so the inverse normal cdf stays finite.
    double uniform() {
        double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
        if (u <= 0.0) u = 0x1.0p-53;
        return u;
    }

    double gauss() { return norm_inv_cdf(uniform()); }

private:
    std::mt19937_64 eng_;
};

class RngStreams {
public:
    explicit RngStreams(std::uint64_t master_seed) : master_(master_seed) {}

    // Stream for an absolute path (or pair) index. Two hash rounds separate
    // nearby indices and nearby seeds.
    PathRng stream(std::uint64_t index) const {
        return PathRng(splitmix64(splitmix64(master_ ^ 0x6a09e667f3bcc909ULL) + index));
    }

    std::uint64_t master_seed() const { return master_; }

private:
    std::uint64_t master_;
};

} // namespace mrisk
