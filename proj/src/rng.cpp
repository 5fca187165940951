#include "psomerge/rng.hpp"

#include <cmath>

namespace psomerge::rng {

namespace {

constexpr uint32_t kPhiloxW32A = 0x9E3779B9u;
constexpr uint32_t kPhiloxW32B = 0xBB67AE85u;
constexpr uint32_t kPhiloxM4x32A = 0xD2511F53u;
constexpr uint32_t kPhiloxM4x32B = 0xCD9E8D57u;

inline void one_round(std::array<uint32_t, 4>& ctr, const std::array<uint32_t, 2>& key) {
    const uint64_t p0 = static_cast<uint64_t>(kPhiloxM4x32A) * ctr[0];
    const uint64_t p1 = static_cast<uint64_t>(kPhiloxM4x32B) * ctr[2];
    const uint32_t lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
    const uint32_t lo1 = static_cast<uint32_t>(p1);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline uint64_t join64(uint32_t lo, uint32_t hi) {
    return static_cast<uint64_t>(lo) | (static_cast<uint64_t>(hi) << 32);
}

// 53-bit mantissa scaled into [0, 1).
inline double to_u01(uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

}  // namespace

std::array<uint32_t, 4> Philox4x32::block(std::array<uint32_t, 4> counter,
                                          std::array<uint32_t, 2> key) {
    for (int round = 0; round < 10; ++round) {
        one_round(counter, key);
        key[0] += kPhiloxW32A;
        key[1] += kPhiloxW32B;
    }
    return counter;
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

std::array<uint32_t, 4> raw_block(uint64_t seed, Stream stream, uint64_t a, uint64_t b) {
    const uint64_t k = seed ^ splitmix64(static_cast<uint64_t>(stream));
    const std::array<uint32_t, 2> key = {static_cast<uint32_t>(k),
                                         static_cast<uint32_t>(k >> 32)};
    const std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(a), static_cast<uint32_t>(a >> 32),
        static_cast<uint32_t>(b), static_cast<uint32_t>(b >> 32)};
    return Philox4x32::block(ctr, key);
}

double u01(uint64_t seed, Stream stream, uint64_t a, uint64_t b) {
    const auto r = raw_block(seed, stream, a, b);
    return to_u01(join64(r[0], r[1]));
}

std::pair<double, double> u01_pair(uint64_t seed, Stream stream, uint64_t a, uint64_t b) {
    const auto r = raw_block(seed, stream, a, b);
    return {to_u01(join64(r[0], r[1])), to_u01(join64(r[2], r[3]))};
}

std::pair<double, double> normal_pair(uint64_t seed, Stream stream, uint64_t a, uint64_t b) {
    const auto r = raw_block(seed, stream, a, b);
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((join64(r[0], r[1]) >> 11) + 1) * 0x1.0p-53;
    const double u2 = to_u01(join64(r[2], r[3]));
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    return {mag * std::cos(ang), mag * std::sin(ang)};
}

double normal(uint64_t seed, Stream stream, uint64_t a, uint64_t b) {
    return normal_pair(seed, stream, a, b).first;
}

}  // namespace psomerge::rng
