#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>

namespace psomerge::rng {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// Every random draw in the project is a pure function of
// (seed, stream, a, b), so results do not depend on tensor iteration
// order, OpenMP chunking, or thread count. Masks key on
// (seed, tensor-name-hash, element-index); swarm velocities key on
// (seed, particle, step).
struct Philox4x32 {
    static std::array<uint32_t, 4> block(std::array<uint32_t, 4> counter,
                                         std::array<uint32_t, 2> key);
};

// Domain-separation tags so independent consumers never share a stream.
enum class Stream : uint64_t {
    Mask = 1,       // DARE / DELLA drop decisions
    Velocity = 2,   // per-particle per-step r1, r2
    EsSample = 3,   // evolution-strategy weight perturbations
    Blob = 4,       // synthetic blob datasets
    Noise = 5,      // synthetic expert noise
    NetInit = 6,    // MLP base initialization
    Generic = 7,
};

uint64_t fnv1a64(std::string_view s);
uint64_t splitmix64(uint64_t x);

// Stable sub-seed for the index-th consumer of a run seed (one per expert).
uint64_t derive_seed(uint64_t seed, uint64_t index);

// One 128-bit block keyed by (seed, stream) with counter (a, b).
std::array<uint32_t, 4> raw_block(uint64_t seed, Stream stream, uint64_t a, uint64_t b);

// Uniform double in [0, 1) from lanes 0-1 of the block.
double u01(uint64_t seed, Stream stream, uint64_t a, uint64_t b);

// Two independent uniforms in [0, 1) from one block.
std::pair<double, double> u01_pair(uint64_t seed, Stream stream, uint64_t a, uint64_t b);

// Standard normal pair via Box-Muller on one block.
std::pair<double, double> normal_pair(uint64_t seed, Stream stream, uint64_t a, uint64_t b);

double normal(uint64_t seed, Stream stream, uint64_t a, uint64_t b);

}  // namespace psomerge::rng
