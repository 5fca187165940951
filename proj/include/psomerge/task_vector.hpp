#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "psomerge/tensor.hpp"

namespace psomerge {

// Delta of an expert against the shared base, same keyspace as the base.
struct TaskVector {
    ParameterSet deltas;
};

// Per-tensor drop flags (1 = dropped) sampled at a given rate. The flags
// come from the same counter-based stream the fused sparsify kernel uses,
// so the sampled mask and the kernel output can never disagree.
struct DropMask {
    std::map<std::string, std::vector<uint8_t>> bits;
    double drop_rate = 0.0;

    int64_t dropped_count() const;
    int64_t total_count() const;
};

TaskVector make_task_vector(const ParameterSet& expert, const ParameterSet& base);

// DARE: drop elements with probability p, scale survivors by 1/(1-p).
// Output elements are exactly 0 or tv_i/(1-p). Requires 0 <= p < 1.
TaskVector dare_sparsify(const TaskVector& tv, double p, uint64_t seed);

DropMask sample_drop_mask(const ParameterSet& keyspace, double p, uint64_t seed);

struct TiesResult {
    std::vector<TaskVector> trimmed;      // per input, all but top-k zeroed
    ParameterSet elected_signs;           // +1 / -1 per coordinate
    TaskVector merged;                    // mean of sign-agreeing survivors
};

// Trim each task vector to its top ceil(keep_fraction * d) entries by
// absolute value (global across tensors), elect a per-coordinate sign by
// the larger summed magnitude (ties -> positive), and average the
// sign-agreeing survivors.
TiesResult ties_trim_elect(const std::vector<TaskVector>& tvs, double keep_fraction);

// DELLA: rank elements within each tensor by |value| ascending; rank r of R
// gets drop probability p + epsilon*(R-1-2r)/(R-1) (exactly p when R == 1),
// survivors rescaled by 1/(1-p_r). epsilon = 0 is bit-identical to
// dare_sparsify with the same seed.
TaskVector della_prune(const TaskVector& tv, double base_rate, double epsilon,
                       uint64_t seed);

// Per-tensor expert weights from the ascending rank of mean |delta|
// (rank 1 = smallest change; ties break to the earlier expert index).
// Weights per tensor sum to 1.
std::map<std::string, std::vector<double>> rankmean_weights(
    const std::vector<TaskVector>& tvs);

}  // namespace psomerge
