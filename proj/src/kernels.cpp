#include "psomerge/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <cstddef>

namespace psomerge::kernels {

namespace {

// Chunk size for reductions. Partials are always combined in chunk order,
// so the result is independent of thread count.
constexpr int64_t kChunk = 8192;

// Parallelizing tiny loops costs more than it saves.
constexpr int64_t kParallelCutoff = 4096;

ExecMode g_mode = ExecMode::Parallel;

inline bool go_parallel(ExecMode mode, int64_t n) {
    return mode == ExecMode::Parallel && n >= kParallelCutoff;
}

template <typename ChunkFn>
double chunked_sum(int64_t n, ExecMode mode, ChunkFn&& fn) {
    const int64_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partials(static_cast<size_t>(nchunks), 0.0);
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t c = 0; c < nchunks; ++c) {
        const int64_t lo = c * kChunk;
        const int64_t hi = std::min(n, lo + kChunk);
        double acc = 0.0;
        for (int64_t i = lo; i < hi; ++i) acc += fn(i);
        partials[static_cast<size_t>(c)] = acc;
    }
    double total = 0.0;
    for (double p : partials) total += p;
    return total;
}

}  // namespace

ExecMode exec_mode() { return g_mode; }
void set_exec_mode(ExecMode mode) { g_mode = mode; }

void axpy(float alpha, std::span<const float> x, std::span<const float> y,
          std::span<float> out, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(x.size() == out.size() && y.size() == out.size());
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        out[i] = alpha * x[i] + y[i];
    }
}

void subtract(std::span<const float> a, std::span<const float> b,
              std::span<float> out, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(a.size() == out.size() && b.size() == out.size());
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        out[i] = a[i] - b[i];
    }
}

void scale(float alpha, std::span<const float> x, std::span<float> out, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(x.size() == out.size());
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        out[i] = alpha * x[i];
    }
}

void weighted_merge(std::span<const float> base,
                    const std::vector<const float*>& deltas,
                    const std::vector<double>& coeffs,
                    std::span<float> out, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(base.size() == out.size());
    assert(deltas.size() == coeffs.size());
    const size_t t_count = deltas.size();
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        double acc = static_cast<double>(base[i]);
        for (size_t t = 0; t < t_count; ++t) {
            acc += coeffs[t] * static_cast<double>(deltas[t][i]);
        }
        out[i] = static_cast<float>(acc);
    }
}

void dare_apply(std::span<const float> tv, double p, uint64_t seed,
                uint64_t name_hash, std::span<float> out, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(tv.size() == out.size());
    const float rescale = static_cast<float>(1.0 / (1.0 - p));
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        const bool drop = drop_element(seed, name_hash, static_cast<uint64_t>(i), p);
        out[i] = drop ? 0.0f : tv[i] * rescale;
    }
}

void prob_mask_apply(std::span<const float> tv, std::span<const double> drop_prob,
                     uint64_t seed, uint64_t name_hash, std::span<float> out,
                     ExecMode mode) {
    const int64_t n = static_cast<int64_t>(out.size());
    assert(tv.size() == out.size() && drop_prob.size() == out.size());
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        const double p = drop_prob[i];
        const bool drop = drop_element(seed, name_hash, static_cast<uint64_t>(i), p);
        const float rescale = static_cast<float>(1.0 / (1.0 - p));
        out[i] = drop ? 0.0f : tv[i] * rescale;
    }
}

void pso_update(std::span<float> velocity, std::span<float> position,
                std::span<const float> gbest, std::span<const float> pbest,
                float w, float c1r1, float c2r2, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(position.size());
    assert(velocity.size() == position.size());
    assert(gbest.size() == position.size() && pbest.size() == position.size());
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        const float pos = position[i];
        const float v = w * velocity[i] + c1r1 * (gbest[i] - pos) + c2r2 * (pbest[i] - pos);
        velocity[i] = v;
        position[i] = pos + v;
    }
}

double sum_abs(std::span<const float> x, ExecMode mode) {
    return chunked_sum(static_cast<int64_t>(x.size()), mode,
                       [&](int64_t i) { return std::fabs(static_cast<double>(x[i])); });
}

double sum_f64(std::span<const float> x, ExecMode mode) {
    return chunked_sum(static_cast<int64_t>(x.size()), mode,
                       [&](int64_t i) { return static_cast<double>(x[i]); });
}

double weighted_sqdist(std::span<const float> x, std::span<const float> mu,
                       std::span<const float> curv, ExecMode mode) {
    assert(x.size() == mu.size() && x.size() == curv.size());
    return chunked_sum(static_cast<int64_t>(x.size()), mode, [&](int64_t i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(mu[i]);
        return static_cast<double>(curv[i]) * d * d;
    });
}

bool all_finite(std::span<const float> x, ExecMode mode) {
    const int64_t n = static_cast<int64_t>(x.size());
    std::atomic<bool> ok{true};
#pragma omp parallel for schedule(static) if (go_parallel(mode, n))
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) ok.store(false, std::memory_order_relaxed);
    }
    return ok.load();
}

namespace reference {

void axpy(float alpha, std::span<const float> x, std::span<const float> y,
          std::span<float> out) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = alpha * x[i] + y[i];
}

void subtract(std::span<const float> a, std::span<const float> b, std::span<float> out) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
}

void scale(float alpha, std::span<const float> x, std::span<float> out) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = alpha * x[i];
}

double sum_abs(std::span<const float> x) {
    double acc = 0.0;
    for (float v : x) acc += std::fabs(static_cast<double>(v));
    return acc;
}

double sum_f64(std::span<const float> x) {
    double acc = 0.0;
    for (float v : x) acc += static_cast<double>(v);
    return acc;
}

double weighted_sqdist(std::span<const float> x, std::span<const float> mu,
                       std::span<const float> curv) {
    double acc = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(mu[i]);
        acc += static_cast<double>(curv[i]) * d * d;
    }
    return acc;
}

}  // namespace reference

}  // namespace psomerge::kernels
