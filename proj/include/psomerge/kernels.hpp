#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "psomerge/rng.hpp"

namespace psomerge::kernels {

// All kernels produce bit-identical results in Serial and Parallel mode:
// element-wise ops are trivially order-free, reductions accumulate fixed-size
// chunk partials that are combined in chunk order, and mask kernels draw from
// the counter-based generator keyed by element index.
enum class ExecMode { Serial, Parallel };

ExecMode exec_mode();
void set_exec_mode(ExecMode mode);

// ---- element-wise ------------------------------------------------------

// out = alpha * x + y
void axpy(float alpha, std::span<const float> x, std::span<const float> y,
          std::span<float> out, ExecMode mode = exec_mode());

// out = a - b
void subtract(std::span<const float> a, std::span<const float> b,
              std::span<float> out, ExecMode mode = exec_mode());

// out = alpha * x
void scale(float alpha, std::span<const float> x, std::span<float> out,
           ExecMode mode = exec_mode());

// out_i = f32( base_i + sum_t coeffs[t] * deltas[t][i] ), accumulated in f64.
// The f64 accumulation keeps single-expert identities (base + (expert-base))
// exact at f32 output precision.
void weighted_merge(std::span<const float> base,
                    const std::vector<const float*>& deltas,
                    const std::vector<double>& coeffs,
                    std::span<float> out, ExecMode mode = exec_mode());

// ---- masks -------------------------------------------------------------

// Bernoulli(p) drop keyed by (seed, name_hash, element); survivors scaled by
// 1/(1-p). Output elements are exactly 0 or tv_i * f32(1/(1-p)).
void dare_apply(std::span<const float> tv, double p, uint64_t seed,
                uint64_t name_hash, std::span<float> out,
                ExecMode mode = exec_mode());

// Same mask stream, but with a per-element drop probability (DELLA ramp).
void prob_mask_apply(std::span<const float> tv, std::span<const double> drop_prob,
                     uint64_t seed, uint64_t name_hash, std::span<float> out,
                     ExecMode mode = exec_mode());

// Drop decision for one element; shared by the fused kernels and DropMask
// sampling so the two paths can never disagree.
inline bool drop_element(uint64_t seed, uint64_t name_hash, uint64_t index, double p) {
    return rng::u01(seed, rng::Stream::Mask, name_hash, index) < p;
}

// ---- swarm update ------------------------------------------------------

// v = w*v + c1r1*(gbest - pos) + c2r2*(pbest - pos); pos += v
void pso_update(std::span<float> velocity, std::span<float> position,
                std::span<const float> gbest, std::span<const float> pbest,
                float w, float c1r1, float c2r2, ExecMode mode = exec_mode());

// ---- reductions (deterministic chunked f64 accumulation) ----------------

double sum_abs(std::span<const float> x, ExecMode mode = exec_mode());

double sum_f64(std::span<const float> x, ExecMode mode = exec_mode());

// sum_j curv_j * (x_j - mu_j)^2
double weighted_sqdist(std::span<const float> x, std::span<const float> mu,
                       std::span<const float> curv, ExecMode mode = exec_mode());

bool all_finite(std::span<const float> x, ExecMode mode = exec_mode());

// ---- serial reference --------------------------------------------------

// Textbook single-accumulator loops kept as the independent check for the
// kernels above. Element-wise references match bit-exactly; reduction
// references are compared within tolerance (different summation order).
namespace reference {

void axpy(float alpha, std::span<const float> x, std::span<const float> y,
          std::span<float> out);
void subtract(std::span<const float> a, std::span<const float> b, std::span<float> out);
void scale(float alpha, std::span<const float> x, std::span<float> out);
double sum_abs(std::span<const float> x);
double sum_f64(std::span<const float> x);
double weighted_sqdist(std::span<const float> x, std::span<const float> mu,
                       std::span<const float> curv);

}  // namespace reference

}  // namespace psomerge::kernels
