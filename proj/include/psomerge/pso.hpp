#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "psomerge/fitness.hpp"
#include "psomerge/tensor.hpp"

namespace psomerge::pso {

struct PsoHyperparams {
    double c1 = 2.0;        // pull toward the global best
    double c2 = 2.0;        // pull toward the personal best
    double w = 0.2;         // momentum
    double drop_rate = 0.8; // DARE rate for the sparsified particles
    int steps = 5;

    void validate() const;
};

struct Particle {
    ParameterSet position;
    ParameterSet velocity;  // same keyspace, starts all-zero
    ParameterSet pbest_position;
    std::optional<double> pbest_fitness;
    std::optional<double> last_fitness;
    std::string origin_label;
};

// Which subset of the 2n+1 construction seeds the swarm.
enum class SwarmInit { Full, OriginalsOnly, SparsifiedOnly };

struct Swarm {
    std::vector<Particle> particles;
    ParameterSet gbest_position;
    std::optional<double> gbest_fitness;
    int gbest_index = -1;
    int step = 0;
    PsoHyperparams hp;
    uint64_t seed = 0;
};

struct TraceRow {
    int step;
    int particle;
    std::string origin;
    double fitness;
    bool is_gbest;
};

struct RunTrace {
    std::vector<TraceRow> rows;
    std::vector<double> gbest_per_step;
    std::vector<double> holdout_per_step;  // only with a holdout evaluator
};

void write_trace_csv(const RunTrace& trace, const std::filesystem::path& path);

// 2n+1 particles: the n experts, their DARE-sparsified copies (re-composed
// with the base), and the base itself. Velocities start at zero; fitness
// fields stay unset until the first evaluation.
Swarm init_swarm(const ParameterSet& base, const std::vector<ParameterSet>& experts,
                 const PsoHyperparams& hp, uint64_t seed,
                 SwarmInit mode = SwarmInit::Full,
                 const std::vector<std::string>& labels = {});

using EvalCache = std::unordered_map<uint64_t, FitnessReport>;

// Scores every particle's current position (reusing cached scores for
// identical positions), updates personal bests on strict improvement, and
// recomputes the global best (ties to the lowest particle index).
void evaluate_swarm(Swarm& swarm, const IFitnessEvaluator& fitness,
                    EvalCache* cache = nullptr, RunTrace* trace = nullptr);

// The scalar r1, r2 pair a given particle draws for a given step.
std::pair<double, double> draw_r(uint64_t seed, int particle, int step);

// Synchronous update: every particle sees the step-(i-1) global best.
// Throws DivergenceError if any position goes non-finite.
void step_swarm(Swarm& swarm);

// One particle's velocity/position update with explicit r1, r2.
void apply_velocity_update(Particle& particle, const ParameterSet& gbest,
                           const PsoHyperparams& hp, double r1, double r2);

struct RunOptions {
    SwarmInit init_mode = SwarmInit::Full;
    std::vector<std::string> labels;
    const IFitnessEvaluator* holdout = nullptr;  // optional per-step gbest eval
};

struct PsoResult {
    ParameterSet merged;
    double gbest_fitness = 0.0;
    FitnessReport gbest_report;
    RunTrace trace;
};

// init -> [evaluate; step] x S -> final evaluate; the merged model is the
// final global best. The trace holds S+1 evaluations per particle.
PsoResult run_pso_merge(const ParameterSet& base,
                        const std::vector<ParameterSet>& experts,
                        const PsoHyperparams& hp, const IFitnessEvaluator& fitness,
                        uint64_t seed, const RunOptions& options = {});

}  // namespace psomerge::pso
