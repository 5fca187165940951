#pragma once

#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "psomerge/fitness.hpp"
#include "psomerge/pso.hpp"

namespace psomerge::bench {

using SetupFactory = std::function<SyntheticSetup(uint64_t seed)>;

struct BenchOptions {
    int seeds = 20;
    uint64_t first_seed = 1;
    pso::PsoHyperparams hp;
    double keep_fraction = 0.2;
    double epsilon = 0.1;
    bool include_ablation = true;        // originals-only / sparsified-only rows
    bool include_es = true;
    std::vector<double> momentum_w;      // extra full-swarm rows at other w
    int momentum_steps = 40;
};

struct MethodOutcome {
    std::string name;
    std::map<std::string, std::vector<double>> per_task_by_seed;
    std::vector<double> mean_by_seed;    // NaN where the run diverged
    std::vector<pso::RunTrace> traces;   // swarm rows only, one per seed
    int diverged = 0;
};

struct BenchResult {
    std::vector<std::string> task_names;
    std::vector<MethodOutcome> methods;
    std::vector<double> optimum_score_by_seed;  // quadratic landscapes only

    const MethodOutcome& row(const std::string& name) const;
};

// Per seed: rebuild the synthetic setup, run every static baseline (fixed
// scaling terms try 1/n and 1.0, keeping the higher mean), the ES search,
// the swarm search, and the swarm-composition ablations; score every merged
// model on the setup's evaluator.
BenchResult run_bench(const SetupFactory& factory, const BenchOptions& options);

double median(std::vector<double> values);

// Fraction of the final gbest gain reached by `by_step` (1.0 when the run
// never improved on its initial gbest).
double gain_fraction_by(const pso::RunTrace& trace, int by_step);

struct MomentumSeedOutcome {
    bool diverged = false;
    bool all_within = false;  // every particle's final fitness >= 0.9 * gbest
};

MomentumSeedOutcome momentum_outcome(const pso::RunTrace& trace);

void write_table_markdown(const BenchResult& result, std::ostream& os);
void write_table_csv(const BenchResult& result, std::ostream& os);

}  // namespace psomerge::bench
