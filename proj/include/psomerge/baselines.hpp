#pragma once

#include <optional>
#include <string>
#include <vector>

#include "psomerge/fitness.hpp"
#include "psomerge/tensor.hpp"

namespace psomerge {

enum class MergeMethod {
    TaskArithmetic,
    DareLinear,
    Ties,
    DareTies,
    Della,
    RankMean,
    EsWeightSearch,
};

MergeMethod parse_merge_method(const std::string& name);
std::string merge_method_name(MergeMethod method);
std::vector<std::string> merge_method_names();

struct EsParams {
    int population = 0;    // 0 -> es_default_population(n)
    int generations = 0;   // 0 -> budget / population
    double sigma = 0.3;
};

// 4 + floor(3 ln n)
int es_default_population(size_t n_experts);

struct MergeRecipe {
    MergeMethod method = MergeMethod::TaskArithmetic;
    std::optional<double> scaling;  // unset -> 1/n
    double drop_rate = 0.8;
    double keep_fraction = 0.2;
    double epsilon = 0.1;
    uint64_t seed = 0;
    EsParams es;
    int es_budget = 0;  // 0 -> n * 5
};

// theta_0 + lambda * sum_t (theta_t - theta_0)
ParameterSet task_arithmetic(const ParameterSet& base,
                             const std::vector<ParameterSet>& experts, double lambda);

// Task vectors DARE-sparsified per expert (seed_t derived from seed and the
// expert index) before the arithmetic combination.
ParameterSet dare_linear(const ParameterSet& base,
                         const std::vector<ParameterSet>& experts, double lambda,
                         double p, uint64_t seed);

ParameterSet ties_merge(const ParameterSet& base,
                        const std::vector<ParameterSet>& experts, double lambda,
                        double keep_fraction);

ParameterSet dare_ties(const ParameterSet& base,
                       const std::vector<ParameterSet>& experts, double lambda,
                       double p, double keep_fraction, uint64_t seed);

// DELLA prune per expert, then the TIES elect/mean stage (no second trim).
ParameterSet della_merge(const ParameterSet& base,
                         const std::vector<ParameterSet>& experts, double lambda,
                         double p, double epsilon, uint64_t seed);

ParameterSet rankmean_merge(const ParameterSet& base,
                            const std::vector<ParameterSet>& experts);

struct EsResult {
    ParameterSet merged;
    std::vector<double> weights;
    double best_fitness = 0.0;
    int evaluations = 0;
};

// Simplified Gaussian (mu, lambda)-ES over per-expert task-arithmetic
// weights: fixed step sigma, elite fraction 1/2, weights initialized at 1/n
// and clamped to [-1, 2]. Never exceeds `budget` fitness evaluations.
EsResult es_weight_search(const ParameterSet& base,
                          const std::vector<ParameterSet>& experts,
                          const IFitnessEvaluator& fitness, int budget,
                          const EsParams& params, uint64_t seed);

// Dispatch for the CLI; `fitness` may be null for the static methods.
ParameterSet run_recipe(const MergeRecipe& recipe, const ParameterSet& base,
                        const std::vector<ParameterSet>& experts,
                        const IFitnessEvaluator* fitness);

}  // namespace psomerge
