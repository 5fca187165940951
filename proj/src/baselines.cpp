#include "psomerge/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psomerge/kernels.hpp"
#include "psomerge/rng.hpp"
#include "psomerge/task_vector.hpp"

namespace psomerge {

namespace {

void check_experts(const ParameterSet& base, const std::vector<ParameterSet>& experts) {
    if (experts.empty()) {
        throw Error("need at least one expert to merge");
    }
    for (const auto& expert : experts) {
        keyspace_check(base, expert);
    }
}

std::vector<TaskVector> build_task_vectors(const ParameterSet& base,
                                           const std::vector<ParameterSet>& experts) {
    std::vector<TaskVector> tvs;
    tvs.reserve(experts.size());
    for (const auto& expert : experts) {
        tvs.push_back(make_task_vector(expert, base));
    }
    return tvs;
}

// base + sum_t coeffs[t] * tv_t, accumulated in f64 per element.
ParameterSet combine(const ParameterSet& base, const std::vector<TaskVector>& tvs,
                     const std::vector<double>& coeffs) {
    ParameterSet out;
    for (const auto& [name, tb] : base.entries()) {
        std::vector<const float*> deltas;
        deltas.reserve(tvs.size());
        for (const auto& tv : tvs) deltas.push_back(tv.deltas.at(name).data.data());
        TensorBuffer t;
        t.shape = tb.shape;
        t.data.resize(tb.data.size());
        kernels::weighted_merge(tb.data, deltas, coeffs, t.data);
        out.add(name, std::move(t));
    }
    out.metadata() = base.metadata();
    return out;
}

ParameterSet combine_one(const ParameterSet& base, const TaskVector& tv, double lambda) {
    std::vector<TaskVector> tvs;
    tvs.push_back(TaskVector{tv.deltas});  // shallow rebuild; deltas copied
    return combine(base, tvs, {lambda});
}

}  // namespace

MergeMethod parse_merge_method(const std::string& name) {
    if (name == "task_arithmetic") return MergeMethod::TaskArithmetic;
    if (name == "dare_linear") return MergeMethod::DareLinear;
    if (name == "ties") return MergeMethod::Ties;
    if (name == "dare_ties") return MergeMethod::DareTies;
    if (name == "della") return MergeMethod::Della;
    if (name == "rankmean") return MergeMethod::RankMean;
    if (name == "es_weight_search") return MergeMethod::EsWeightSearch;
    std::string valid;
    for (const auto& m : merge_method_names()) valid += (valid.empty() ? "" : ", ") + m;
    throw ConfigError("unknown merge method '" + name + "' (valid: " + valid + ")");
}

std::string merge_method_name(MergeMethod method) {
    switch (method) {
        case MergeMethod::TaskArithmetic: return "task_arithmetic";
        case MergeMethod::DareLinear: return "dare_linear";
        case MergeMethod::Ties: return "ties";
        case MergeMethod::DareTies: return "dare_ties";
        case MergeMethod::Della: return "della";
        case MergeMethod::RankMean: return "rankmean";
        case MergeMethod::EsWeightSearch: return "es_weight_search";
    }
    return "task_arithmetic";
}

std::vector<std::string> merge_method_names() {
    return {"task_arithmetic", "dare_linear", "ties",  "dare_ties",
            "della",           "rankmean",    "es_weight_search"};
}

ParameterSet task_arithmetic(const ParameterSet& base,
                             const std::vector<ParameterSet>& experts, double lambda) {
    check_experts(base, experts);
    const auto tvs = build_task_vectors(base, experts);
    return combine(base, tvs, std::vector<double>(experts.size(), lambda));
}

ParameterSet dare_linear(const ParameterSet& base,
                         const std::vector<ParameterSet>& experts, double lambda,
                         double p, uint64_t seed) {
    check_experts(base, experts);
    std::vector<TaskVector> sparsified;
    sparsified.reserve(experts.size());
    for (size_t t = 0; t < experts.size(); ++t) {
        sparsified.push_back(dare_sparsify(make_task_vector(experts[t], base), p,
                                           rng::derive_seed(seed, t)));
    }
    return combine(base, sparsified, std::vector<double>(experts.size(), lambda));
}

ParameterSet ties_merge(const ParameterSet& base,
                        const std::vector<ParameterSet>& experts, double lambda,
                        double keep_fraction) {
    check_experts(base, experts);
    const auto ties = ties_trim_elect(build_task_vectors(base, experts), keep_fraction);
    return combine_one(base, ties.merged, lambda);
}

ParameterSet dare_ties(const ParameterSet& base,
                       const std::vector<ParameterSet>& experts, double lambda,
                       double p, double keep_fraction, uint64_t seed) {
    check_experts(base, experts);
    std::vector<TaskVector> sparsified;
    sparsified.reserve(experts.size());
    for (size_t t = 0; t < experts.size(); ++t) {
        sparsified.push_back(dare_sparsify(make_task_vector(experts[t], base), p,
                                           rng::derive_seed(seed, t)));
    }
    const auto ties = ties_trim_elect(sparsified, keep_fraction);
    return combine_one(base, ties.merged, lambda);
}

ParameterSet della_merge(const ParameterSet& base,
                         const std::vector<ParameterSet>& experts, double lambda,
                         double p, double epsilon, uint64_t seed) {
    check_experts(base, experts);
    std::vector<TaskVector> pruned;
    pruned.reserve(experts.size());
    for (size_t t = 0; t < experts.size(); ++t) {
        pruned.push_back(della_prune(make_task_vector(experts[t], base), p, epsilon,
                                     rng::derive_seed(seed, t)));
    }
    // DELLA's magnitude-rank prune replaces the TIES trim; elect/mean runs on
    // the full pruned vectors.
    const auto ties = ties_trim_elect(pruned, 1.0);
    return combine_one(base, ties.merged, lambda);
}

ParameterSet rankmean_merge(const ParameterSet& base,
                            const std::vector<ParameterSet>& experts) {
    check_experts(base, experts);
    const auto tvs = build_task_vectors(base, experts);
    const auto weights = rankmean_weights(tvs);

    ParameterSet out;
    for (const auto& [name, tb] : base.entries()) {
        std::vector<const float*> deltas;
        for (const auto& tv : tvs) deltas.push_back(tv.deltas.at(name).data.data());
        TensorBuffer t;
        t.shape = tb.shape;
        t.data.resize(tb.data.size());
        kernels::weighted_merge(tb.data, deltas, weights.at(name), t.data);
        out.add(name, std::move(t));
    }
    out.metadata() = base.metadata();
    return out;
}

int es_default_population(size_t n_experts) {
    return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n_experts))));
}

EsResult es_weight_search(const ParameterSet& base,
                          const std::vector<ParameterSet>& experts,
                          const IFitnessEvaluator& fitness, int budget,
                          const EsParams& params, uint64_t seed) {
    check_experts(base, experts);
    const size_t n = experts.size();

    int population = params.population;
    if (population <= 0) {
        population = es_default_population(n);
    }
    if (budget < population) {
        throw Error("es budget " + std::to_string(budget) + " is below the population size " +
                    std::to_string(population));
    }
    int generations = params.generations;
    if (generations <= 0) generations = budget / population;
    generations = std::min(generations, budget / population);
    const int elite = std::max(1, population / 2);

    const auto tvs = build_task_vectors(base, experts);
    std::vector<double> mean(n, 1.0 / static_cast<double>(n));

    EsResult best;
    best.best_fitness = -std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> candidates(static_cast<size_t>(population));
    std::vector<double> scores(static_cast<size_t>(population));

    for (int gen = 0; gen < generations; ++gen) {
        for (int c = 0; c < population; ++c) {
            auto& w = candidates[static_cast<size_t>(c)];
            w.resize(n);
            for (size_t j = 0; j < n; ++j) {
                const uint64_t draw = static_cast<uint64_t>(gen) * static_cast<uint64_t>(population) +
                                      static_cast<uint64_t>(c);
                w[j] = std::clamp(mean[j] + params.sigma * rng::normal(seed, rng::Stream::EsSample, draw, j),
                                  -1.0, 2.0);
            }
            scores[static_cast<size_t>(c)] = fitness.evaluate(combine(base, tvs, w)).mean;
            ++best.evaluations;
            if (scores[static_cast<size_t>(c)] > best.best_fitness) {
                best.best_fitness = scores[static_cast<size_t>(c)];
                best.weights = w;
            }
        }
        // (mu, lambda) selection: the new mean averages this generation's elites
        std::vector<int> order(static_cast<size_t>(population));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        });
        std::fill(mean.begin(), mean.end(), 0.0);
        for (int e = 0; e < elite; ++e) {
            const auto& w = candidates[static_cast<size_t>(order[static_cast<size_t>(e)])];
            for (size_t j = 0; j < n; ++j) mean[j] += w[j] / static_cast<double>(elite);
        }
    }

    best.merged = combine(base, tvs, best.weights);
    return best;
}

ParameterSet run_recipe(const MergeRecipe& recipe, const ParameterSet& base,
                        const std::vector<ParameterSet>& experts,
                        const IFitnessEvaluator* fitness) {
    check_experts(base, experts);
    const double lambda =
        recipe.scaling.value_or(1.0 / static_cast<double>(experts.size()));
    switch (recipe.method) {
        case MergeMethod::TaskArithmetic:
            return task_arithmetic(base, experts, lambda);
        case MergeMethod::DareLinear:
            return dare_linear(base, experts, lambda, recipe.drop_rate, recipe.seed);
        case MergeMethod::Ties:
            return ties_merge(base, experts, lambda, recipe.keep_fraction);
        case MergeMethod::DareTies:
            return dare_ties(base, experts, lambda, recipe.drop_rate,
                             recipe.keep_fraction, recipe.seed);
        case MergeMethod::Della:
            return della_merge(base, experts, lambda, recipe.drop_rate, recipe.epsilon,
                               recipe.seed);
        case MergeMethod::RankMean:
            return rankmean_merge(base, experts);
        case MergeMethod::EsWeightSearch: {
            if (fitness == nullptr) {
                throw ConfigError("es_weight_search requires a configured evaluator");
            }
            const int budget = recipe.es_budget > 0
                                   ? recipe.es_budget
                                   : static_cast<int>(experts.size()) * 5;
            return es_weight_search(base, experts, *fitness, budget, recipe.es,
                                    recipe.seed)
                .merged;
        }
    }
    throw ConfigError("unhandled merge method");
}

}  // namespace psomerge
