#include "psomerge/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "psomerge/baselines.hpp"
#include "psomerge/error.hpp"

namespace psomerge::bench {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Collector {
    BenchResult& result;
    std::map<std::string, size_t> index;

    MethodOutcome& row(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) {
            index.emplace(name, result.methods.size());
            result.methods.push_back(MethodOutcome{name, {}, {}, {}, 0});
            return result.methods.back();
        }
        return result.methods[it->second];
    }

    void record(const std::string& name, const FitnessReport& report) {
        auto& outcome = row(name);
        for (const auto& [task, score] : report.per_task) {
            outcome.per_task_by_seed[task].push_back(score);
        }
        outcome.mean_by_seed.push_back(report.mean);
    }

    void record_diverged(const std::string& name,
                         const std::vector<std::string>& tasks) {
        auto& outcome = row(name);
        for (const auto& task : tasks) outcome.per_task_by_seed[task].push_back(kNaN);
        outcome.mean_by_seed.push_back(kNaN);
        ++outcome.diverged;
    }
};

// Fixed-scaling baselines try both 1/n and 1.0 and keep the better run.
template <typename MergeFn>
FitnessReport best_of_scalings(const SyntheticSetup& setup, MergeFn&& merge) {
    const double inv_n = 1.0 / static_cast<double>(setup.experts.size());
    FitnessReport a = setup.evaluator->evaluate(merge(inv_n));
    FitnessReport b = setup.evaluator->evaluate(merge(1.0));
    return a.mean >= b.mean ? a : b;
}

}  // namespace

const MethodOutcome& BenchResult::row(const std::string& name) const {
    for (const auto& method : methods) {
        if (method.name == name) return method;
    }
    throw Error("bench: no method row named '" + name + "'");
}

double median(std::vector<double> values) {
    std::erase_if(values, [](double v) { return std::isnan(v); });
    if (values.empty()) return kNaN;
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double gain_fraction_by(const pso::RunTrace& trace, int by_step) {
    const auto& g = trace.gbest_per_step;
    if (g.empty()) return kNaN;
    const double start = g.front();
    const double final_gain = g.back() - start;
    if (final_gain <= 0.0) return 1.0;
    const size_t idx = std::min<size_t>(static_cast<size_t>(by_step), g.size() - 1);
    return (g[idx] - start) / final_gain;
}

MomentumSeedOutcome momentum_outcome(const pso::RunTrace& trace) {
    MomentumSeedOutcome outcome;
    if (trace.rows.empty()) return outcome;
    const int last_step = trace.rows.back().step;
    const double gbest = trace.gbest_per_step.back();
    bool all_within = true;
    for (const auto& row : trace.rows) {
        if (row.step == last_step && row.fitness < 0.9 * gbest) {
            all_within = false;
        }
    }
    outcome.all_within = all_within;
    return outcome;
}

BenchResult run_bench(const SetupFactory& factory, const BenchOptions& options) {
    if (options.seeds < 1) {
        throw Error("bench: need at least one seed");
    }
    options.hp.validate();

    BenchResult result;
    Collector collect{result, {}};

    for (int s = 0; s < options.seeds; ++s) {
        const uint64_t seed = options.first_seed + static_cast<uint64_t>(s);
        const SyntheticSetup setup = factory(seed);
        const IFitnessEvaluator& fitness = *setup.evaluator;
        if (s == 0) {
            result.task_names = fitness.task_names();
        }

        for (size_t e = 0; e < setup.experts.size(); ++e) {
            collect.record(setup.labels[e], fitness.evaluate(setup.experts[e]));
        }
        collect.record("base", fitness.evaluate(setup.base));

        collect.record("task_arithmetic", best_of_scalings(setup, [&](double lam) {
                           return task_arithmetic(setup.base, setup.experts, lam);
                       }));
        collect.record("dare_linear", best_of_scalings(setup, [&](double lam) {
                           return dare_linear(setup.base, setup.experts, lam,
                                              options.hp.drop_rate, seed);
                       }));
        collect.record("ties", best_of_scalings(setup, [&](double lam) {
                           return ties_merge(setup.base, setup.experts, lam,
                                             options.keep_fraction);
                       }));
        collect.record("dare_ties", best_of_scalings(setup, [&](double lam) {
                           return dare_ties(setup.base, setup.experts, lam,
                                            options.hp.drop_rate, options.keep_fraction,
                                            seed);
                       }));
        collect.record("della", best_of_scalings(setup, [&](double lam) {
                           return della_merge(setup.base, setup.experts, lam,
                                              options.hp.drop_rate, options.epsilon,
                                              seed);
                       }));
        collect.record("rankmean",
                       fitness.evaluate(rankmean_merge(setup.base, setup.experts)));

        if (options.include_es) {
            // evaluation budget matched to n * S, floored at one generation
            const int budget =
                std::max(static_cast<int>(setup.experts.size()) * options.hp.steps,
                         es_default_population(setup.experts.size()));
            const auto es = es_weight_search(setup.base, setup.experts, fitness, budget,
                                             EsParams{}, seed);
            collect.record("evo", fitness.evaluate(es.merged));
        }

        pso::RunOptions run_opts;
        run_opts.labels = setup.labels;
        {
            auto pso_result = pso::run_pso_merge(setup.base, setup.experts, options.hp,
                                                 fitness, seed, run_opts);
            collect.record("pso", fitness.evaluate(pso_result.merged));
            collect.row("pso").traces.push_back(std::move(pso_result.trace));
        }

        if (options.include_ablation) {
            run_opts.init_mode = pso::SwarmInit::OriginalsOnly;
            auto originals = pso::run_pso_merge(setup.base, setup.experts, options.hp,
                                                fitness, seed, run_opts);
            collect.record("pso_originals_only", fitness.evaluate(originals.merged));
            collect.row("pso_originals_only").traces.push_back(std::move(originals.trace));

            run_opts.init_mode = pso::SwarmInit::SparsifiedOnly;
            auto sparsified = pso::run_pso_merge(setup.base, setup.experts, options.hp,
                                                 fitness, seed, run_opts);
            collect.record("pso_sparsified_only", fitness.evaluate(sparsified.merged));
            collect.row("pso_sparsified_only")
                .traces.push_back(std::move(sparsified.trace));
            run_opts.init_mode = pso::SwarmInit::Full;
        }

        for (double w : options.momentum_w) {
            pso::PsoHyperparams hp = options.hp;
            hp.w = w;
            hp.steps = options.momentum_steps;
            char label[32];
            std::snprintf(label, sizeof(label), "pso[w=%g]", w);
            try {
                auto swept = pso::run_pso_merge(setup.base, setup.experts, hp, fitness,
                                                seed, run_opts);
                collect.record(label, fitness.evaluate(swept.merged));
                collect.row(label).traces.push_back(std::move(swept.trace));
            } catch (const DivergenceError&) {
                collect.record_diverged(label, fitness.task_names());
                collect.row(label).traces.emplace_back();
            }
        }

        // closed-form reference for quadratic landscapes
        if (auto* quad = dynamic_cast<const QuadraticEvaluator*>(&fitness)) {
            result.optimum_score_by_seed.push_back(
                fitness.evaluate(quadratic_weighted_optimum(quad->tasks())).mean);
        }
    }
    return result;
}

namespace {

std::string cell(double value) {
    if (std::isnan(value)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", value);
    return buf;
}

}  // namespace

void write_table_markdown(const BenchResult& result, std::ostream& os) {
    os << "| method |";
    for (const auto& task : result.task_names) os << " " << task << " |";
    os << " AVG |\n";
    os << "|---|";
    for (size_t i = 0; i < result.task_names.size(); ++i) os << "---|";
    os << "---|\n";
    for (const auto& method : result.methods) {
        os << "| " << method.name << " |";
        for (const auto& task : result.task_names) {
            os << " " << cell(median(method.per_task_by_seed.at(task))) << " |";
        }
        os << " " << cell(median(method.mean_by_seed)) << " |\n";
    }
}

void write_table_csv(const BenchResult& result, std::ostream& os) {
    os << "method";
    for (const auto& task : result.task_names) os << "," << task;
    os << ",AVG\n";
    for (const auto& method : result.methods) {
        os << method.name;
        for (const auto& task : result.task_names) {
            os << "," << cell(median(method.per_task_by_seed.at(task)));
        }
        os << "," << cell(median(method.mean_by_seed)) << "\n";
    }
}

}  // namespace psomerge::bench
