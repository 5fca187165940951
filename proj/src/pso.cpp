#include "psomerge/pso.hpp"

#include <cstdio>
#include <fstream>

#include "psomerge/digest.hpp"
#include "psomerge/kernels.hpp"
#include "psomerge/rng.hpp"
#include "psomerge/task_vector.hpp"

namespace psomerge::pso {

void PsoHyperparams::validate() const {
    if (c1 < 0.0 || c2 < 0.0) {
        throw Error("pso: c1 and c2 must be non-negative");
    }
    if (!(w >= 0.0 && w < 1.0)) {
        throw Error("pso: momentum w must satisfy 0 <= w < 1, got " + std::to_string(w));
    }
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
        throw Error("pso: drop rate must be in [0, 1), got " + std::to_string(drop_rate));
    }
    if (steps < 1) {
        throw Error("pso: step count must be >= 1");
    }
}

namespace {

ParameterSet zero_like(const ParameterSet& ps) {
    ParameterSet out;
    for (const auto& [name, t] : ps.entries()) {
        out.add(name, t.shape, std::vector<float>(t.data.size(), 0.0f));
    }
    return out;
}

Particle make_particle(ParameterSet position, std::string label) {
    Particle p;
    p.velocity = zero_like(position);
    p.pbest_position = position;
    p.position = std::move(position);
    p.origin_label = std::move(label);
    return p;
}

}  // namespace

Swarm init_swarm(const ParameterSet& base, const std::vector<ParameterSet>& experts,
                 const PsoHyperparams& hp, uint64_t seed, SwarmInit mode,
                 const std::vector<std::string>& labels) {
    hp.validate();
    if (experts.empty()) {
        throw Error("pso: need at least one expert");
    }
    if (!labels.empty() && labels.size() != experts.size()) {
        throw Error("pso: label count does not match expert count");
    }
    for (const auto& expert : experts) {
        keyspace_check(base, expert);
    }

    auto label_of = [&](size_t i) {
        return labels.empty() ? "expert" + std::to_string(i) : labels[i];
    };

    Swarm swarm;
    swarm.hp = hp;
    swarm.seed = seed;

    if (mode == SwarmInit::Full || mode == SwarmInit::OriginalsOnly) {
        for (size_t i = 0; i < experts.size(); ++i) {
            swarm.particles.push_back(make_particle(experts[i], label_of(i)));
        }
    }
    if (mode == SwarmInit::Full || mode == SwarmInit::SparsifiedOnly) {
        for (size_t i = 0; i < experts.size(); ++i) {
            const auto tv = make_task_vector(experts[i], base);
            const auto sparse = dare_sparsify(tv, hp.drop_rate, rng::derive_seed(seed, i));
            // compose back with the base: (1-m) tv / (1-p) + theta_0
            swarm.particles.push_back(
                make_particle(axpy(1.0f, sparse.deltas, base), label_of(i) + "+dare"));
        }
    }
    if (mode == SwarmInit::Full) {
        swarm.particles.push_back(make_particle(base, "base"));
    }
    return swarm;
}

void evaluate_swarm(Swarm& swarm, const IFitnessEvaluator& fitness, EvalCache* cache,
                    RunTrace* trace) {
    for (size_t t = 0; t < swarm.particles.size(); ++t) {
        Particle& p = swarm.particles[t];
        FitnessReport report;
        const uint64_t digest = content_digest(p.position);
        if (cache != nullptr) {
            if (auto it = cache->find(digest); it != cache->end()) {
                report = it->second;
            } else {
                try {
                    report = fitness.evaluate(p.position);
                } catch (const Error& e) {
                    throw EvaluatorError("evaluation failed at step " +
                                         std::to_string(swarm.step) + ", particle " +
                                         std::to_string(t) + ": " + e.what());
                }
                cache->emplace(digest, report);
            }
        } else {
            try {
                report = fitness.evaluate(p.position);
            } catch (const Error& e) {
                throw EvaluatorError("evaluation failed at step " +
                                     std::to_string(swarm.step) + ", particle " +
                                     std::to_string(t) + ": " + e.what());
            }
        }
        p.last_fitness = report.mean;
        // strict improvement only; ties keep the earlier pbest
        if (!p.pbest_fitness.has_value()) {
            p.pbest_fitness = report.mean;
            p.pbest_position = p.position;
        } else if (report.mean > *p.pbest_fitness) {
            p.pbest_fitness = report.mean;
            p.pbest_position = p.position;
        }
    }

    int best = -1;
    for (size_t t = 0; t < swarm.particles.size(); ++t) {
        const auto& f = swarm.particles[t].pbest_fitness;
        if (best < 0 || *f > *swarm.particles[static_cast<size_t>(best)].pbest_fitness) {
            best = static_cast<int>(t);
        }
    }
    swarm.gbest_index = best;
    swarm.gbest_fitness = swarm.particles[static_cast<size_t>(best)].pbest_fitness;
    swarm.gbest_position = swarm.particles[static_cast<size_t>(best)].pbest_position;

    if (trace != nullptr) {
        for (size_t t = 0; t < swarm.particles.size(); ++t) {
            const Particle& p = swarm.particles[t];
            trace->rows.push_back({swarm.step, static_cast<int>(t), p.origin_label,
                                   *p.last_fitness, static_cast<int>(t) == best});
        }
        trace->gbest_per_step.push_back(*swarm.gbest_fitness);
    }
}

std::pair<double, double> draw_r(uint64_t seed, int particle, int step) {
    return rng::u01_pair(seed, rng::Stream::Velocity, static_cast<uint64_t>(particle),
                         static_cast<uint64_t>(step));
}

void apply_velocity_update(Particle& particle, const ParameterSet& gbest,
                           const PsoHyperparams& hp, double r1, double r2) {
    const float w = static_cast<float>(hp.w);
    const float c1r1 = static_cast<float>(hp.c1 * r1);
    const float c2r2 = static_cast<float>(hp.c2 * r2);
    for (auto& [name, vel] : particle.velocity.entries()) {
        auto& pos = particle.position.entries().at(name);
        kernels::pso_update(vel.data, pos.data, gbest.at(name).data,
                            particle.pbest_position.at(name).data, w, c1r1, c2r2);
    }
}

void step_swarm(Swarm& swarm) {
    if (!swarm.gbest_fitness.has_value()) {
        throw Error("pso: step_swarm called before the swarm was evaluated");
    }
    const int next_step = swarm.step + 1;
    for (size_t t = 0; t < swarm.particles.size(); ++t) {
        const auto [r1, r2] = draw_r(swarm.seed, static_cast<int>(t), next_step);
        apply_velocity_update(swarm.particles[t], swarm.gbest_position, swarm.hp, r1, r2);
        for (const auto& [name, tensor] : swarm.particles[t].position.entries()) {
            if (!kernels::all_finite(tensor.data)) {
                throw DivergenceError("pso: non-finite position in tensor '" + name +
                                          "' (particle " + std::to_string(t) + ", step " +
                                          std::to_string(next_step) + ")",
                                      static_cast<int>(t), next_step);
            }
        }
    }
    swarm.step = next_step;
}

void write_trace_csv(const RunTrace& trace, const std::filesystem::path& path) {
    std::ofstream file(path, std::ios::trunc);
    if (!file) {
        throw Error("cannot open trace file '" + path.string() + "'");
    }
    file << "step,particle_index,origin_label,fitness,is_gbest\n";
    char buf[64];
    for (const auto& row : trace.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.fitness);
        file << row.step << "," << row.particle << "," << row.origin << "," << buf << ","
             << (row.is_gbest ? 1 : 0) << "\n";
    }
    if (!file) {
        throw Error("write failed for trace file '" + path.string() + "'");
    }
}

PsoResult run_pso_merge(const ParameterSet& base,
                        const std::vector<ParameterSet>& experts,
                        const PsoHyperparams& hp, const IFitnessEvaluator& fitness,
                        uint64_t seed, const RunOptions& options) {
    Swarm swarm = init_swarm(base, experts, hp, seed, options.init_mode, options.labels);
    EvalCache cache;
    PsoResult result;

    auto holdout_eval = [&]() {
        if (options.holdout != nullptr) {
            result.trace.holdout_per_step.push_back(
                options.holdout->evaluate(swarm.gbest_position).mean);
        }
    };

    evaluate_swarm(swarm, fitness, &cache, &result.trace);
    holdout_eval();
    for (int i = 0; i < hp.steps; ++i) {
        step_swarm(swarm);
        evaluate_swarm(swarm, fitness, &cache, &result.trace);
        holdout_eval();
    }

    result.merged = swarm.gbest_position;
    result.gbest_fitness = *swarm.gbest_fitness;
    // the gbest position was scored when it became a pbest, so this is a hit
    result.gbest_report = cache.at(content_digest(result.merged));
    return result;
}

}  // namespace psomerge::pso
