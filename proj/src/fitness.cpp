#include "psomerge/fitness.hpp"

#include <cmath>

#include "psomerge/kernels.hpp"
#include "psomerge/mlp.hpp"
#include "psomerge/rng.hpp"

namespace psomerge {

FitnessReport make_report(std::map<std::string, double> per_task) {
    if (per_task.empty()) {
        throw Error("fitness report needs at least one task score");
    }
    double sum = 0.0;
    for (const auto& [name, score] : per_task) sum += score;
    FitnessReport report;
    report.mean = sum / static_cast<double>(per_task.size());
    report.per_task = std::move(per_task);
    return report;
}

double quadratic_score(const QuadraticTask& task, const ParameterSet& theta) {
    keyspace_check(task.optimum, theta);
    double q = 0.0;
    for (const auto& [name, t] : theta.entries()) {
        q += kernels::weighted_sqdist(t.data, task.optimum.at(name).data,
                                      task.diag_curvature.at(name).data);
    }
    return std::exp(-task.sharpness * 0.5 * q);
}

QuadraticEvaluator::QuadraticEvaluator(std::vector<QuadraticTask> tasks)
    : tasks_(std::move(tasks)) {
    if (tasks_.empty()) {
        throw Error("quadratic evaluator needs at least one task");
    }
    for (const auto& task : tasks_) {
        names_.push_back(task.name);
        for (const auto& [name, t] : task.diag_curvature.entries()) {
            for (float c : t.data) {
                if (!(c > 0.0f)) {
                    throw Error("quadratic task '" + task.name +
                                "' has non-positive curvature in tensor '" + name + "'");
                }
            }
        }
    }
}

FitnessReport QuadraticEvaluator::evaluate(const ParameterSet& theta) const {
    std::map<std::string, double> scores;
    for (const auto& task : tasks_) {
        scores[task.name] = quadratic_score(task, theta);
    }
    return make_report(std::move(scores));
}

const std::vector<std::string>& QuadraticEvaluator::task_names() const { return names_; }

std::vector<QuadraticTask> make_quadratic_tasks(const QuadraticSpec& spec) {
    if (spec.n_tasks < 1 || spec.dim < spec.n_tasks) {
        throw Error("quadratic spec needs n_tasks >= 1 and dim >= n_tasks");
    }
    if (spec.curv_own.empty()) {
        throw Error("quadratic spec needs at least one curv_own value");
    }
    const int64_t n = spec.n_tasks;
    std::vector<QuadraticTask> tasks;
    for (int64_t i = 0; i < n; ++i) {
        const int64_t lo = spec.dim * i / n;
        const int64_t hi = spec.dim * (i + 1) / n;
        const double own =
            spec.curv_own[std::min(static_cast<size_t>(i), spec.curv_own.size() - 1)];
        std::vector<float> mu(static_cast<size_t>(spec.dim), 0.0f);
        std::vector<float> curv(static_cast<size_t>(spec.dim),
                                static_cast<float>(spec.curv_other));
        for (int64_t j = lo; j < hi; ++j) {
            mu[static_cast<size_t>(j)] = static_cast<float>(spec.block_value);
            curv[static_cast<size_t>(j)] = static_cast<float>(own);
        }
        QuadraticTask task;
        task.name = "task" + std::to_string(i);
        task.optimum.add("theta", {spec.dim}, std::move(mu));
        task.diag_curvature.add("theta", {spec.dim}, std::move(curv));
        task.sharpness = spec.sharpness;
        tasks.push_back(std::move(task));
    }
    return tasks;
}

ParameterSet quadratic_weighted_optimum(const std::vector<QuadraticTask>& tasks) {
    if (tasks.empty()) {
        throw Error("need at least one quadratic task");
    }
    ParameterSet out;
    for (const auto& [name, t] : tasks[0].optimum.entries()) {
        const size_t n = t.data.size();
        std::vector<float> opt(n);
        for (size_t j = 0; j < n; ++j) {
            double num = 0.0, den = 0.0;
            for (const auto& task : tasks) {
                const double w = task.sharpness *
                                 static_cast<double>(task.diag_curvature.at(name).data[j]);
                num += w * static_cast<double>(task.optimum.at(name).data[j]);
                den += w;
            }
            opt[j] = static_cast<float>(num / den);
        }
        out.add(name, t.shape, std::move(opt));
    }
    return out;
}

SyntheticSetup make_synthetic_experts(const QuadraticSpec& spec, double noise,
                                      uint64_t seed) {
    auto tasks = make_quadratic_tasks(spec);

    SyntheticSetup setup;
    for (const auto& [name, t] : tasks[0].optimum.entries()) {
        setup.base.add(name, t.shape, std::vector<float>(t.data.size(), 0.0f));
    }
    for (size_t i = 0; i < tasks.size(); ++i) {
        const uint64_t expert_seed = rng::derive_seed(seed, i);
        ParameterSet expert;
        for (const auto& [name, t] : tasks[i].optimum.entries()) {
            const uint64_t h = rng::fnv1a64(name);
            std::vector<float> data(t.data.size());
            for (size_t j = 0; j < data.size(); ++j) {
                data[j] = t.data[j] +
                          static_cast<float>(noise * rng::normal(expert_seed, rng::Stream::Noise, h, j));
            }
            expert.add(name, t.shape, std::move(data));
        }
        setup.experts.push_back(std::move(expert));
        setup.labels.push_back("expert" + std::to_string(i));
    }
    setup.evaluator = std::make_shared<QuadraticEvaluator>(std::move(tasks));
    return setup;
}

SyntheticSetup mlp_synthetic_build(uint64_t seed) {
    auto tasks = mlp::make_blob_tasks(seed);
    ParameterSet base = mlp::random_base(rng::derive_seed(seed, 1000));

    SyntheticSetup setup;
    for (size_t i = 0; i < tasks.size(); ++i) {
        ParameterSet expert = mlp::train(base, tasks[i].train, 500, 0.1f);
        const double own = mlp::accuracy(expert, tasks[i].opt);
        if (own < 0.9) {
            throw Error("mlp expert for '" + tasks[i].name + "' only reached accuracy " +
                        std::to_string(own));
        }
        setup.experts.push_back(std::move(expert));
        setup.labels.push_back(tasks[i].name);
    }
    setup.base = std::move(base);
    setup.evaluator = std::make_shared<mlp::MlpEvaluator>(std::move(tasks));
    return setup;
}

ExternalEvaluator::ExternalEvaluator(std::string cmd_template,
                                     std::vector<std::string> tasks, double timeout_s)
    : cmd_template_(std::move(cmd_template)),
      tasks_(std::move(tasks)),
      timeout_s_(timeout_s) {
    if (tasks_.empty()) {
        throw Error("external evaluator needs at least one task name");
    }
}

FitnessReport ExternalEvaluator::evaluate(const ParameterSet& theta) const {
    return external_evaluate(cmd_template_, theta, tasks_, timeout_s_);
}

}  // namespace psomerge
