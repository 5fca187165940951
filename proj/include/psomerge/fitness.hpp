#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "psomerge/tensor.hpp"

namespace psomerge {

// Higher is better throughout; evaluators producing losses must transform
// their scores before reporting.
struct FitnessReport {
    std::map<std::string, double> per_task;
    double mean = 0.0;
};

FitnessReport make_report(std::map<std::string, double> per_task);

class IFitnessEvaluator {
public:
    virtual ~IFitnessEvaluator() = default;
    virtual FitnessReport evaluate(const ParameterSet& theta) const = 0;
    virtual const std::vector<std::string>& task_names() const = 0;
};

// ---- quadratic landscapes ------------------------------------------------

// score(theta) = exp(-sharpness * 0.5 * sum_j D_j * (theta_j - mu_j)^2)
struct QuadraticTask {
    std::string name;
    ParameterSet optimum;         // mu
    ParameterSet diag_curvature;  // D, strictly positive
    double sharpness = 1.0;
};

double quadratic_score(const QuadraticTask& task, const ParameterSet& theta);

class QuadraticEvaluator : public IFitnessEvaluator {
public:
    explicit QuadraticEvaluator(std::vector<QuadraticTask> tasks);
    FitnessReport evaluate(const ParameterSet& theta) const override;
    const std::vector<std::string>& task_names() const override;
    const std::vector<QuadraticTask>& tasks() const { return tasks_; }

private:
    std::vector<QuadraticTask> tasks_;
    std::vector<std::string> names_;
};

// Desk-scale landscape: one "theta" tensor of `dim` elements split into one
// block per task. Task i's optimum puts block_value on its own block and the
// curvature weights its own block curv_own[i] vs curv_other elsewhere, so
// each expert is a specialist. Distinct own-block curvatures make the best
// multitask point an asymmetric blend that no single scaling factor reaches.
struct QuadraticSpec {
    int n_tasks = 3;
    int64_t dim = 64;
    double block_value = 1.0;
    std::vector<double> curv_own = {8.0, 4.0, 2.0};  // broadcast when shorter
    double curv_other = 1.5;
    double sharpness = 0.02;
};

std::vector<QuadraticTask> make_quadratic_tasks(const QuadraticSpec& spec);

// Closed-form argmin of the summed quadratic forms:
// theta*_j = sum_i s_i D_ij mu_ij / sum_i s_i D_ij.
ParameterSet quadratic_weighted_optimum(const std::vector<QuadraticTask>& tasks);

// ---- synthetic expert construction ----------------------------------------

struct SyntheticSetup {
    ParameterSet base;
    std::vector<ParameterSet> experts;
    std::vector<std::string> labels;
    std::shared_ptr<IFitnessEvaluator> evaluator;
};

// Base = all zeros; expert_i = mu_i + Gaussian(0, noise) element-wise.
SyntheticSetup make_synthetic_experts(const QuadraticSpec& spec, double noise,
                                      uint64_t seed);

// Non-convex bench: a 2-16-2 MLP trained from a shared random base on three
// disjoint blob classification tasks; score_i = accuracy on task i's
// optimization split. Fully deterministic from the seed; throws if an expert
// fails to reach 0.9 accuracy on its own task.
SyntheticSetup mlp_synthetic_build(uint64_t seed);

// ---- external command protocol --------------------------------------------

// Saves theta to a unique temp checkpoint, substitutes {checkpoint} into the
// shell-split command template, exports SWARM_MERGE_TASKS, and parses the
// final stdout line as {"scores": {task: number, ...}} covering exactly
// task_names. The temp file is removed afterwards.
FitnessReport external_evaluate(const std::string& cmd_template,
                                const ParameterSet& theta,
                                const std::vector<std::string>& task_names,
                                double timeout_s);

class ExternalEvaluator : public IFitnessEvaluator {
public:
    ExternalEvaluator(std::string cmd_template, std::vector<std::string> tasks,
                      double timeout_s = 3600.0);
    FitnessReport evaluate(const ParameterSet& theta) const override;
    const std::vector<std::string>& task_names() const override { return tasks_; }

private:
    std::string cmd_template_;
    std::vector<std::string> tasks_;
    double timeout_s_;
};

}  // namespace psomerge
