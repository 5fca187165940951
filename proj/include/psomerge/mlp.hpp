#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "psomerge/fitness.hpp"
#include "psomerge/tensor.hpp"

namespace psomerge::mlp {

// Tiny 2 -> 16 -> 2 tanh/softmax classifier stored as four tensors:
// l1.weight [16,2], l1.bias [16], l2.weight [2,16], l2.bias [2].
constexpr int kInput = 2;
constexpr int kHidden = 16;
constexpr int kClasses = 2;

struct BlobDataset {
    std::vector<std::array<float, 2>> x;
    std::vector<int> y;
};

struct TaskData {
    std::string name;
    BlobDataset train;
    BlobDataset opt;  // optimization split, used for fitness
};

ParameterSet random_base(uint64_t seed);

// Three 2-class Gaussian-blob tasks with partially conflicting geometry.
std::vector<TaskData> make_blob_tasks(uint64_t seed);

// Full-batch gradient descent, softmax cross-entropy.
ParameterSet train(const ParameterSet& init, const BlobDataset& data, int steps,
                   float learning_rate);

double accuracy(const ParameterSet& net, const BlobDataset& data);

class MlpEvaluator : public IFitnessEvaluator {
public:
    explicit MlpEvaluator(std::vector<TaskData> tasks);
    FitnessReport evaluate(const ParameterSet& theta) const override;
    const std::vector<std::string>& task_names() const override { return names_; }

private:
    std::vector<TaskData> tasks_;
    std::vector<std::string> names_;
};

}  // namespace psomerge::mlp
