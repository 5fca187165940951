#include "psomerge/mlp.hpp"

#include <cmath>

#include "psomerge/rng.hpp"

namespace psomerge::mlp {

namespace {

struct Net {
    // Unpacked views for the forward/backward passes.
    std::vector<float> w1;  // [kHidden][kInput]
    std::vector<float> b1;  // [kHidden]
    std::vector<float> w2;  // [kClasses][kHidden]
    std::vector<float> b2;  // [kClasses]

    static Net unpack(const ParameterSet& ps) {
        Net net;
        net.w1 = ps.at("l1.weight").data;
        net.b1 = ps.at("l1.bias").data;
        net.w2 = ps.at("l2.weight").data;
        net.b2 = ps.at("l2.bias").data;
        if (net.w1.size() != kHidden * kInput || net.b1.size() != kHidden ||
            net.w2.size() != kClasses * kHidden || net.b2.size() != kClasses) {
            throw Error("parameter set does not match the 2-16-2 mlp layout");
        }
        return net;
    }

    ParameterSet pack() const {
        ParameterSet ps;
        ps.add("l1.weight", {kHidden, kInput}, w1);
        ps.add("l1.bias", {kHidden}, b1);
        ps.add("l2.weight", {kClasses, kHidden}, w2);
        ps.add("l2.bias", {kClasses}, b2);
        return ps;
    }

    void forward(const std::array<float, 2>& x, std::array<float, kHidden>& hidden,
                 std::array<float, kClasses>& probs) const {
        for (int h = 0; h < kHidden; ++h) {
            float z = b1[h];
            for (int j = 0; j < kInput; ++j) z += w1[h * kInput + j] * x[j];
            hidden[h] = std::tanh(z);
        }
        std::array<float, kClasses> logits{};
        for (int c = 0; c < kClasses; ++c) {
            float z = b2[c];
            for (int h = 0; h < kHidden; ++h) z += w2[c * kHidden + h] * hidden[h];
            logits[c] = z;
        }
        const float m = std::max(logits[0], logits[1]);
        float denom = 0.0f;
        for (int c = 0; c < kClasses; ++c) {
            probs[c] = std::exp(logits[c] - m);
            denom += probs[c];
        }
        for (int c = 0; c < kClasses; ++c) probs[c] /= denom;
    }
};

BlobDataset sample_blobs(uint64_t seed, uint64_t split_tag,
                         const std::array<float, 2>& center0,
                         const std::array<float, 2>& center1, float sigma,
                         int per_class) {
    BlobDataset data;
    for (int cls = 0; cls < 2; ++cls) {
        const auto& c = cls == 0 ? center0 : center1;
        for (int i = 0; i < per_class; ++i) {
            const uint64_t key = split_tag * 1000003ull + static_cast<uint64_t>(cls) * 100003ull +
                                 static_cast<uint64_t>(i);
            const auto [gx, gy] = rng::normal_pair(seed, rng::Stream::Blob, key, 0);
            data.x.push_back({c[0] + sigma * static_cast<float>(gx),
                              c[1] + sigma * static_cast<float>(gy)});
            data.y.push_back(cls);
        }
    }
    return data;
}

}  // namespace

ParameterSet random_base(uint64_t seed) {
    // Random features, untrained zero head: the base predicts uniformly, so
    // its accuracy is exactly chance on balanced splits.
    Net net;
    net.w1.resize(kHidden * kInput);
    net.b1.assign(kHidden, 0.0f);
    net.w2.assign(kClasses * kHidden, 0.0f);
    net.b2.assign(kClasses, 0.0f);
    for (size_t i = 0; i < net.w1.size(); ++i) {
        net.w1[i] = 0.5f * static_cast<float>(rng::normal(seed, rng::Stream::NetInit, 1, i));
    }
    return net.pack();
}

std::vector<TaskData> make_blob_tasks(uint64_t seed) {
    // Partially conflicting geometry: the third task's positive class sits
    // where the first two place negatives, so no single net aces all three.
    struct Geometry {
        const char* name;
        std::array<float, 2> center0, center1;
    };
    const Geometry geometries[3] = {
        {"blobs_lr", {-1.5f, 0.0f}, {1.5f, 0.0f}},
        {"blobs_ud", {0.0f, -1.5f}, {0.0f, 1.5f}},
        {"blobs_diag", {0.8f, 0.8f}, {-0.8f, -0.8f}},
    };
    constexpr float kSigma = 0.55f;
    constexpr int kTrainPerClass = 100;
    constexpr int kOptPerClass = 200;

    std::vector<TaskData> tasks;
    for (int i = 0; i < 3; ++i) {
        const uint64_t task_seed = rng::derive_seed(seed, static_cast<uint64_t>(i));
        TaskData task;
        task.name = geometries[i].name;
        task.train = sample_blobs(task_seed, 1, geometries[i].center0,
                                  geometries[i].center1, kSigma, kTrainPerClass);
        task.opt = sample_blobs(task_seed, 2, geometries[i].center0,
                                geometries[i].center1, kSigma, kOptPerClass);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

ParameterSet train(const ParameterSet& init, const BlobDataset& data, int steps,
                   float learning_rate) {
    Net net = Net::unpack(init);
    const size_t n = data.x.size();
    const float inv_n = 1.0f / static_cast<float>(n);

    std::vector<float> gw1(net.w1.size()), gb1(net.b1.size());
    std::vector<float> gw2(net.w2.size()), gb2(net.b2.size());

    for (int step = 0; step < steps; ++step) {
        std::fill(gw1.begin(), gw1.end(), 0.0f);
        std::fill(gb1.begin(), gb1.end(), 0.0f);
        std::fill(gw2.begin(), gw2.end(), 0.0f);
        std::fill(gb2.begin(), gb2.end(), 0.0f);

        for (size_t s = 0; s < n; ++s) {
            std::array<float, kHidden> hidden;
            std::array<float, kClasses> probs;
            net.forward(data.x[s], hidden, probs);

            // dL/dlogit = softmax - onehot
            std::array<float, kClasses> dlogit;
            for (int c = 0; c < kClasses; ++c) {
                dlogit[c] = probs[c] - (data.y[s] == c ? 1.0f : 0.0f);
            }
            std::array<float, kHidden> dhidden{};
            for (int c = 0; c < kClasses; ++c) {
                gb2[c] += dlogit[c];
                for (int h = 0; h < kHidden; ++h) {
                    gw2[c * kHidden + h] += dlogit[c] * hidden[h];
                    dhidden[h] += dlogit[c] * net.w2[c * kHidden + h];
                }
            }
            for (int h = 0; h < kHidden; ++h) {
                const float dz = dhidden[h] * (1.0f - hidden[h] * hidden[h]);
                gb1[h] += dz;
                for (int j = 0; j < kInput; ++j) {
                    gw1[h * kInput + j] += dz * data.x[s][j];
                }
            }
        }

        for (size_t i = 0; i < net.w1.size(); ++i) net.w1[i] -= learning_rate * inv_n * gw1[i];
        for (size_t i = 0; i < net.b1.size(); ++i) net.b1[i] -= learning_rate * inv_n * gb1[i];
        for (size_t i = 0; i < net.w2.size(); ++i) net.w2[i] -= learning_rate * inv_n * gw2[i];
        for (size_t i = 0; i < net.b2.size(); ++i) net.b2[i] -= learning_rate * inv_n * gb2[i];
    }
    return net.pack();
}

double accuracy(const ParameterSet& params, const BlobDataset& data) {
    const Net net = Net::unpack(params);
    int correct = 0;
    for (size_t s = 0; s < data.x.size(); ++s) {
        std::array<float, kHidden> hidden;
        std::array<float, kClasses> probs;
        net.forward(data.x[s], hidden, probs);
        const int pred = probs[1] > probs[0] ? 1 : 0;
        if (pred == data.y[s]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.x.size());
}

MlpEvaluator::MlpEvaluator(std::vector<TaskData> tasks) : tasks_(std::move(tasks)) {
    if (tasks_.empty()) {
        throw Error("mlp evaluator needs at least one task");
    }
    for (const auto& task : tasks_) names_.push_back(task.name);
}

FitnessReport MlpEvaluator::evaluate(const ParameterSet& theta) const {
    std::map<std::string, double> scores;
    for (const auto& task : tasks_) {
        scores[task.name] = accuracy(theta, task.opt);
    }
    return make_report(std::move(scores));
}

}  // namespace psomerge::mlp
