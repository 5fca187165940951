#include "psomerge/task_vector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "psomerge/kernels.hpp"
#include "psomerge/rng.hpp"

namespace psomerge {

namespace {

// Flat view over a keyspace so top-k selection can run across all tensors.
struct FlatLayout {
    struct Entry {
        const std::string* name;
        const std::vector<int64_t>* shape;
        int64_t offset;
        int64_t numel;
    };
    std::vector<Entry> entries;
    int64_t total = 0;

    static FlatLayout of(const ParameterSet& ps) {
        FlatLayout layout;
        int64_t offset = 0;
        for (const auto& [name, t] : ps.entries()) {
            layout.entries.push_back({&name, &t.shape, offset, t.numel()});
            offset += t.numel();
        }
        layout.total = offset;
        return layout;
    }

    std::vector<float> flatten(const ParameterSet& ps) const {
        std::vector<float> flat(static_cast<size_t>(total));
        for (const auto& e : entries) {
            const auto& data = ps.at(*e.name).data;
            std::copy(data.begin(), data.end(), flat.begin() + e.offset);
        }
        return flat;
    }

    ParameterSet unflatten(const std::vector<float>& flat) const {
        ParameterSet ps;
        for (const auto& e : entries) {
            TensorBuffer t;
            t.shape = *e.shape;
            t.data.assign(flat.begin() + e.offset, flat.begin() + e.offset + e.numel);
            ps.add(*e.name, std::move(t));
        }
        return ps;
    }
};

void check_drop_rate(double p) {
    if (!(p >= 0.0 && p < 1.0)) {
        throw Error("drop rate must be in [0, 1), got " + std::to_string(p));
    }
}

void check_same_keyspaces(const std::vector<TaskVector>& tvs) {
    if (tvs.empty()) {
        throw Error("need at least one task vector");
    }
    for (size_t i = 1; i < tvs.size(); ++i) {
        keyspace_check(tvs[0].deltas, tvs[i].deltas);
    }
}

// Zero all but the k largest-magnitude entries; magnitude ties break to the
// lower flat index so the selection is deterministic.
std::vector<float> trim_top_k(const std::vector<float>& flat, int64_t k) {
    const int64_t d = static_cast<int64_t>(flat.size());
    if (k >= d) return flat;
    std::vector<int64_t> order(static_cast<size_t>(d));
    std::iota(order.begin(), order.end(), 0);
    auto larger = [&](int64_t a, int64_t b) {
        const float fa = std::fabs(flat[static_cast<size_t>(a)]);
        const float fb = std::fabs(flat[static_cast<size_t>(b)]);
        if (fa != fb) return fa > fb;
        return a < b;
    };
    std::nth_element(order.begin(), order.begin() + k, order.end(), larger);
    std::vector<float> out(static_cast<size_t>(d), 0.0f);
    for (int64_t i = 0; i < k; ++i) {
        const auto idx = static_cast<size_t>(order[static_cast<size_t>(i)]);
        out[idx] = flat[idx];
    }
    return out;
}

}  // namespace

int64_t DropMask::dropped_count() const {
    int64_t n = 0;
    for (const auto& [name, flags] : bits) {
        for (uint8_t f : flags) n += f;
    }
    return n;
}

int64_t DropMask::total_count() const {
    int64_t n = 0;
    for (const auto& [name, flags] : bits) n += static_cast<int64_t>(flags.size());
    return n;
}

TaskVector make_task_vector(const ParameterSet& expert, const ParameterSet& base) {
    return TaskVector{subtract(expert, base)};
}

TaskVector dare_sparsify(const TaskVector& tv, double p, uint64_t seed) {
    check_drop_rate(p);
    ParameterSet out;
    for (const auto& [name, t] : tv.deltas.entries()) {
        TensorBuffer o;
        o.shape = t.shape;
        o.data.resize(t.data.size());
        kernels::dare_apply(t.data, p, seed, rng::fnv1a64(name), o.data);
        out.add(name, std::move(o));
    }
    return TaskVector{std::move(out)};
}

DropMask sample_drop_mask(const ParameterSet& keyspace, double p, uint64_t seed) {
    check_drop_rate(p);
    DropMask mask;
    mask.drop_rate = p;
    for (const auto& [name, t] : keyspace.entries()) {
        const uint64_t h = rng::fnv1a64(name);
        std::vector<uint8_t> flags(t.data.size());
        for (size_t i = 0; i < flags.size(); ++i) {
            flags[i] = kernels::drop_element(seed, h, i, p) ? 1 : 0;
        }
        mask.bits.emplace(name, std::move(flags));
    }
    return mask;
}

TiesResult ties_trim_elect(const std::vector<TaskVector>& tvs, double keep_fraction) {
    check_same_keyspaces(tvs);
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw Error("keep_fraction must be in (0, 1], got " + std::to_string(keep_fraction));
    }

    const FlatLayout layout = FlatLayout::of(tvs[0].deltas);
    const int64_t d = layout.total;
    const int64_t k = std::clamp<int64_t>(
        static_cast<int64_t>(std::ceil(keep_fraction * static_cast<double>(d))), 1, d);

    std::vector<std::vector<float>> trimmed_flat;
    trimmed_flat.reserve(tvs.size());
    for (const auto& tv : tvs) {
        trimmed_flat.push_back(trim_top_k(layout.flatten(tv.deltas), k));
    }

    std::vector<float> signs(static_cast<size_t>(d));
    std::vector<float> merged(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) {
        double pos_mass = 0.0, neg_mass = 0.0;
        for (const auto& flat : trimmed_flat) {
            const float v = flat[static_cast<size_t>(j)];
            if (v > 0.0f) pos_mass += v;
            else if (v < 0.0f) neg_mass -= v;
        }
        const bool positive = pos_mass >= neg_mass;  // tie -> positive
        signs[static_cast<size_t>(j)] = positive ? 1.0f : -1.0f;

        double sum = 0.0;
        int agree = 0;
        for (const auto& flat : trimmed_flat) {
            const float v = flat[static_cast<size_t>(j)];
            if ((positive && v > 0.0f) || (!positive && v < 0.0f)) {
                sum += v;
                ++agree;
            }
        }
        merged[static_cast<size_t>(j)] = agree ? static_cast<float>(sum / agree) : 0.0f;
    }

    TiesResult result;
    for (const auto& flat : trimmed_flat) {
        result.trimmed.push_back(TaskVector{layout.unflatten(flat)});
    }
    result.elected_signs = layout.unflatten(signs);
    result.merged = TaskVector{layout.unflatten(merged)};
    return result;
}

TaskVector della_prune(const TaskVector& tv, double base_rate, double epsilon,
                       uint64_t seed) {
    check_drop_rate(base_rate);
    bool has_ramp = false;
    for (const auto& [name, t] : tv.deltas.entries()) {
        if (t.numel() > 1) has_ramp = true;
    }
    if (has_ramp && epsilon != 0.0) {
        const double p_max = base_rate + std::fabs(epsilon);
        const double p_min = base_rate - std::fabs(epsilon);
        if (p_max >= 1.0 || p_min < 0.0) {
            throw Error("epsilon " + std::to_string(epsilon) + " pushes drop probability outside [0, 1) for base rate " +
                        std::to_string(base_rate));
        }
    }

    ParameterSet out;
    for (const auto& [name, t] : tv.deltas.entries()) {
        const int64_t R = t.numel();
        std::vector<double> prob(static_cast<size_t>(R), base_rate);
        if (R > 1) {
            // ascending |value|; ties break to the lower element index
            std::vector<int64_t> order(static_cast<size_t>(R));
            std::iota(order.begin(), order.end(), 0);
            std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
                const float fa = std::fabs(t.data[static_cast<size_t>(a)]);
                const float fb = std::fabs(t.data[static_cast<size_t>(b)]);
                if (fa != fb) return fa < fb;
                return a < b;
            });
            for (int64_t r = 0; r < R; ++r) {
                const double ramp = static_cast<double>(R - 1 - 2 * r) / static_cast<double>(R - 1);
                prob[static_cast<size_t>(order[static_cast<size_t>(r)])] =
                    base_rate + epsilon * ramp;
            }
        }
        TensorBuffer o;
        o.shape = t.shape;
        o.data.resize(t.data.size());
        kernels::prob_mask_apply(t.data, prob, seed, rng::fnv1a64(name), o.data);
        out.add(name, std::move(o));
    }
    return TaskVector{std::move(out)};
}

std::map<std::string, std::vector<double>> rankmean_weights(
    const std::vector<TaskVector>& tvs) {
    check_same_keyspaces(tvs);
    const size_t n = tvs.size();
    const double rank_sum = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;

    std::map<std::string, std::vector<double>> weights;
    for (const auto& [name, t] : tvs[0].deltas.entries()) {
        std::vector<double> mean_abs(n);
        for (size_t e = 0; e < n; ++e) {
            const auto& data = tvs[e].deltas.at(name).data;
            mean_abs[e] = kernels::sum_abs(data) / static_cast<double>(data.size());
        }
        std::vector<size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (mean_abs[a] != mean_abs[b]) return mean_abs[a] < mean_abs[b];
            return a < b;  // earlier expert gets the lower rank
        });
        std::vector<double> w(n);
        for (size_t r = 0; r < n; ++r) {
            w[order[r]] = static_cast<double>(r + 1) / rank_sum;
        }
        weights.emplace(name, std::move(w));
    }
    return weights;
}

}  // namespace psomerge
