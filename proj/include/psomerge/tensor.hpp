#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "psomerge/error.hpp"

namespace psomerge {

struct TensorBuffer {
    std::vector<int64_t> shape;
    std::vector<float> data;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
};

// Named-tensor checkpoint in memory. Tensors iterate in lexicographic name
// order; immutable once built (algebra ops return fresh sets).
class ParameterSet {
public:
    using Map = std::map<std::string, TensorBuffer, std::less<>>;

    void add(std::string name, TensorBuffer tensor);
    void add(std::string name, std::vector<int64_t> shape, std::vector<float> data);

    const TensorBuffer& at(std::string_view name) const;
    bool contains(std::string_view name) const { return entries_.find(name) != entries_.end(); }

    size_t tensor_count() const { return entries_.size(); }
    int64_t total_elements() const;
    bool empty() const { return entries_.empty(); }

    const Map& entries() const { return entries_; }
    Map& entries() { return entries_; }

    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::map<std::string, std::string>& metadata() { return metadata_; }

private:
    Map entries_;
    std::map<std::string, std::string> metadata_;
};

// Throws KeyspaceError naming the first differing tensor name or shape.
void keyspace_check(const ParameterSet& a, const ParameterSet& b);

// Element-wise alpha*x + y over matching keyspaces; inputs untouched.
ParameterSet axpy(float alpha, const ParameterSet& x, const ParameterSet& y);

ParameterSet subtract(const ParameterSet& a, const ParameterSet& b);

ParameterSet scale(float alpha, const ParameterSet& x);

// Deep structural + bitwise equality (shapes, names, float bit patterns).
bool bit_equal(const ParameterSet& a, const ParameterSet& b);

}  // namespace psomerge
