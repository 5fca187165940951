#include "psomerge/tensor.hpp"

#include <cstring>
#include <sstream>

#include "psomerge/kernels.hpp"

namespace psomerge {

namespace {

std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

}  // namespace

void ParameterSet::add(std::string name, TensorBuffer tensor) {
    if (name.empty()) {
        throw Error("tensor name must be non-empty");
    }
    if (static_cast<int64_t>(tensor.data.size()) != tensor.numel()) {
        std::ostringstream os;
        os << "tensor '" << name << "': payload length " << tensor.data.size()
           << " does not match shape " << shape_str(tensor.shape);
        throw Error(os.str());
    }
    auto [it, inserted] = entries_.emplace(std::move(name), std::move(tensor));
    if (!inserted) {
        throw Error("duplicate tensor name '" + it->first + "'");
    }
}

void ParameterSet::add(std::string name, std::vector<int64_t> shape, std::vector<float> data) {
    add(std::move(name), TensorBuffer{std::move(shape), std::move(data)});
}

const TensorBuffer& ParameterSet::at(std::string_view name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw Error("no tensor named '" + std::string(name) + "'");
    }
    return it->second;
}

int64_t ParameterSet::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

void keyspace_check(const ParameterSet& a, const ParameterSet& b) {
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    while (ia != a.entries().end() && ib != b.entries().end()) {
        if (ia->first != ib->first) {
            const std::string& missing = ia->first < ib->first ? ia->first : ib->first;
            throw KeyspaceError("keyspace mismatch: tensor '" + missing +
                                "' present on only one side");
        }
        if (ia->second.shape != ib->second.shape) {
            throw KeyspaceError("keyspace mismatch: tensor '" + ia->first + "' shape " +
                                shape_str(ia->second.shape) + " vs " +
                                shape_str(ib->second.shape));
        }
        ++ia;
        ++ib;
    }
    if (ia != a.entries().end()) {
        throw KeyspaceError("keyspace mismatch: tensor '" + ia->first +
                            "' present on only one side");
    }
    if (ib != b.entries().end()) {
        throw KeyspaceError("keyspace mismatch: tensor '" + ib->first +
                            "' present on only one side");
    }
}

ParameterSet axpy(float alpha, const ParameterSet& x, const ParameterSet& y) {
    keyspace_check(x, y);
    ParameterSet out;
    for (const auto& [name, tx] : x.entries()) {
        const TensorBuffer& ty = y.at(name);
        TensorBuffer t;
        t.shape = tx.shape;
        t.data.resize(tx.data.size());
        kernels::axpy(alpha, tx.data, ty.data, t.data);
        out.add(name, std::move(t));
    }
    return out;
}

ParameterSet subtract(const ParameterSet& a, const ParameterSet& b) {
    keyspace_check(a, b);
    ParameterSet out;
    for (const auto& [name, ta] : a.entries()) {
        const TensorBuffer& tb = b.at(name);
        TensorBuffer t;
        t.shape = ta.shape;
        t.data.resize(ta.data.size());
        kernels::subtract(ta.data, tb.data, t.data);
        out.add(name, std::move(t));
    }
    return out;
}

ParameterSet scale(float alpha, const ParameterSet& x) {
    ParameterSet out;
    for (const auto& [name, tx] : x.entries()) {
        TensorBuffer t;
        t.shape = tx.shape;
        t.data.resize(tx.data.size());
        kernels::scale(alpha, tx.data, t.data);
        out.add(name, std::move(t));
    }
    return out;
}

bool bit_equal(const ParameterSet& a, const ParameterSet& b) {
    if (a.tensor_count() != b.tensor_count()) return false;
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    for (; ia != a.entries().end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (ia->second.shape != ib->second.shape) return false;
        if (ia->second.data.size() != ib->second.data.size()) return false;
        if (!ia->second.data.empty() &&
            std::memcmp(ia->second.data.data(), ib->second.data.data(),
                        ia->second.data.size() * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace psomerge
