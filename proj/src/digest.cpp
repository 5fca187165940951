#include "psomerge/digest.hpp"

#include <cstdio>
#include <cstring>

namespace psomerge {

namespace {

inline void mix_bytes(uint64_t& h, const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
}

}  // namespace

uint64_t content_digest(const ParameterSet& ps) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& [name, t] : ps.entries()) {
        mix_bytes(h, name.data(), name.size());
        mix_bytes(h, "\0", 1);
        const uint64_t rank = t.shape.size();
        mix_bytes(h, &rank, sizeof(rank));
        mix_bytes(h, t.shape.data(), t.shape.size() * sizeof(int64_t));
        mix_bytes(h, t.data.data(), t.data.size() * sizeof(float));
    }
    return h;
}

std::string digest_hex(uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

}  // namespace psomerge
