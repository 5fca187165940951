#include "psomerge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace psomerge {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace {

constexpr uint64_t kMaxHeaderBytes = 256ull * 1024 * 1024;

size_t dtype_size(const std::string& dtype) {
    if (dtype == "F32") return 4;
    if (dtype == "F16" || dtype == "BF16") return 2;
    throw CheckpointError("unsupported dtype '" + dtype + "'");
}

std::string dtype_name(SaveDtype d) {
    switch (d) {
        case SaveDtype::F32: return "F32";
        case SaveDtype::F16: return "F16";
        case SaveDtype::BF16: return "BF16";
    }
    return "F32";
}

}  // namespace

float f16_to_f32(uint16_t h) {
    const uint32_t sign = (h >> 15) & 0x1;
    uint32_t exp = (h >> 10) & 0x1F;
    uint32_t mant = h & 0x3FF;
    uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign << 31;
        } else {
            // subnormal: renormalize
            exp = 1;
            while (!(mant & 0x400)) {
                mant <<= 1;
                --exp;
            }
            mant &= 0x3FF;
            bits = (sign << 31) | ((exp + 127 - 15) << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        bits = (sign << 31) | 0x7F800000u | (mant << 13);
    } else {
        bits = (sign << 31) | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

uint16_t f32_to_f16(float f) {
    const uint32_t bits = std::bit_cast<uint32_t>(f);
    const uint32_t sign = (bits >> 16) & 0x8000;
    const int32_t exp = static_cast<int32_t>((bits >> 23) & 0xFF) - 127 + 15;
    uint32_t mant = bits & 0x7FFFFF;
    if (((bits >> 23) & 0xFF) == 0xFF) {
        // inf / nan
        return static_cast<uint16_t>(sign | 0x7C00 | (mant ? 0x200 : 0));
    }
    if (exp >= 31) {
        return static_cast<uint16_t>(sign | 0x7C00);  // overflow -> inf
    }
    if (exp <= 0) {
        if (exp < -10) return static_cast<uint16_t>(sign);  // underflow -> 0
        // subnormal with round-to-nearest-even
        mant |= 0x800000;
        const int shift = 14 - exp;
        uint32_t half = mant >> shift;
        const uint32_t rem = mant & ((1u << shift) - 1);
        const uint32_t mid = 1u << (shift - 1);
        if (rem > mid || (rem == mid && (half & 1))) ++half;
        return static_cast<uint16_t>(sign | half);
    }
    uint32_t half = (static_cast<uint32_t>(exp) << 10) | (mant >> 13);
    const uint32_t rem = mant & 0x1FFF;
    if (rem > 0x1000 || (rem == 0x1000 && (half & 1))) ++half;
    return static_cast<uint16_t>(sign | half);
}

float bf16_to_f32(uint16_t h) {
    return std::bit_cast<float>(static_cast<uint32_t>(h) << 16);
}

uint16_t f32_to_bf16(float f) {
    uint32_t bits = std::bit_cast<uint32_t>(f);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x7FFFFFu)) {
        return static_cast<uint16_t>((bits >> 16) | 0x40);  // keep nan quiet
    }
    const uint32_t lsb = (bits >> 16) & 1;
    bits += 0x7FFF + lsb;  // round to nearest even
    return static_cast<uint16_t>(bits >> 16);
}

SaveDtype parse_save_dtype(const std::string& name) {
    if (name == "F32") return SaveDtype::F32;
    if (name == "F16") return SaveDtype::F16;
    if (name == "BF16") return SaveDtype::BF16;
    throw ConfigError("unknown save dtype '" + name + "' (expected F32, F16 or BF16)");
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    }
    file.seekg(0, std::ios::end);
    const uint64_t file_size = static_cast<uint64_t>(file.tellg());
    file.seekg(0);

    uint64_t header_len = 0;
    if (file_size < 8 || !file.read(reinterpret_cast<char*>(&header_len), 8)) {
        throw CheckpointError("malformed header: file shorter than 8 bytes");
    }
    if (header_len > kMaxHeaderBytes || 8 + header_len > file_size) {
        throw CheckpointError("malformed header: declared header length " +
                              std::to_string(header_len) + " exceeds file size");
    }

    std::string header_text(header_len, '\0');
    if (!file.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw CheckpointError("malformed header: short read");
    }
    const uint64_t payload_size = file_size - 8 - header_len;

    // Duplicate keys at the top level silently overwrite in a plain parse,
    // so watch the key events while parsing.
    std::set<std::string> seen;
    std::string duplicate;
    json::parser_callback_t watch_keys = [&](int depth, json::parse_event_t event, json& value) {
        if (event == json::parse_event_t::key && depth == 1) {
            const auto key = value.get<std::string>();
            if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
        }
        return true;
    };

    json header;
    try {
        header = json::parse(header_text, watch_keys);
    } catch (const json::exception& e) {
        throw CheckpointError(std::string("malformed header: ") + e.what());
    }
    if (!duplicate.empty()) {
        throw CheckpointError("duplicate tensor name '" + duplicate + "'");
    }
    if (!header.is_object()) {
        throw CheckpointError("malformed header: not a JSON object");
    }

    ParameterSet ps;
    if (auto it = header.find("__metadata__"); it != header.end()) {
        if (!it->is_object()) {
            throw CheckpointError("malformed header: __metadata__ is not an object");
        }
        for (const auto& [k, v] : it->items()) {
            if (!v.is_string()) {
                throw CheckpointError("malformed header: __metadata__ values must be strings");
            }
            ps.metadata()[k] = v.get<std::string>();
        }
        header.erase(it);
    }
    if (header.empty()) {
        throw CheckpointError("no tensors in checkpoint '" + path.string() + "'");
    }

    const uint64_t payload_base = 8 + header_len;
    for (const auto& [name, info] : header.items()) {
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets")) {
            throw CheckpointError("malformed header: tensor '" + name +
                                  "' missing dtype/shape/data_offsets");
        }
        const std::string dtype = info["dtype"].get<std::string>();
        const size_t elem_size = dtype_size(dtype);

        TensorBuffer t;
        for (const auto& d : info["shape"]) {
            const int64_t dim = d.get<int64_t>();
            if (dim <= 0) {
                throw CheckpointError("empty tensor '" + name + "': dimension " +
                                      std::to_string(dim));
            }
            t.shape.push_back(dim);
        }
        if (t.shape.empty()) {
            throw CheckpointError("empty tensor '" + name + "': rank 0 shape");
        }
        const int64_t numel = t.numel();

        const auto& offsets = info["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2) {
            throw CheckpointError("malformed header: tensor '" + name + "' data_offsets");
        }
        const uint64_t begin = offsets[0].get<uint64_t>();
        const uint64_t end = offsets[1].get<uint64_t>();
        if (end < begin || end - begin != static_cast<uint64_t>(numel) * elem_size) {
            throw CheckpointError("tensor '" + name + "': data_offsets [" +
                                  std::to_string(begin) + "," + std::to_string(end) +
                                  ") do not match shape");
        }
        if (end > payload_size) {
            throw CheckpointError("truncated payload: tensor '" + name + "' ends at byte " +
                                  std::to_string(end) + " but payload has " +
                                  std::to_string(payload_size));
        }

        file.seekg(static_cast<std::streamoff>(payload_base + begin));
        t.data.resize(static_cast<size_t>(numel));
        if (dtype == "F32") {
            if (!file.read(reinterpret_cast<char*>(t.data.data()),
                           static_cast<std::streamsize>(numel * 4))) {
                throw CheckpointError("truncated payload: tensor '" + name + "'");
            }
        } else {
            std::vector<uint16_t> raw(static_cast<size_t>(numel));
            if (!file.read(reinterpret_cast<char*>(raw.data()),
                           static_cast<std::streamsize>(numel * 2))) {
                throw CheckpointError("truncated payload: tensor '" + name + "'");
            }
            if (dtype == "F16") {
                for (int64_t i = 0; i < numel; ++i) t.data[i] = f16_to_f32(raw[i]);
            } else {
                for (int64_t i = 0; i < numel; ++i) t.data[i] = bf16_to_f32(raw[i]);
            }
        }
        ps.add(name, std::move(t));
    }
    return ps;
}

void save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path,
                     const SaveOptions& options) {
    if (ps.empty()) {
        throw CheckpointError("no tensors to save");
    }
    for (const auto& [name, t] : ps.entries()) {
        if (t.shape.empty() || t.numel() == 0) {
            throw CheckpointError("empty tensor '" + name + "'");
        }
    }

    const size_t elem_size = options.dtype == SaveDtype::F32 ? 4 : 2;
    json header = json::object();
    if (!ps.metadata().empty()) {
        header["__metadata__"] = ps.metadata();
    }
    uint64_t offset = 0;
    for (const auto& [name, t] : ps.entries()) {
        const uint64_t bytes = static_cast<uint64_t>(t.numel()) * elem_size;
        header[name] = {{"dtype", dtype_name(options.dtype)},
                        {"shape", t.shape},
                        {"data_offsets", {offset, offset + bytes}}};
        offset += bytes;
    }
    const std::string header_text = header.dump();

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw CheckpointError("cannot open '" + path.string() + "' for writing");
    }
    const uint64_t header_len = header_text.size();
    file.write(reinterpret_cast<const char*>(&header_len), 8);
    file.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

    for (const auto& [name, t] : ps.entries()) {
        if (options.dtype == SaveDtype::F32) {
            file.write(reinterpret_cast<const char*>(t.data.data()),
                       static_cast<std::streamsize>(t.data.size() * 4));
        } else {
            std::vector<uint16_t> raw(t.data.size());
            for (size_t i = 0; i < t.data.size(); ++i) {
                raw[i] = options.dtype == SaveDtype::F16 ? f32_to_f16(t.data[i])
                                                         : f32_to_bf16(t.data[i]);
            }
            file.write(reinterpret_cast<const char*>(raw.data()),
                       static_cast<std::streamsize>(raw.size() * 2));
        }
    }
    file.flush();
    if (!file) {
        throw CheckpointError("write failed for '" + path.string() + "'");
    }
}

}  // namespace psomerge
