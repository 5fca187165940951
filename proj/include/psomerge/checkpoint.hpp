#pragma once

#include <filesystem>
#include <string>

#include "psomerge/tensor.hpp"

namespace psomerge {

// Safetensors-compatible container: 8-byte little-endian header length,
// UTF-8 JSON header mapping tensor name -> {dtype, shape, data_offsets},
// then the concatenated raw little-endian payloads. Offsets are relative to
// the first byte after the header. F16/BF16 payloads are upcast to F32 on
// load; the optional "__metadata__" string map survives a round-trip.

enum class SaveDtype { F32, F16, BF16 };

struct SaveOptions {
    SaveDtype dtype = SaveDtype::F32;
};

ParameterSet load_checkpoint(const std::filesystem::path& path);

void save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path,
                     const SaveOptions& options = {});

SaveDtype parse_save_dtype(const std::string& name);

// Half-precision conversions used by the container and tests.
float f16_to_f32(uint16_t h);
uint16_t f32_to_f16(float f);
float bf16_to_f32(uint16_t h);
uint16_t f32_to_bf16(float f);

}  // namespace psomerge
