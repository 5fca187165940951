#pragma once

#include <cstdint>
#include <string>

#include "psomerge/tensor.hpp"

namespace psomerge {

// FNV-1a content digest over names, shapes and raw float bits. Used for
// fitness caching and for the input-provenance fields of run reports.
uint64_t content_digest(const ParameterSet& ps);

std::string digest_hex(uint64_t digest);

}  // namespace psomerge
