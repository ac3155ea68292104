#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "cnet/collabonet.hpp"

// Layout: "CNET", u32 format version, u64 header length, a JSON header
// (config text, fingerprint, phase, vocabulary, models and a table of
// name/dtype/shape per tensor), then raw little-endian f64 payloads in table
// order.

namespace cnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const CollaboState& state);
// Throws on a bad magic, version, header or payload length; nothing is
// returned on failure.
CollaboState read_checkpoint(std::istream& in, const std::string& source = "<checkpoint>");

// Written to a temporary file and renamed into place.
void save_checkpoint(const CollaboState& state, const std::filesystem::path& path);
CollaboState load_checkpoint(const std::filesystem::path& path);

}  // namespace cnet
