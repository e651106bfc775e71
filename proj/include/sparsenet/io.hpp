#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sparsenet {

// Throws FormatError when the file cannot be read.
std::string read_file(const std::string& path);

// Write-then-rename so concurrent cells never expose partial files.
void write_file_atomic(const std::string& path, std::string_view content);

// Shortest fixed-precision rendering used in CSV cells ("%.12g").
std::string format_double(double v);

// FNV-1a 64; stable content hash for manifests.
std::uint64_t fnv1a64(std::string_view data);
std::string hex_u64(std::uint64_t v);

}  // namespace sparsenet
