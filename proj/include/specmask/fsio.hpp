#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace specmask::io {

// Little-endian scalar packing for the SMCK/SMSK binary formats.
void put_u8(std::string& out, uint8_t v);
void put_u32le(std::string& out, uint32_t v);
void put_u64le(std::string& out, uint64_t v);
void put_f64le(std::string& out, double v);

// Readers advance `pos` and throw std::runtime_error naming the byte offset
// on truncation.
uint8_t get_u8(const std::string& bytes, size_t& pos);
uint32_t get_u32le(const std::string& bytes, size_t& pos);
uint64_t get_u64le(const std::string& bytes, size_t& pos);
double get_f64le(const std::string& bytes, size_t& pos);

// Big-endian 32-bit, as used by the IDX container format.
void put_u32be(std::string& out, uint32_t v);
uint32_t get_u32be(const std::string& bytes, size_t& pos);

/// Reads a whole file; throws with the path on failure.
std::string read_bytes(const std::filesystem::path& path);

/// Writes via a temp file in the same directory plus rename, creating parent
/// directories as needed.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);

/// FNV-1a 64-bit content hash (used in manifests and mask metadata).
uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(uint64_t h);

/// Canonical shortest round-trip decimal formatting for doubles, so
/// serialized metadata is byte-stable across save/load/save cycles.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace specmask::io
