#include "specmask/fsio.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace specmask::io {

namespace {

void need(const std::string& bytes, size_t pos, size_t n) {
  if (pos + n > bytes.size()) {
    throw std::runtime_error("file truncated at offset " + std::to_string(pos) +
                             ": need " + std::to_string(n) + " more bytes, have " +
                             std::to_string(bytes.size() - pos));
  }
}

}  // namespace

void put_u8(std::string& out, uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64le(std::string& out, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  put_u64le(out, bits);
}

uint8_t get_u8(const std::string& bytes, size_t& pos) {
  need(bytes, pos, 1);
  return static_cast<uint8_t>(bytes[pos++]);
}

uint32_t get_u32le(const std::string& bytes, size_t& pos) {
  need(bytes, pos, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

uint64_t get_u64le(const std::string& bytes, size_t& pos) {
  need(bytes, pos, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
  pos += 8;
  return v;
}

double get_f64le(const std::string& bytes, size_t& pos) {
  const uint64_t bits = get_u64le(bytes, pos);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

void put_u32be(std::string& out, uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32be(const std::string& bytes, size_t& pos) {
  need(bytes, pos, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<uint8_t>(bytes[pos + i]);
  pos += 4;
  return v;
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw std::runtime_error("read error: " + path.string());
  return bytes;
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for write: " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write error: " + tmp.string());
  }
  fs::rename(tmp, path);
}

uint64_t fnv1a(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  // Integers print without an exponent; otherwise the shortest
  // representation that round-trips.
  if (v == std::floor(v) && std::abs(v) < 1e15) {
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(v));
    if (parse_double(buf) == v) return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (parse_double(buf) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

}  // namespace specmask::io
