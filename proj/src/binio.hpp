#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "ltp/common.hpp"

// Little-endian IEEE-754 helpers for the binary payload files.
namespace ltp::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void append_f32(std::vector<char>& out, std::span<const float> values) {
  const auto* p = reinterpret_cast<const char*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

inline void append_f64(std::vector<char>& out, std::span<const double> values) {
  const auto* p = reinterpret_cast<const char*>(values.data());
  out.insert(out.end(), p, p + values.size_bytes());
}

// Copies `count` values starting at `offset`; throws FormatError if the payload
// ends early.
template <typename T>
std::vector<T> read_array(std::span<const char> payload, std::uint64_t offset, std::size_t count) {
  const std::uint64_t bytes = static_cast<std::uint64_t>(count) * sizeof(T);
  if (offset > payload.size() || payload.size() - offset < bytes) {
    throw FormatError("truncated payload: need " + std::to_string(bytes) + " bytes", payload.size());
  }
  std::vector<T> out(count);
  std::memcpy(out.data(), payload.data() + offset, bytes);
  return out;
}

}  // namespace ltp::binio
