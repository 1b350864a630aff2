#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ltp {

// Error taxonomy. Every failure surfaced by the library is one of these so the
// CLI can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public Error { using Error::Error; };
class LookupError : public Error { using Error::Error; };
class DomainError : public Error { using Error::Error; };
class ShapeError : public Error { using Error::Error; };
class UsageError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };
class TrainingError : public Error { using Error::Error; };

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset);
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  std::uint64_t byte_offset_;
};

// Dense row-major matrix. Used for feature sequences (float) and captured
// attention maps (double); the autodiff core has its own storage.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

using FeatureMatrix = Matrix<float>;
using MatrixD = Matrix<double>;

// Half-open interval [start, end) in feature steps.
struct Span {
  int start = 0;
  int end = 0;
  int length() const { return end - start; }
  bool operator==(const Span&) const = default;
};

// ---------------------------------------------------------------------------
// Seeding. All randomness flows through std::mt19937_64 engines whose seeds are
// derived with the splitmix64 finalizer so per-item streams are independent of
// evaluation order.

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed ^ mix64(index + 0x632BE59BD9B4E019ull));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(mix64(seed, stream)); }

// Uniform integer in [lo, hi].
int uniform_int(Rng& rng, int lo, int hi);
double uniform_real(Rng& rng, double lo, double hi);

// Filesystem helpers shared by the on-disk formats.
std::vector<char> read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace ltp
