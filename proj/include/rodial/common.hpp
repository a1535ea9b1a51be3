#pragma once

// Shared plumbing: error taxonomy, hashing, threading and binary IO helpers.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace rodial {

// Error taxonomy. The CLI maps these onto process exit codes, so every
// throwing site should pick the class that matches what actually went wrong:
//   usage_error      -> caller misuse (bad flags, bad argument combinations)
//   io_error         -> missing or unreadable/unwritable files
//   parse_error      -> a file exists but its bytes are malformed
//   validation_error -> well-formed input that violates a data invariant
//   numeric_error    -> a numerical routine failed (NaN loss, factorization)
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class usage_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

class parse_error : public error {
 public:
  using error::error;
};

class validation_error : public error {
 public:
  using error::error;
};

class numeric_error : public error {
 public:
  using error::error;
};

// 64-bit FNV-1a. Used for n-gram fingerprints, cache keys and file checksums.
inline constexpr std::uint64_t fnv_offset = 1469598103934665603ull;
inline constexpr std::uint64_t fnv_prime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = fnv_offset) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= fnv_prime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t seed = fnv_offset) {
  return fnv1a64(s.data(), s.size(), seed);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string join(const std::vector<std::string>& parts,
                        const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

// Checksum of a file's raw bytes; used in run manifests and cache keys.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file for checksum: " + path);
  std::uint64_t h = fnv_offset;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (in.eof()) break;
  }
  return to_hex(h);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open file for writing: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw io_error("failed writing file: " + path);
}

// Static partition of [0, total) over at most `workers` threads. Chunks are
// contiguous and assigned by index, so results never depend on scheduling as
// long as `fn` writes only to its own slice.
inline void parallel_for(std::size_t total, int workers,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (total == 0) return;
  std::size_t n_threads = workers <= 1
                              ? 1
                              : std::min<std::size_t>(static_cast<std::size_t>(workers), total);
  if (n_threads == 1) {
    fn(0, total);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_threads);
  std::size_t chunk = (total + n_threads - 1) / n_threads;
  for (std::size_t t = 0; t < n_threads; ++t) {
    std::size_t begin = t * chunk;
    std::size_t end = std::min(total, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

inline int default_workers() {
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Little-endian binary IO. x86 is little-endian already, but keeping the
// byte order explicit makes the on-disk formats portable.
namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<U>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_le<std::uint32_t>(out, bits);
}

inline float read_f32(std::istream& in) {
  std::uint32_t bits = read_le<std::uint32_t>(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_le<std::uint64_t>(out, bits);
}

inline double read_f64(std::istream& in) {
  std::uint64_t bits = read_le<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline void write_str(std::ostream& out, std::string_view s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& in) {
  std::uint32_t len = read_le<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

}  // namespace detail

}  // namespace rodial
