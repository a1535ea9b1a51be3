#pragma once

// Presence-bit character n-gram kernel. A document is reduced to the set of
// distinct character n-grams it contains (over Unicode codepoints, not
// bytes); the kernel value of two documents is the number of shared n-grams,
// optionally normalized to k(x,y)/sqrt(k(x,x)*k(y,y)). Sets are stored as
// sorted 64-bit fingerprints, so a kernel value is one sorted intersection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "rodial/common.hpp"
#include "rodial/unicode.hpp"

namespace rodial {

struct KernelSpec {
  int n = 6;
  bool normalized = true;
};

// Sorted unique n-gram fingerprints of one document.
struct NgramSet {
  std::vector<std::uint64_t> grams;

  std::size_t size() const { return grams.size(); }
};

namespace detail {

inline std::uint64_t ngram_fingerprint(const char32_t* window, int n) {
  std::uint64_t h = fnv_offset;
  for (int i = 0; i < n; ++i) {
    std::uint32_t cp = static_cast<std::uint32_t>(window[i]);
    unsigned char bytes[4] = {
        static_cast<unsigned char>(cp & 0xff),
        static_cast<unsigned char>((cp >> 8) & 0xff),
        static_cast<unsigned char>((cp >> 16) & 0xff),
        static_cast<unsigned char>((cp >> 24) & 0xff),
    };
    h = fnv1a64(bytes, 4, h);
  }
  return h;
}

}  // namespace detail

inline NgramSet distinct_ngrams(std::string_view text, int n) {
  if (n <= 0) throw usage_error("n-gram order must be positive");
  NgramSet set;
  codepoints cps = decode_utf8(text);
  if (cps.size() < static_cast<std::size_t>(n)) return set;
  set.grams.reserve(cps.size() - static_cast<std::size_t>(n) + 1);
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps.size(); ++i) {
    set.grams.push_back(detail::ngram_fingerprint(cps.data() + i, n));
  }
  std::sort(set.grams.begin(), set.grams.end());
  set.grams.erase(std::unique(set.grams.begin(), set.grams.end()), set.grams.end());
  return set;
}

// Exact-substring variant used by oracle tests to cross-check the hashed
// fingerprints against real n-gram strings.
inline std::vector<std::u32string> distinct_ngram_strings(std::string_view text, int n) {
  if (n <= 0) throw usage_error("n-gram order must be positive");
  std::vector<std::u32string> out;
  codepoints cps = decode_utf8(text);
  if (cps.size() < static_cast<std::size_t>(n)) return out;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cps.size(); ++i) {
    out.emplace_back(cps.begin() + static_cast<std::ptrdiff_t>(i),
                     cps.begin() + static_cast<std::ptrdiff_t>(i + static_cast<std::size_t>(n)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline std::size_t intersection_count(const NgramSet& a, const NgramSet& b) {
  std::size_t count = 0, i = 0, j = 0;
  while (i < a.grams.size() && j < b.grams.size()) {
    if (a.grams[i] < b.grams[j]) {
      ++i;
    } else if (b.grams[j] < a.grams[i]) {
      ++j;
    } else {
      ++count;
      ++i;
      ++j;
    }
  }
  return count;
}

namespace detail {

inline float kernel_entry(const NgramSet& a, const NgramSet& b, bool normalized) {
  std::size_t shared = intersection_count(a, b);
  if (!normalized) return static_cast<float>(shared);
  if (a.size() == 0 || b.size() == 0) return 0.0f;
  double denom = std::sqrt(static_cast<double>(a.size()) * static_cast<double>(b.size()));
  return static_cast<float>(static_cast<double>(shared) / denom);
}

}  // namespace detail

inline double kernel_value(std::string_view x, std::string_view y, const KernelSpec& spec) {
  return detail::kernel_entry(distinct_ngrams(x, spec.n), distinct_ngrams(y, spec.n),
                              spec.normalized);
}

// Parallel ids/texts, the unit gram_matrix works on.
struct TextCollection {
  std::vector<std::string> ids;
  std::vector<std::string> texts;

  std::size_t size() const { return ids.size(); }
};

// Dense row-major float32 kernel matrix with the ids it was computed from.
struct KernelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  KernelSpec spec;

  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  float& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

inline std::vector<NgramSet> build_ngram_sets(const TextCollection& docs,
                                              const KernelSpec& spec, int workers) {
  std::vector<NgramSet> sets(docs.size());
  parallel_for(docs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) sets[i] = distinct_ngrams(docs.texts[i], spec.n);
  });
  return sets;
}

// Gram matrix between two collections. Each document's n-gram set is built
// exactly once. When A and B are the same collection (same ids in the same
// order) only the upper triangle is computed and mirrored, which also pins
// the self-kernel diagonal of the normalized variant to exactly 1.
inline KernelMatrix gram_matrix(const TextCollection& a, const TextCollection& b,
                                const KernelSpec& spec, int workers = 1) {
  if (a.ids.size() != a.texts.size() || b.ids.size() != b.texts.size()) {
    throw validation_error("gram_matrix: ids and texts differ in length");
  }
  KernelMatrix K;
  K.rows = a.size();
  K.cols = b.size();
  K.row_ids = a.ids;
  K.col_ids = b.ids;
  K.spec = spec;
  K.values.assign(K.rows * K.cols, 0.0f);

  bool self = a.ids == b.ids;
  std::vector<NgramSet> rows = build_ngram_sets(a, spec, workers);
  std::vector<NgramSet> cols_store;
  const std::vector<NgramSet>& cols = self ? rows : (cols_store = build_ngram_sets(b, spec, workers));

  parallel_for(K.rows, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::size_t j0 = self ? i : 0;
      for (std::size_t j = j0; j < K.cols; ++j) {
        if (self && j == i) {
          K.at(i, i) = spec.normalized ? (rows[i].size() == 0 ? 0.0f : 1.0f)
                                       : static_cast<float>(rows[i].size());
          continue;
        }
        K.at(i, j) = detail::kernel_entry(rows[i], cols[j], spec.normalized);
      }
    }
  });
  if (self) {
    for (std::size_t i = 0; i < K.rows; ++i) {
      for (std::size_t j = 0; j < i; ++j) K.at(i, j) = K.at(j, i);
    }
  }
  return K;
}

// On-disk format: 16-byte magic, u64 rows, u64 cols, u32 n, u8 normalized,
// 3 pad bytes, then rows*cols little-endian float32 values in row-major
// order. Ids live next to the matrix in "<path>.ids", row ids first, then
// column ids, one per line.
inline constexpr char kernel_magic[17] = "RODIAL.KMAT.V001";

namespace detail {

inline void write_kernel_header(std::ostream& out, std::size_t rows, std::size_t cols,
                                const KernelSpec& spec) {
  out.write(kernel_magic, 16);
  write_le<std::uint64_t>(out, rows);
  write_le<std::uint64_t>(out, cols);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec.n));
  write_le<std::uint8_t>(out, spec.normalized ? 1 : 0);
  for (int i = 0; i < 3; ++i) write_le<std::uint8_t>(out, 0);
}

inline void write_kernel_ids(const std::string& path,
                             const std::vector<std::string>& row_ids,
                             const std::vector<std::string>& col_ids) {
  std::string blob;
  for (const auto& id : row_ids) {
    blob += id;
    blob += '\n';
  }
  for (const auto& id : col_ids) {
    blob += id;
    blob += '\n';
  }
  write_text_file(path + ".ids", blob);
}

}  // namespace detail

inline void save_kernel(const KernelMatrix& K, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open kernel file for writing: " + path);
  detail::write_kernel_header(out, K.rows, K.cols, K.spec);
  for (float v : K.values) detail::write_f32(out, v);
  if (!out) throw io_error("failed writing kernel file: " + path);
  out.close();
  detail::write_kernel_ids(path, K.row_ids, K.col_ids);
}

// Computes A x B directly to disk in blocks of rows, bounding memory by one
// block of values plus the n-gram sets. Produces the same bytes as
// save_kernel(gram_matrix(...)).
inline void gram_matrix_to_file(const TextCollection& a, const TextCollection& b,
                                const KernelSpec& spec, const std::string& path,
                                std::size_t block_rows, int workers = 1) {
  if (block_rows == 0) throw usage_error("block_rows must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open kernel file for writing: " + path);
  detail::write_kernel_header(out, a.size(), b.size(), spec);

  std::vector<NgramSet> rows = build_ngram_sets(a, spec, workers);
  std::vector<NgramSet> cols_store;
  bool self = a.ids == b.ids;
  const std::vector<NgramSet>& cols = self ? rows : (cols_store = build_ngram_sets(b, spec, workers));

  std::vector<float> block;
  for (std::size_t r0 = 0; r0 < a.size(); r0 += block_rows) {
    std::size_t r1 = std::min(a.size(), r0 + block_rows);
    block.assign((r1 - r0) * b.size(), 0.0f);
    parallel_for(r1 - r0, workers, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        std::size_t i = r0 + k;
        for (std::size_t j = 0; j < b.size(); ++j) {
          if (self && i == j) {
            block[k * b.size() + j] =
                spec.normalized ? (rows[i].size() == 0 ? 0.0f : 1.0f)
                                : static_cast<float>(rows[i].size());
          } else {
            block[k * b.size() + j] = detail::kernel_entry(rows[i], cols[j], spec.normalized);
          }
        }
      }
    });
    for (float v : block) detail::write_f32(out, v);
  }
  if (!out) throw io_error("failed writing kernel file: " + path);
  out.close();
  detail::write_kernel_ids(path, a.ids, b.ids);
}

inline KernelMatrix load_kernel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open kernel file: " + path);
  char magic[16];
  in.read(magic, 16);
  if (!in || std::string_view(magic, 16) != std::string_view(kernel_magic, 16)) {
    throw parse_error(path + ": not a kernel matrix file (bad magic)");
  }
  KernelMatrix K;
  K.rows = detail::read_le<std::uint64_t>(in);
  K.cols = detail::read_le<std::uint64_t>(in);
  K.spec.n = static_cast<int>(detail::read_le<std::uint32_t>(in));
  K.spec.normalized = detail::read_le<std::uint8_t>(in) != 0;
  for (int i = 0; i < 3; ++i) detail::read_le<std::uint8_t>(in);
  if (!in) throw parse_error(path + ": truncated kernel header");
  if (K.rows == 0 || K.cols == 0 || K.spec.n <= 0) {
    throw parse_error(path + ": implausible kernel dimensions");
  }

  K.values.resize(K.rows * K.cols);
  for (std::size_t i = 0; i < K.values.size(); ++i) {
    K.values[i] = detail::read_f32(in);
    if (!in) throw parse_error(path + ": truncated kernel values");
  }
  char extra;
  if (in.read(&extra, 1)) throw parse_error(path + ": trailing bytes after kernel values");

  std::string ids_blob = read_text_file(path + ".ids");
  std::vector<std::string> ids;
  std::size_t pos = 0;
  while (pos < ids_blob.size()) {
    std::size_t nl = ids_blob.find('\n', pos);
    if (nl == std::string::npos) {
      ids.push_back(ids_blob.substr(pos));
      pos = ids_blob.size();
    } else {
      ids.push_back(ids_blob.substr(pos, nl - pos));
      pos = nl + 1;
    }
  }
  if (ids.size() != K.rows + K.cols) {
    throw parse_error(path + ".ids: expected " + std::to_string(K.rows + K.cols) +
                      " ids, found " + std::to_string(ids.size()));
  }
  K.row_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(K.rows));
  K.col_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(K.rows), ids.end());
  return K;
}

// Row/column subset of a kernel matrix, used for one-vs-one submodels.
inline KernelMatrix submatrix(const KernelMatrix& K, const std::vector<std::size_t>& row_idx,
                              const std::vector<std::size_t>& col_idx) {
  KernelMatrix S;
  S.rows = row_idx.size();
  S.cols = col_idx.size();
  S.spec = K.spec;
  S.values.resize(S.rows * S.cols);
  S.row_ids.reserve(S.rows);
  S.col_ids.reserve(S.cols);
  for (std::size_t i : row_idx) S.row_ids.push_back(K.row_ids[i]);
  for (std::size_t j : col_idx) S.col_ids.push_back(K.col_ids[j]);
  for (std::size_t i = 0; i < S.rows; ++i) {
    for (std::size_t j = 0; j < S.cols; ++j) {
      S.at(i, j) = K.at(row_idx[i], col_idx[j]);
    }
  }
  return S;
}

}  // namespace rodial
