#pragma once

// DGEM embedding files.
//
//   offset 0   "DGEM"            magic
//          4   u32 version = 1
//          8   u32 N (rows)
//         12   u32 D (columns)
//         16   N*D float32       row-major values
//          .   N x (u32 len, len bytes UTF-8)  sample ids
//
// All integers and floats little-endian. Values are held as double in
// memory; float32 -> double -> float32 is exact, so file round trips are
// bit-identical.

#include "divergauge/features.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace divergauge {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kDgemMagic[4] = {'D', 'G', 'E', 'M'};
inline constexpr std::uint32_t kDgemVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] inline void dgem_fail(std::size_t offset, const std::string& what) {
  std::ostringstream os;
  os << "DGEM: " << what << " (at byte offset " << offset << ")";
  throw FormatError(os.str());
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& e) {
  if (e.values.size() != e.rows * e.cols)
    throw std::invalid_argument("encode_embeddings: value buffer does not match rows*cols");
  if (e.ids.size() != e.rows)
    throw std::invalid_argument("encode_embeddings: need one id per row");
  std::vector<std::uint8_t> out;
  out.reserve(16 + e.values.size() * 4);
  out.insert(out.end(), std::begin(kDgemMagic), std::end(kDgemMagic));
  detail::put_u32(out, kDgemVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(e.rows));
  detail::put_u32(out, static_cast<std::uint32_t>(e.cols));
  for (std::size_t i = 0; i < e.values.size(); ++i) {
    const auto f = static_cast<float>(e.values[i]);
    if (!std::isfinite(f))
      throw std::invalid_argument("encode_embeddings: non-finite value at row " +
                                  std::to_string(i / std::max<std::size_t>(e.cols, 1)));
    detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  for (const auto& id : e.ids) {
    detail::put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  return out;
}

inline EmbeddingMatrix decode_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) detail::dgem_fail(bytes.size(), "truncated header, need 16 bytes");
  if (std::memcmp(bytes.data(), kDgemMagic, 4) != 0)
    detail::dgem_fail(0, "bad magic, expected \"DGEM\"");
  const std::uint32_t version = detail::get_u32(bytes.data() + 4);
  if (version != kDgemVersion)
    detail::dgem_fail(4, "unsupported version " + std::to_string(version) + ", expected 1");

  EmbeddingMatrix e;
  e.rows = detail::get_u32(bytes.data() + 8);
  e.cols = detail::get_u32(bytes.data() + 12);
  const std::uint64_t payload = static_cast<std::uint64_t>(e.rows) * e.cols * 4;
  if (16 + payload > bytes.size()) {
    std::ostringstream os;
    os << "truncated payload: header declares " << e.rows << "x" << e.cols << " values ("
       << payload << " bytes) but only " << (bytes.size() - 16) << " bytes follow";
    detail::dgem_fail(16, os.str());
  }
  e.values.resize(e.rows * e.cols);
  std::size_t off = 16;
  for (std::size_t i = 0; i < e.values.size(); ++i, off += 4) {
    const float f = std::bit_cast<float>(detail::get_u32(bytes.data() + off));
    if (!std::isfinite(f)) detail::dgem_fail(off, "non-finite value");
    e.values[i] = f;
  }
  e.ids.reserve(e.rows);
  for (std::size_t r = 0; r < e.rows; ++r) {
    if (off + 4 > bytes.size()) detail::dgem_fail(off, "truncated id length for row " + std::to_string(r));
    const std::uint32_t len = detail::get_u32(bytes.data() + off);
    off += 4;
    if (off + len > bytes.size()) detail::dgem_fail(off, "truncated id for row " + std::to_string(r));
    e.ids.emplace_back(reinterpret_cast<const char*>(bytes.data() + off), len);
    off += len;
  }
  if (off != bytes.size()) detail::dgem_fail(off, "unexpected trailing bytes");
  return e;
}

inline void write_embeddings(const EmbeddingMatrix& e, const std::string& path) {
  const auto bytes = encode_embeddings(e);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_embeddings: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_embeddings: write failed for " + path);
}

inline EmbeddingMatrix read_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_embeddings: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_embeddings(bytes);
  } catch (const FormatError& err) {
    throw FormatError(path + ": " + err.what());
  }
}

}  // namespace divergauge
