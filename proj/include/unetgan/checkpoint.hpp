#pragma once

// Checkpoint container. Layout, all little-endian:
//   magic "UGAN" | u32 version | u64 record count
//   per record: u32 name length | name bytes (UTF-8)
//               u32 rank | u64 extents[rank] | float32 payload
// Scalars ride along as rank-1 arrays; 64-bit integers (RNG state) are split
// into 16-bit chunks so each chunk is exact in float32.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "unetgan/common.hpp"

namespace unetgan {

static_assert(sizeof(float) == 4, "float32 payloads assume 4-byte float");

struct ArrayRecord {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), std::streamsize(n));
}

inline void get_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
  is.read(static_cast<char*>(p), std::streamsize(n));
  if (std::size_t(is.gcount()) != n)
    throw FormatError(std::string("checkpoint: truncated file while reading ") + what);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const std::vector<ArrayRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("checkpoint: cannot open for writing: " + path);
  os.write("UGAN", 4);
  std::uint32_t version = 1;
  detail::put_bytes(os, &version, 4);
  std::uint64_t count = records.size();
  detail::put_bytes(os, &count, 8);
  for (const auto& r : records) {
    std::uint32_t nlen = std::uint32_t(r.name.size());
    detail::put_bytes(os, &nlen, 4);
    detail::put_bytes(os, r.name.data(), r.name.size());
    std::uint32_t rank = std::uint32_t(r.shape.size());
    detail::put_bytes(os, &rank, 4);
    for (std::size_t e : r.shape) {
      std::uint64_t e64 = e;
      detail::put_bytes(os, &e64, 8);
    }
    if (numel(r.shape) != r.data.size())
      throw FormatError("checkpoint: record '" + r.name + "' shape/data mismatch");
    detail::put_bytes(os, r.data.data(), r.data.size() * 4);
  }
  if (!os) throw FormatError("checkpoint: write failed: " + path);
}

inline std::vector<ArrayRecord> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open: " + path);
  char magic[4];
  detail::get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, "UGAN", 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path + " (expected 'UGAN')");
  std::uint32_t version = 0;
  detail::get_bytes(is, &version, 4, "version");
  if (version != 1)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  std::uint64_t count = 0;
  detail::get_bytes(is, &count, 8, "record count");
  std::vector<ArrayRecord> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ArrayRecord r;
    std::uint32_t nlen = 0;
    detail::get_bytes(is, &nlen, 4, "name length");
    r.name.resize(nlen);
    detail::get_bytes(is, r.name.data(), nlen, "name");
    std::uint32_t rank = 0;
    detail::get_bytes(is, &rank, 4, "rank");
    r.shape.resize(rank);
    for (auto& e : r.shape) {
      std::uint64_t e64 = 0;
      detail::get_bytes(is, &e64, 8, "extent");
      e = std::size_t(e64);
    }
    r.data.resize(numel(r.shape));
    detail::get_bytes(is, r.data.data(), r.data.size() * 4, ("payload of '" + r.name + "'").c_str());
    out.push_back(std::move(r));
  }
  return out;
}

inline std::map<std::string, ArrayRecord> checkpoint_index(std::vector<ArrayRecord> records) {
  std::map<std::string, ArrayRecord> idx;
  for (auto& r : records) {
    std::string name = r.name;
    idx.emplace(std::move(name), std::move(r));
  }
  return idx;
}

// u64 <-> four exact 16-bit chunks, low chunk first.
inline ArrayRecord pack_u64(const std::string& name, std::uint64_t v) {
  ArrayRecord r{name, {4}, std::vector<float>(4)};
  for (int i = 0; i < 4; ++i) r.data[std::size_t(i)] = float((v >> (16 * i)) & 0xffffULL);
  return r;
}

inline std::uint64_t unpack_u64(const ArrayRecord& r) {
  if (r.data.size() != 4) throw FormatError("checkpoint: '" + r.name + "' is not a packed u64");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint64_t(std::uint16_t(r.data[std::size_t(i)])) << (16 * i);
  return v;
}

}  // namespace unetgan
