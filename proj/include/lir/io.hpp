#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lir/errors.hpp"
#include "lir/numerics.hpp"

namespace lir {
namespace drle {

// Binary layout (all little-endian):
//   magic "DRLE", u16 version = 1, u16 flags (bit0: weights present),
//   u32 doc count, u16 D;
//   per document: u32 id, u16 N, N*D f32 rows, N mask bytes, [N f32 weights];
//   trailing CRC32 of everything before it.
inline constexpr char kMagic[4] = {'D', 'R', 'L', 'E'};
inline constexpr uint16_t kVersion = 1;
inline constexpr uint16_t kFlagWeights = 0x1;

namespace detail {

inline constexpr auto kCrcTable = [] {
  std::array<uint32_t, 256> table{};
  for (uint32_t i = 0; i < 256; ++i) {
    uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
    table[i] = c;
  }
  return table;
}();

inline uint32_t crc32(const uint8_t* data, size_t len) {
  uint32_t c = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) c = kCrcTable[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

struct Reader {
  const uint8_t* p;
  size_t len;
  size_t pos = 0;

  void need(size_t n) const {
    require(pos + n <= len, errc::format_error, "file truncated");
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[pos]) | static_cast<uint16_t>(p[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  uint8_t byte() {
    need(1);
    return p[pos++];
  }
};

}  // namespace detail

struct Record {
  uint32_t id = 0;
  MatF tokens;
  std::vector<uint8_t> mask;
  std::vector<float> weights;  // empty when the file carries none
};

using Manifest = std::map<std::string, std::string>;

struct File {
  int dim = 0;
  bool has_weights = false;
  std::vector<Record> docs;
  Manifest manifest;
};

inline void write_file(const std::string& path, const File& f) {
  require(f.dim >= 1 && f.dim <= 0xFFFF, errc::format_error, "dimension out of range");
  std::vector<uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  detail::put_u16(buf, kVersion);
  detail::put_u16(buf, f.has_weights ? kFlagWeights : 0);
  detail::put_u32(buf, static_cast<uint32_t>(f.docs.size()));
  detail::put_u16(buf, static_cast<uint16_t>(f.dim));
  for (const Record& r : f.docs) {
    require(r.tokens.cols == f.dim, errc::shape_mismatch, "record dim mismatch");
    require(r.tokens.rows >= 1 && r.tokens.rows <= 0xFFFF, errc::format_error,
            "token count out of range");
    require(r.mask.size() == static_cast<size_t>(r.tokens.rows), errc::shape_mismatch,
            "mask length mismatch");
    detail::put_u32(buf, r.id);
    detail::put_u16(buf, static_cast<uint16_t>(r.tokens.rows));
    for (float x : r.tokens.data) detail::put_f32(buf, x);
    for (uint8_t m : r.mask) buf.push_back(m ? 1 : 0);
    if (f.has_weights) {
      require(r.weights.size() == static_cast<size_t>(r.tokens.rows), errc::shape_mismatch,
              "weight length mismatch");
      for (float w : r.weights) detail::put_f32(buf, w);
    }
  }
  uint32_t crc = detail::crc32(buf.data(), buf.size());
  detail::put_u32(buf, crc);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), errc::io_error, "cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  require(out.good(), errc::io_error, "write failed: " + path);
  out.close();

  if (!f.manifest.empty()) {
    std::ofstream man(path + ".manifest", std::ios::trunc);
    require(man.good(), errc::io_error, "cannot write manifest for: " + path);
    for (const auto& [k, v] : f.manifest) man << k << ": " << v << "\n";
    require(man.good(), errc::io_error, "manifest write failed: " + path);
  }
}

inline File read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), errc::io_error, "cannot open: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(!in.bad(), errc::io_error, "read failed: " + path);

  require(buf.size() >= 4 + 2 + 2 + 4 + 2 + 4, errc::format_error, "file too short");
  require(std::memcmp(buf.data(), kMagic, 4) == 0, errc::format_error, "bad magic");

  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= static_cast<uint32_t>(buf[buf.size() - 4 + i]) << (8 * i);
  uint32_t actual_crc = detail::crc32(buf.data(), buf.size() - 4);
  require(stored_crc == actual_crc, errc::checksum_error, "payload checksum mismatch");

  detail::Reader rd{buf.data(), buf.size() - 4, 4};
  File f;
  uint16_t version = rd.u16();
  require(version == kVersion, errc::format_error, "unsupported version " + std::to_string(version));
  uint16_t flags = rd.u16();
  require((flags & ~kFlagWeights) == 0, errc::format_error, "unknown flag bits");
  f.has_weights = (flags & kFlagWeights) != 0;
  uint32_t count = rd.u32();
  f.dim = rd.u16();
  require(f.dim >= 1, errc::format_error, "dimension must be positive");

  f.docs.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Record r;
    r.id = rd.u32();
    uint16_t n = rd.u16();
    require(n >= 1, errc::format_error, "document with zero tokens");
    r.tokens = MatF(n, f.dim);
    for (float& x : r.tokens.data) x = rd.f32();
    r.mask.resize(n);
    bool any_valid = false;
    for (uint8_t& m : r.mask) {
      m = rd.byte();
      require(m == 0 || m == 1, errc::format_error, "mask byte must be 0 or 1");
      any_valid = any_valid || m;
    }
    require(any_valid, errc::format_error, "document with no valid tokens");
    if (f.has_weights) {
      r.weights.resize(n);
      for (float& w : r.weights) w = rd.f32();
    }
    f.docs.push_back(std::move(r));
  }
  require(rd.pos == rd.len, errc::format_error, "trailing bytes after documents");

  std::ifstream man(path + ".manifest");
  if (man.good()) {
    std::string line;
    while (std::getline(man, line)) {
      size_t sep = line.find(": ");
      if (sep == std::string::npos) continue;
      f.manifest[line.substr(0, sep)] = line.substr(sep + 2);
    }
  }
  return f;
}

}  // namespace drle

/// Writes raw token sequences (no weights) in the shard format.
inline void save_tokens(const std::string& path, std::span<const TokenMatrix> items,
                        const drle::Manifest& manifest = {}) {
  require(!items.empty(), errc::config_error, "nothing to save");
  drle::File f;
  f.dim = items.front().dim();
  f.has_weights = false;
  f.manifest = manifest;
  for (const TokenMatrix& m : items) {
    m.validate();
    require(m.dim() == f.dim, errc::shape_mismatch, "token dim differs across items");
    f.docs.push_back({m.id, m.tokens, m.mask, {}});
  }
  drle::write_file(path, f);
}

inline std::vector<TokenMatrix> load_tokens(const std::string& path, Modality modality,
                                            drle::Manifest* manifest_out = nullptr) {
  drle::File f = drle::read_file(path);
  if (manifest_out) *manifest_out = f.manifest;
  std::vector<TokenMatrix> items;
  items.reserve(f.docs.size());
  for (auto& r : f.docs) {
    TokenMatrix m;
    m.id = r.id;
    m.tokens = std::move(r.tokens);
    m.mask = std::move(r.mask);
    m.modality = modality;
    items.push_back(std::move(m));
  }
  return items;
}

}  // namespace lir
