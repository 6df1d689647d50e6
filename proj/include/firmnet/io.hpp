#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "firmnet/tensor.hpp"

namespace firmnet {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw IoError("unexpected end of file");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

inline void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("unexpected end of file");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

// NTF1 tensor container: magic "NTF1", u32 LE rank, u32 LE extents,
// then the payload as f64 LE.
inline void write_ntf(std::ostream& os, const Tensor& t) {
  os.write("NTF1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) detail::put_u32(os, static_cast<std::uint32_t>(e));
  for (double v : t.values()) detail::put_f64(os, v);
}

inline void write_ntf(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  write_ntf(os, t);
}

inline Tensor read_ntf(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NTF1", 4) != 0) throw IoError("not an NTF1 stream");
  const std::uint32_t rank = detail::get_u32(is);
  if (rank == 0 || rank > 8) throw IoError("NTF1 rank out of range");
  std::vector<std::size_t> shape(rank);
  for (auto& e : shape) e = detail::get_u32(is);
  Tensor t(shape);
  for (double& v : t.values()) v = detail::get_f64(is);
  return t;
}

inline Tensor read_ntf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return read_ntf(is);
}

// PGM (P5) and PPM (P6), 8 bits per sample, mapped linearly to [0,1].
inline void write_pnm(const std::string& path, const Tensor& img) {
  if (img.rank() != 3) throw IoError("pnm expects (c,h,w)");
  const std::size_t c = img.extent(0), h = img.extent(1), w = img.extent(2);
  if (c != 1 && c != 3) throw IoError("pnm supports 1 or 3 channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp(img.at(ch, y, x), 0.0, 1.0);
        os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
}

inline Tensor read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P5" && magic != "P6") throw IoError("unsupported pnm magic");
  const std::size_t c = magic == "P5" ? 1 : 3;
  auto next_token = [&is]() {
    std::string tok;
    while (is >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return tok;
    }
    throw IoError("truncated pnm header");
  };
  const std::size_t w = std::stoul(next_token());
  const std::size_t h = std::stoul(next_token());
  const std::size_t maxval = std::stoul(next_token());
  if (maxval != 255) throw IoError("only 8-bit pnm supported");
  is.get();  // single whitespace after header
  Tensor img({c, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const int b = is.get();
        if (b < 0) throw IoError("truncated pnm payload");
        img.at(ch, y, x) = double(b) / 255.0;
      }
  return img;
}

// Flat key=value configuration text. Lines starting with '#' are comments.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  while (std::getline(is, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("config line missing '=': " + line);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  return parse_key_values(is);
}

inline void write_key_values(const std::string& path, const KeyValues& kv) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
}

class KeyValueView {
public:
  explicit KeyValueView(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }
  double num(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : std::stod(it->second);
  }
  long integer(const std::string& key, long fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : std::stol(it->second);
  }
  unsigned long long unsigned_integer(const std::string& key, unsigned long long fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : std::stoull(it->second);
  }

private:
  const KeyValues& kv_;
};

class CsvWriter {
public:
  explicit CsvWriter(const std::string& path) : os_(path) {
    if (!os_) throw IoError("cannot open for write: " + path);
    os_.precision(17);
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((os_ << (first ? "" : ","), os_ << cells, first = false), ...);
    os_ << "\n";
  }

private:
  std::ofstream os_;
};

}  // namespace firmnet
