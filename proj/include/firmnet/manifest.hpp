#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace firmnet {

// SHA-1, enough for content fingerprints of run inputs (not for security).
class Sha1 {
public:
  Sha1() { reset(); }

  void reset() {
    h_ = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    buffer_.clear();
    total_ = 0;
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    buffer_.insert(buffer_.end(), p, p + len);
    while (buffer_.size() >= 64) {
      process(buffer_.data());
      buffer_.erase(buffer_.begin(), buffer_.begin() + 64);
    }
  }

  std::string hex_digest() {
    std::vector<unsigned char> pad = buffer_;
    const std::uint64_t bits = total_ * 8;
    pad.push_back(0x80);
    while (pad.size() % 64 != 56) pad.push_back(0x00);
    for (int i = 7; i >= 0; --i) pad.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    auto h = h_;
    for (std::size_t at = 0; at < pad.size(); at += 64) process_block(pad.data() + at, h);
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (std::uint32_t w : h) os << std::setw(8) << w;
    return os.str();
  }

private:
  static std::uint32_t rol(std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

  void process(const unsigned char* block) { process_block(block, h_); }

  static void process_block(const unsigned char* block, std::array<std::uint32_t, 5>& h) {
    std::uint32_t w[80];
    for (int t = 0; t < 16; ++t)
      w[t] = (std::uint32_t(block[4 * t]) << 24) | (std::uint32_t(block[4 * t + 1]) << 16) |
             (std::uint32_t(block[4 * t + 2]) << 8) | std::uint32_t(block[4 * t + 3]);
    for (int t = 16; t < 80; ++t) w[t] = rol(w[t - 3] ^ w[t - 8] ^ w[t - 14] ^ w[t - 16], 1);
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int t = 0; t < 80; ++t) {
      std::uint32_t f, k;
      if (t < 20) {
        f = (b & c) | ((~b) & d);
        k = 0x5A827999u;
      } else if (t < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (t < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      const std::uint32_t tmp = rol(a, 5) + f + e + k + w[t];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }

  std::array<std::uint32_t, 5> h_{};
  std::vector<unsigned char> buffer_;
  std::uint64_t total_ = 0;
};

// Content hash in the git blob style: sha1("blob <len>\0<bytes>").
inline std::string content_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) return "missing";
  std::ostringstream data;
  data << is.rdbuf();
  const std::string bytes = data.str();
  Sha1 sha;
  const std::string header = "blob " + std::to_string(bytes.size());
  sha.update(header.data(), header.size() + 1);  // include the NUL
  sha.update(bytes.data(), bytes.size());
  return sha.hex_digest();
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

// Everything needed to re-run a command: the command line, config, seed, and
// content hashes of the inputs it read.
struct RunManifest {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;
  std::string output_dir;
  std::string started_at;
  std::string finished_at;

  void add_input(const std::string& path) { input_hashes[path] = content_hash(path); }

  void write(const std::string& path) const {
    std::ofstream os(path);
    os << "command = " << command << "\n";
    if (!config_path.empty()) os << "config = " << config_path << "\n";
    os << "seed = " << seed << "\n";
    os << "output_dir = " << output_dir << "\n";
    os << "started_at = " << started_at << "\n";
    os << "finished_at = " << finished_at << "\n";
    for (const auto& [p, h] : input_hashes) os << "input " << p << " = " << h << "\n";
  }
};

}  // namespace firmnet
