#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace sonosig::io {

// Shortest decimal form that round-trips bit-exactly through parse_double.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{})
    throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{})
    throw std::runtime_error("parse_double: not a number: '" + std::string(s) + "'");
  return v;
}

inline long long parse_int(std::string_view s) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{})
    throw std::runtime_error("parse_int: not an integer: '" + std::string(s) + "'");
  return v;
}

// FNV-1a, 64-bit. Used for plan hashes and manifest content hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf, 16);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline std::string hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return to_hex(h);
}

// Write via a temp file and rename, so readers never see partial content and
// an interrupted run leaves no half-written outputs behind.
inline void atomic_write(const std::filesystem::path& path, std::string_view content) {
  namespace fs = std::filesystem;
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out)
      throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, row 0 on top
};

// 8-bit binary PGM (P5).
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  if (static_cast<std::size_t>(img.width) * img.height != img.pixels.size())
    throw std::invalid_argument("write_pgm: pixel count does not match dimensions");
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  atomic_write(path, out);
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::string data = read_file(path);
  std::istringstream in(data);
  std::string magic;
  int w = 0, hgt = 0, maxv = 0;
  in >> magic >> w >> hgt >> maxv;
  if (magic != "P5" || maxv != 255 || w <= 0 || hgt <= 0)
    throw std::runtime_error("read_pgm: unsupported PGM: " + path.string());
  in.get();  // single whitespace after maxval
  GrayImage img;
  img.width = w;
  img.height = hgt;
  img.pixels.resize(static_cast<std::size_t>(w) * hgt);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw std::runtime_error("read_pgm: truncated file: " + path.string());
  return img;
}

// Ordered "key: value" text file, one pair per line. Used for matrix and
// signature sidecars and for machine-readable reports.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> items;

  void set(std::string key, std::string value) {
    for (auto& kv : items) {
      if (kv.first == key) {
        kv.second = std::move(value);
        return;
      }
    }
    items.emplace_back(std::move(key), std::move(value));
  }

  const std::string* find(std::string_view key) const {
    for (const auto& kv : items)
      if (kv.first == key) return &kv.second;
    return nullptr;
  }

  const std::string& require(std::string_view key) const {
    const std::string* v = find(key);
    if (!v)
      throw std::runtime_error("missing key: " + std::string(key));
    return *v;
  }

  double get_double(std::string_view key) const { return parse_double(require(key)); }
  long long get_int(std::string_view key) const { return parse_int(require(key)); }

  std::string serialize() const {
    std::string out;
    for (const auto& kv : items) {
      out += kv.first;
      out += ": ";
      out += kv.second;
      out += '\n';
    }
    return out;
  }

  static KeyValues parse(std::string_view text) {
    KeyValues kv;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      std::string_view line = text.substr(pos, eol - pos);
      pos = eol + 1;
      if (line.empty() || line.front() == '#') continue;
      std::size_t sep = line.find(": ");
      if (sep == std::string_view::npos)
        throw std::runtime_error("malformed key-value line: '" + std::string(line) + "'");
      kv.items.emplace_back(std::string(line.substr(0, sep)), std::string(line.substr(sep + 2)));
    }
    return kv;
  }
};

// Space-separated lists of numbers, for sidecar fields.
inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_double(v[i]);
  }
  return out;
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<double> split_doubles(std::string_view s) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && s[pos] == ' ') ++pos;
    if (pos >= s.size()) break;
    std::size_t end = s.find(' ', pos);
    if (end == std::string_view::npos) end = s.size();
    out.push_back(parse_double(s.substr(pos, end - pos)));
    pos = end;
  }
  return out;
}

inline std::vector<int> split_ints(std::string_view s) {
  std::vector<int> out;
  for (double v : split_doubles(s)) out.push_back(static_cast<int>(v));
  return out;
}

}  // namespace sonosig::io
