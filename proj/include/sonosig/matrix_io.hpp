#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>

#include "sonosig/io.hpp"
#include "sonosig/solver.hpp"

namespace sonosig {

static_assert(std::endian::native == std::endian::little,
              "matrix files are defined little-endian");

enum class MatrixFormat { binary, csv };

inline const char* to_string(MatrixFormat f) {
  return f == MatrixFormat::binary ? "bin" : "csv";
}

inline MatrixFormat matrix_format_from_string(std::string_view s) {
  if (s == "bin" || s == "binary") return MatrixFormat::binary;
  if (s == "csv") return MatrixFormat::csv;
  throw std::invalid_argument("unknown matrix format: " + std::string(s));
}

namespace detail {

inline std::string matrix_payload_binary(const Eigen::MatrixXcd& m) {
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  std::string out;
  out.reserve(24 + rows * cols * 16);
  out.append("SSIGTM1\0", 8);
  out.append(reinterpret_cast<const char*>(&rows), 8);
  out.append(reinterpret_cast<const char*>(&cols), 8);
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      const Complex v = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      const double re = v.real(), im = v.imag();
      out.append(reinterpret_cast<const char*>(&re), 8);
      out.append(reinterpret_cast<const char*>(&im), 8);
    }
  }
  return out;
}

inline Eigen::MatrixXcd matrix_from_binary(const std::string& data,
                                           const std::filesystem::path& origin) {
  if (data.size() < 24 || data.compare(0, 8, "SSIGTM1\0", 8) != 0)
    throw std::runtime_error("bad matrix file header: " + origin.string());
  std::uint64_t rows = 0, cols = 0;
  std::memcpy(&rows, data.data() + 8, 8);
  std::memcpy(&cols, data.data() + 16, 8);
  if (data.size() != 24 + rows * cols * 16)
    throw std::runtime_error("truncated matrix file: " + origin.string());
  Eigen::MatrixXcd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const char* p = data.data() + 24;
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      double re = 0, im = 0;
      std::memcpy(&re, p, 8);
      std::memcpy(&im, p + 8, 8);
      p += 16;
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = Complex(re, im);
    }
  }
  return m;
}

inline std::string matrix_payload_csv(const TransferMatrix& tm) {
  std::string out = "row_index,freq_hz,real,imag\n";
  for (int r = 0; r < tm.rows(); ++r) {
    for (int c = 0; c < tm.cols(); ++c) {
      const Complex v = tm.values(r, c);
      out += std::to_string(r);
      out += ',';
      out += io::format_double(tm.frequencies[static_cast<std::size_t>(c)]);
      out += ',';
      out += io::format_double(v.real());
      out += ',';
      out += io::format_double(v.imag());
      out += '\n';
    }
  }
  return out;
}

inline Eigen::MatrixXcd matrix_from_csv(const std::string& data, int rows, int cols,
                                        const std::filesystem::path& origin) {
  Eigen::MatrixXcd m(rows, cols);
  std::size_t pos = data.find('\n');  // skip header
  if (pos == std::string::npos)
    throw std::runtime_error("empty matrix csv: " + origin.string());
  ++pos;
  long count = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    std::string_view line(data.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    std::size_t c1 = line.find(',');
    std::size_t c2 = line.find(',', c1 + 1);
    std::size_t c3 = line.find(',', c2 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos || c3 == std::string_view::npos)
      throw std::runtime_error("malformed matrix csv line: " + std::string(line));
    const int r = static_cast<int>(io::parse_int(line.substr(0, c1)));
    const int c = static_cast<int>(count % cols);
    if (r != count / cols)
      throw std::runtime_error("matrix csv rows out of order: " + origin.string());
    const double re = io::parse_double(line.substr(c2 + 1, c3 - c2 - 1));
    const double im = io::parse_double(line.substr(c3 + 1));
    m(r, c) = Complex(re, im);
    ++count;
  }
  if (count != static_cast<long>(rows) * cols)
    throw std::runtime_error("matrix csv entry count mismatch: " + origin.string());
  return m;
}

}  // namespace detail

struct SavedMatrixFiles {
  std::filesystem::path meta;
  std::filesystem::path data;
};

inline SavedMatrixFiles save_transfer_matrix(const TransferMatrix& tm,
                                             const std::filesystem::path& dir,
                                             const std::string& basename,
                                             MatrixFormat format = MatrixFormat::binary) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SavedMatrixFiles files;
  files.meta = dir / (basename + ".meta");
  const std::string data_name =
      basename + (format == MatrixFormat::binary ? ".bin" : ".csv");
  files.data = dir / data_name;

  io::KeyValues kv;
  kv.set("format", "sonosig-transfer-matrix-v1");
  kv.set("config_id", tm.config_id);
  kv.set("config_line", tm.config_line);
  kv.set("plan_hash", tm.plan_hash);
  kv.set("grid_h", io::format_double(tm.grid_h));
  kv.set("nx", std::to_string(tm.nx));
  kv.set("ny", std::to_string(tm.ny));
  kv.set("sensor_count", std::to_string(tm.sensor_count));
  kv.set("actuators", io::join_ints(tm.actuators));
  kv.set("receivers", io::join_ints(tm.receivers));
  kv.set("frequencies_hz", io::join_doubles(tm.frequencies));
  kv.set("loss_tangent", io::format_double(tm.loss_tangent));
  kv.set("source_amplitude", io::format_double(tm.source_amplitude));
  kv.set("quality_flags", io::join_ints(tm.quality));
  kv.set("rows", std::to_string(tm.rows()));
  kv.set("cols", std::to_string(tm.cols()));
  kv.set("data_file", data_name);
  kv.set("data_format", format == MatrixFormat::binary ? "complex-f64le-rowmajor-v1" : "csv-v1");

  if (format == MatrixFormat::binary)
    io::atomic_write(files.data, detail::matrix_payload_binary(tm.values));
  else
    io::atomic_write(files.data, detail::matrix_payload_csv(tm));
  io::atomic_write(files.meta, kv.serialize());
  return files;
}

inline TransferMatrix load_transfer_matrix(const std::filesystem::path& meta_path) {
  const io::KeyValues kv = io::KeyValues::parse(io::read_file(meta_path));
  if (kv.require("format") != "sonosig-transfer-matrix-v1")
    throw std::runtime_error("unsupported matrix sidecar: " + meta_path.string());
  TransferMatrix tm;
  tm.config_id = kv.require("config_id");
  tm.config_line = kv.require("config_line");
  tm.plan_hash = kv.require("plan_hash");
  tm.grid_h = kv.get_double("grid_h");
  tm.nx = static_cast<int>(kv.get_int("nx"));
  tm.ny = static_cast<int>(kv.get_int("ny"));
  tm.sensor_count = static_cast<int>(kv.get_int("sensor_count"));
  tm.actuators = io::split_ints(kv.require("actuators"));
  tm.receivers = io::split_ints(kv.require("receivers"));
  tm.frequencies = io::split_doubles(kv.require("frequencies_hz"));
  tm.loss_tangent = kv.get_double("loss_tangent");
  tm.source_amplitude = kv.get_double("source_amplitude");
  tm.quality = io::split_ints(kv.require("quality_flags"));
  const int rows = static_cast<int>(kv.get_int("rows"));
  const int cols = static_cast<int>(kv.get_int("cols"));

  const std::filesystem::path data_path = meta_path.parent_path() / kv.require("data_file");
  const std::string payload = io::read_file(data_path);
  const std::string& dformat = kv.require("data_format");
  if (dformat == "complex-f64le-rowmajor-v1")
    tm.values = detail::matrix_from_binary(payload, data_path);
  else if (dformat == "csv-v1")
    tm.values = detail::matrix_from_csv(payload, rows, cols, data_path);
  else
    throw std::runtime_error("unsupported matrix data format: " + dformat);
  if (tm.rows() != rows || tm.cols() != cols)
    throw std::runtime_error("matrix shape mismatch: " + meta_path.string());
  return tm;
}

}  // namespace sonosig
