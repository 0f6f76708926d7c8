#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "sonosig/io.hpp"
#include "sonosig/solver.hpp"

namespace sonosig {

// Wrap into (-pi, pi].
inline double wrap_phase(double a) {
  double y = std::fmod(a + kPi, 2.0 * kPi);
  if (y <= 0.0) y += 2.0 * kPi;
  return y - kPi;
}

// Baseline-subtracted channel response. Amplitude keeps its sign; the
// absolute value is applied only when rendering.
struct SignatureImage {
  Eigen::MatrixXd amplitude;  // |defect| - |healthy|
  Eigen::MatrixXd phase;      // wrapped arg(defect) - arg(healthy), (-pi, pi]
  int sensor_count = 0;
  std::vector<int> actuators;
  std::vector<int> receivers;
  std::vector<double> frequencies;
  std::string plan_hash;
  double grid_h = 0.0;
  std::string defect_id;    // provenance of the two source matrices
  std::string baseline_id;

  int rows() const { return static_cast<int>(amplitude.rows()); }
  int cols() const { return static_cast<int>(amplitude.cols()); }
  int channel_id(int row) const {
    const int nr = static_cast<int>(receivers.size());
    return actuators[static_cast<std::size_t>(row / nr)] * sensor_count +
           receivers[static_cast<std::size_t>(row % nr)];
  }
};

inline SignatureImage build_signature(const TransferMatrix& defect, const TransferMatrix& healthy) {
  if (defect.rows() != healthy.rows() || defect.cols() != healthy.cols())
    throw std::invalid_argument("build_signature: shape mismatch");
  if (defect.plan_hash != healthy.plan_hash)
    throw std::invalid_argument("build_signature: sweep plans differ");
  if (defect.grid_h != healthy.grid_h || defect.nx != healthy.nx || defect.ny != healthy.ny)
    throw std::invalid_argument("build_signature: phantom grids differ");

  SignatureImage sig;
  sig.amplitude.resize(defect.rows(), defect.cols());
  sig.phase.resize(defect.rows(), defect.cols());
  for (int r = 0; r < defect.rows(); ++r) {
    for (int c = 0; c < defect.cols(); ++c) {
      const Complex d = defect.values(r, c);
      const Complex h = healthy.values(r, c);
      sig.amplitude(r, c) = std::abs(d) - std::abs(h);
      sig.phase(r, c) = wrap_phase(std::arg(d) - std::arg(h));
    }
  }
  sig.sensor_count = defect.sensor_count;
  sig.actuators = defect.actuators;
  sig.receivers = defect.receivers;
  sig.frequencies = defect.frequencies;
  sig.plan_hash = defect.plan_hash;
  sig.grid_h = defect.grid_h;
  sig.defect_id = defect.config_id;
  sig.baseline_id = healthy.config_id;
  return sig;
}

enum class SignatureChannel { amplitude, phase };

// Grayscale rendering, one pixel per matrix entry: width = frequency count,
// height = channel count. Amplitude maps |value| against norm_max (pass 0 to
// normalize to this image's own maximum); phase maps |wrapped| / pi. An
// all-zero matrix renders all black.
inline io::GrayImage render_image(const SignatureImage& sig, SignatureChannel channel,
                                  double norm_max = 0.0) {
  io::GrayImage img;
  img.width = sig.cols();
  img.height = sig.rows();
  img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 0);
  const Eigen::MatrixXd& m =
      channel == SignatureChannel::amplitude ? sig.amplitude : sig.phase;
  double scale;
  if (channel == SignatureChannel::phase) {
    scale = kPi;
  } else {
    scale = norm_max > 0.0 ? norm_max : m.cwiseAbs().maxCoeff();
    if (scale <= 0.0) return img;  // completely black
  }
  for (int r = 0; r < sig.rows(); ++r) {
    for (int c = 0; c < sig.cols(); ++c) {
      const double v = std::min(std::abs(m(r, c)) / scale, 1.0);
      img.pixels[static_cast<std::size_t>(r) * img.width + c] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  return img;
}

struct SavedSignatureFiles {
  std::filesystem::path meta;
  std::filesystem::path csv;
};

// CSV schema: header line, then one "row,col,amplitude,phase" line per entry,
// row-major. Values use shortest round-trip formatting, so export followed by
// import reproduces the matrices bit-exactly.
inline SavedSignatureFiles export_signature(const SignatureImage& sig,
                                            const std::filesystem::path& dir,
                                            const std::string& basename) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  SavedSignatureFiles files;
  files.csv = dir / (basename + ".csv");
  files.meta = dir / (basename + ".meta");

  std::string csv = "row,col,amplitude,phase\n";
  for (int r = 0; r < sig.rows(); ++r) {
    for (int c = 0; c < sig.cols(); ++c) {
      csv += std::to_string(r);
      csv += ',';
      csv += std::to_string(c);
      csv += ',';
      csv += io::format_double(sig.amplitude(r, c));
      csv += ',';
      csv += io::format_double(sig.phase(r, c));
      csv += '\n';
    }
  }
  io::atomic_write(files.csv, csv);

  io::KeyValues kv;
  kv.set("format", "sonosig-signature-v1");
  kv.set("defect_id", sig.defect_id);
  kv.set("baseline_id", sig.baseline_id);
  kv.set("plan_hash", sig.plan_hash);
  kv.set("grid_h", io::format_double(sig.grid_h));
  kv.set("sensor_count", std::to_string(sig.sensor_count));
  kv.set("actuators", io::join_ints(sig.actuators));
  kv.set("receivers", io::join_ints(sig.receivers));
  kv.set("frequencies_hz", io::join_doubles(sig.frequencies));
  kv.set("rows", std::to_string(sig.rows()));
  kv.set("cols", std::to_string(sig.cols()));
  kv.set("data_file", basename + ".csv");
  io::atomic_write(files.meta, kv.serialize());
  return files;
}

inline SignatureImage import_signature(const std::filesystem::path& meta_path) {
  const io::KeyValues kv = io::KeyValues::parse(io::read_file(meta_path));
  if (kv.require("format") != "sonosig-signature-v1")
    throw std::runtime_error("unsupported signature sidecar: " + meta_path.string());
  SignatureImage sig;
  sig.defect_id = kv.require("defect_id");
  sig.baseline_id = kv.require("baseline_id");
  sig.plan_hash = kv.require("plan_hash");
  sig.grid_h = kv.get_double("grid_h");
  sig.sensor_count = static_cast<int>(kv.get_int("sensor_count"));
  sig.actuators = io::split_ints(kv.require("actuators"));
  sig.receivers = io::split_ints(kv.require("receivers"));
  sig.frequencies = io::split_doubles(kv.require("frequencies_hz"));
  const int rows = static_cast<int>(kv.get_int("rows"));
  const int cols = static_cast<int>(kv.get_int("cols"));
  sig.amplitude.resize(rows, cols);
  sig.phase.resize(rows, cols);

  const std::filesystem::path csv_path = meta_path.parent_path() / kv.require("data_file");
  const std::string data = io::read_file(csv_path);
  std::size_t pos = data.find('\n');
  if (pos == std::string::npos)
    throw std::runtime_error("empty signature csv: " + csv_path.string());
  ++pos;
  long count = 0;
  while (pos < data.size()) {
    std::size_t eol = data.find('\n', pos);
    if (eol == std::string::npos) eol = data.size();
    std::string_view line(data.data() + pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 + 1);
    const std::size_t c3 = line.find(',', c2 + 1);
    if (c1 == std::string_view::npos || c2 == std::string_view::npos ||
        c3 == std::string_view::npos)
      throw std::runtime_error("malformed signature csv line: " + std::string(line));
    const int r = static_cast<int>(io::parse_int(line.substr(0, c1)));
    const int c = static_cast<int>(io::parse_int(line.substr(c1 + 1, c2 - c1 - 1)));
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw std::runtime_error("signature csv index out of range: " + std::string(line));
    sig.amplitude(r, c) = io::parse_double(line.substr(c2 + 1, c3 - c2 - 1));
    sig.phase(r, c) = io::parse_double(line.substr(c3 + 1));
    ++count;
  }
  if (count != static_cast<long>(rows) * cols)
    throw std::runtime_error("signature csv entry count mismatch: " + csv_path.string());
  return sig;
}

}  // namespace sonosig
