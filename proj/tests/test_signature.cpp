#include <catch2/catch.hpp>

#include <filesystem>
#include <random>

#include "sonosig/matrix_io.hpp"
#include "sonosig/signature.hpp"

using namespace sonosig;
namespace fs = std::filesystem;

namespace {

TransferMatrix synthetic_matrix(int sensors, int freqs, std::uint32_t seed,
                                const std::string& id) {
  TransferMatrix tm;
  tm.sensor_count = sensors;
  for (int s = 0; s < sensors; ++s) {
    tm.actuators.push_back(s);
    tm.receivers.push_back(s);
  }
  for (int f = 0; f < freqs; ++f) tm.frequencies.push_back(1e3 * (f + 1));
  tm.values.resize(sensors * sensors, freqs);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int r = 0; r < tm.rows(); ++r)
    for (int c = 0; c < tm.cols(); ++c) tm.values(r, c) = Complex(dist(rng), dist(rng));
  tm.quality.assign(static_cast<std::size_t>(freqs), 0);
  tm.config_id = id;
  tm.config_line = "0 synthetic";
  tm.plan_hash = "feedc0de00000000";
  tm.grid_h = 1e-3;
  tm.nx = tm.ny = 10;
  return tm;
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "sonosig_signature_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("signature of a matrix against itself is exactly zero") {
  const TransferMatrix tm = synthetic_matrix(4, 12, 77, "healthy");
  const SignatureImage sig = build_signature(tm, tm);
  REQUIRE(sig.amplitude.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(sig.phase.cwiseAbs().maxCoeff() == 0.0);
  // a perfect fixation renders completely black
  const io::GrayImage img = render_image(sig, SignatureChannel::amplitude);
  for (std::uint8_t p : img.pixels) REQUIRE(p == 0);
}

TEST_CASE("phase differences wrap into (-pi, pi]") {
  REQUIRE(wrap_phase(6.0) == Approx(6.0 - 2.0 * kPi));  // ~ -0.2832
  REQUIRE(wrap_phase(0.0) == 0.0);
  REQUIRE(wrap_phase(kPi) == Approx(kPi));
  REQUIRE(wrap_phase(-kPi) == Approx(kPi));
  REQUIRE(wrap_phase(2.0 * kPi) == Approx(0.0).margin(1e-15));

  TransferMatrix healthy = synthetic_matrix(2, 1, 1, "h");
  TransferMatrix defect = healthy;
  healthy.values(0, 0) = std::polar(1.0, -3.0);
  defect.values(0, 0) = std::polar(1.0, 3.0);
  const SignatureImage sig = build_signature(defect, healthy);
  REQUIRE(sig.phase(0, 0) == Approx(6.0 - 2.0 * kPi).epsilon(1e-12));
}

TEST_CASE("mismatched inputs are rejected") {
  const TransferMatrix a = synthetic_matrix(4, 12, 1, "a");
  TransferMatrix b = synthetic_matrix(4, 10, 2, "b");
  REQUIRE_THROWS_AS(build_signature(a, b), std::invalid_argument);

  b = synthetic_matrix(4, 12, 3, "b");
  b.plan_hash = "0000000000000000";
  REQUIRE_THROWS_AS(build_signature(a, b), std::invalid_argument);

  b = synthetic_matrix(4, 12, 4, "b");
  b.grid_h = 2e-3;
  REQUIRE_THROWS_AS(build_signature(a, b), std::invalid_argument);
}

TEST_CASE("amplitude signature is invariant under a global phase rotation") {
  const TransferMatrix healthy = synthetic_matrix(3, 8, 5, "h");
  const TransferMatrix defect = synthetic_matrix(3, 8, 6, "d");
  const SignatureImage base = build_signature(defect, healthy);

  TransferMatrix h2 = healthy, d2 = defect;
  const Complex rot = std::polar(1.0, 1.234);
  h2.values *= rot;
  d2.values *= rot;
  const SignatureImage rotated = build_signature(d2, h2);
  REQUIRE((rotated.amplitude - base.amplitude).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("phase signature is invariant under a common complex scaling") {
  const TransferMatrix healthy = synthetic_matrix(3, 8, 7, "h");
  const TransferMatrix defect = synthetic_matrix(3, 8, 8, "d");
  const SignatureImage base = build_signature(defect, healthy);

  TransferMatrix h2 = healthy, d2 = defect;
  const Complex scale = std::polar(3.7, -0.81);
  h2.values *= scale;
  d2.values *= scale;
  const SignatureImage scaled = build_signature(d2, h2);
  double worst = 0.0;
  for (int r = 0; r < base.rows(); ++r)
    for (int c = 0; c < base.cols(); ++c)
      worst = std::max(worst,
                       std::abs(wrap_phase(scaled.phase(r, c) - base.phase(r, c))));
  REQUIRE(worst < 1e-12);
}

TEST_CASE("rendering is monotone and handles normalization") {
  TransferMatrix healthy = synthetic_matrix(2, 3, 9, "h");
  TransferMatrix defect = healthy;
  healthy.values.setConstant(Complex(1.0, 0.0));
  defect.values.setConstant(Complex(1.0, 0.0));
  defect.values(1, 2) = Complex(3.0, 0.0);  // amplitude difference 2 at one entry
  defect.values(2, 1) = Complex(2.0, 0.0);  // amplitude difference 1
  const SignatureImage sig = build_signature(defect, healthy);

  const io::GrayImage img = render_image(sig, SignatureChannel::amplitude);
  REQUIRE(img.width == sig.cols());
  REQUIRE(img.height == sig.rows());
  REQUIRE(static_cast<int>(img.pixels[1 * img.width + 2]) == 255);  // normalization max
  REQUIRE(static_cast<int>(img.pixels[2 * img.width + 1]) == 128);  // half as bright (rounded)
  REQUIRE(img.pixels[0] == 0);

  // larger |entry| never renders darker under a fixed normalization
  const io::GrayImage fixed = render_image(sig, SignatureChannel::amplitude, 4.0);
  REQUIRE(fixed.pixels[1 * img.width + 2] > fixed.pixels[2 * img.width + 1]);
  REQUIRE(static_cast<int>(fixed.pixels[1 * img.width + 2])== 128);

  const io::GrayImage phase_img = render_image(sig, SignatureChannel::phase);
  REQUIRE(phase_img.pixels.size() == img.pixels.size());
}

TEST_CASE("default-shaped signature renders 300x64") {
  const TransferMatrix healthy = synthetic_matrix(8, 300, 10, "h");
  const TransferMatrix defect = synthetic_matrix(8, 300, 11, "d");
  const SignatureImage sig = build_signature(defect, healthy);
  const io::GrayImage img = render_image(sig, SignatureChannel::amplitude);
  REQUIRE(img.width == 300);
  REQUIRE(img.height == 64);
}

TEST_CASE("signature export/import round-trips bit-exactly") {
  const TransferMatrix healthy = synthetic_matrix(4, 20, 12, "healthy");
  const TransferMatrix defect = synthetic_matrix(4, 20, 13, "defect");
  const SignatureImage sig = build_signature(defect, healthy);

  const fs::path dir = temp_dir();
  const SavedSignatureFiles files = export_signature(sig, dir, "roundtrip");
  const SignatureImage back = import_signature(files.meta);

  REQUIRE(back.amplitude == sig.amplitude);  // bitwise
  REQUIRE(back.phase == sig.phase);
  REQUIRE(back.frequencies == sig.frequencies);
  REQUIRE(back.plan_hash == sig.plan_hash);
  REQUIRE(back.defect_id == "defect");
  REQUIRE(back.baseline_id == "healthy");
  REQUIRE(back.sensor_count == 4);
}

TEST_CASE("zero signature exports all-zero value columns") {
  const TransferMatrix tm = synthetic_matrix(2, 4, 14, "h");
  const SignatureImage sig = build_signature(tm, tm);
  const fs::path dir = temp_dir();
  const SavedSignatureFiles files = export_signature(sig, dir, "zeros");
  const std::string csv = io::read_file(files.csv);
  std::size_t pos = csv.find('\n') + 1;
  while (pos < csv.size()) {
    std::size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    const std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    REQUIRE(line.substr(line.size() - 4) == ",0,0");
  }
  const io::KeyValues meta = io::KeyValues::parse(io::read_file(files.meta));
  REQUIRE(meta.get_int("rows") == sig.rows());
  REQUIRE(meta.get_int("cols") == sig.cols());
}

#ifdef SONOSIG_DOCS
TEST_CASE("golden sample file parses and re-exports byte-identically") {
  const fs::path docs(SONOSIG_DOCS);
  const SignatureImage sig = import_signature(docs / "signature_sample.meta");
  REQUIRE(sig.rows() == 4);
  REQUIRE(sig.cols() == 3);
  REQUIRE(sig.sensor_count == 2);
  REQUIRE(sig.defect_id == "001_crack_a90_d1mm");
  REQUIRE(sig.amplitude(0, 0) == 0.0);
  REQUIRE(sig.amplitude(2, 1) == 0.0002235844415412469);
  REQUIRE(sig.phase(0, 1) == 0.0660196174786769);

  const fs::path dir = temp_dir();
  const SavedSignatureFiles files = export_signature(sig, dir, "signature_sample");
  REQUIRE(io::read_file(files.csv) == io::read_file(docs / "signature_sample.csv"));
  REQUIRE(io::read_file(files.meta) == io::read_file(docs / "signature_sample.meta"));
}
#endif

TEST_CASE("transfer matrix save/load round-trips in both formats") {
  const TransferMatrix tm = synthetic_matrix(4, 16, 15, "io_check");
  const fs::path dir = temp_dir();

  for (MatrixFormat format : {MatrixFormat::binary, MatrixFormat::csv}) {
    const SavedMatrixFiles files =
        save_transfer_matrix(tm, dir, std::string("fmt_") + to_string(format), format);
    const TransferMatrix back = load_transfer_matrix(files.meta);
    REQUIRE(back.values == tm.values);  // bitwise both ways
    REQUIRE(back.frequencies == tm.frequencies);
    REQUIRE(back.actuators == tm.actuators);
    REQUIRE(back.receivers == tm.receivers);
    REQUIRE(back.quality == tm.quality);
    REQUIRE(back.config_id == tm.config_id);
    REQUIRE(back.plan_hash == tm.plan_hash);
    REQUIRE(back.grid_h == tm.grid_h);
    REQUIRE(back.sensor_count == tm.sensor_count);
  }
}
