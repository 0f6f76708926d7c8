#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sonosig/signature.hpp"

namespace sonosig {

// Detection thresholds. These observables come from visual descriptions with
// no numeric criteria attached, so the defaults were fixed on the default
// desk-scale library and are all configurable.
struct AnalysisParams {
  double band_factor = 2.9;       // row median must exceed this times the global median
  double onset_factor = 3.0;      // column energy must exceed this times the noise floor
  double low_cutoff_hz = 50e3;    // ignore columns below this when detecting bands
  double energy_pivot_hz = 200e3; // low/high spectral split
  double healthy_threshold = 1e-12;  // total-energy floor separating healthy from defected
  double phase_weight = 0.0;      // weight of the phase term in nn_match distances
};

struct FeatureVector {
  std::vector<double> row_energy;   // mean squared amplitude per channel row
  double total_energy = 0.0;        // mean of row_energy (rows have equal length)
  std::vector<int> bands;           // detected band rows, ascending
  std::optional<double> onset_frequency;  // Hz
  double low_band_energy = 0.0;     // mean squared amplitude at freq <= pivot
  double high_band_energy = 0.0;    // and above the pivot
  // band-rule evidence
  std::vector<double> row_median;   // median |amplitude| per row over the analysis window
  double global_median = 0.0;

  // Adjacent band rows fuse into one visible horizontal pattern in the
  // rendered image; this counts those maximal runs.
  int pattern_count() const {
    int runs = 0;
    for (std::size_t k = 0; k < bands.size(); ++k)
      if (k == 0 || bands[k] != bands[k - 1] + 1) ++runs;
    return runs;
  }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Horizontal-band and onset observables of the amplitude signature. All
// thresholds are relative, so the detected band set is invariant under a
// uniform scaling of the matrix.
inline FeatureVector extract_features(const SignatureImage& sig, const AnalysisParams& params = {}) {
  FeatureVector f;
  const Eigen::MatrixXd& a = sig.amplitude;
  const int rows = sig.rows(), cols = sig.cols();
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("extract_features: empty signature");

  f.row_energy.resize(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r)
    f.row_energy[static_cast<std::size_t>(r)] = a.row(r).squaredNorm() / cols;
  f.total_energy = a.squaredNorm() / (static_cast<double>(rows) * cols);

  int low_cols = 0;
  double low_sum = 0.0, high_sum = 0.0;
  for (int c = 0; c < cols; ++c) {
    const double col_sq = a.col(c).squaredNorm();
    if (sig.frequencies[static_cast<std::size_t>(c)] <= params.energy_pivot_hz) {
      low_sum += col_sq;
      ++low_cols;
    } else {
      high_sum += col_sq;
    }
  }
  f.low_band_energy = low_cols > 0 ? low_sum / (static_cast<double>(low_cols) * rows) : 0.0;
  f.high_band_energy =
      cols - low_cols > 0 ? high_sum / (static_cast<double>(cols - low_cols) * rows) : 0.0;

  // Band rule on the analysis window above the low cutoff (whole matrix when
  // the plan has no columns that high).
  std::vector<int> window;
  for (int c = 0; c < cols; ++c)
    if (sig.frequencies[static_cast<std::size_t>(c)] >= params.low_cutoff_hz) window.push_back(c);
  if (window.empty())
    for (int c = 0; c < cols; ++c) window.push_back(c);

  std::vector<double> all;
  all.reserve(window.size() * static_cast<std::size_t>(rows));
  f.row_median.resize(static_cast<std::size_t>(rows));
  std::vector<double> row_vals(window.size());
  for (int r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < window.size(); ++k) {
      row_vals[k] = std::abs(a(r, window[k]));
      all.push_back(row_vals[k]);
    }
    f.row_median[static_cast<std::size_t>(r)] = detail::median_of(row_vals);
  }
  f.global_median = detail::median_of(std::move(all));
  for (int r = 0; r < rows; ++r)
    if (f.row_median[static_cast<std::size_t>(r)] > params.band_factor * f.global_median)
      f.bands.push_back(r);

  // Onset: lowest frequency whose column energy exceeds the noise floor taken
  // from the lowest-decile columns.
  std::vector<double> col_energy(static_cast<std::size_t>(cols));
  for (int c = 0; c < cols; ++c)
    col_energy[static_cast<std::size_t>(c)] = a.col(c).squaredNorm() / rows;
  std::vector<double> sorted = col_energy;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t decile = std::max<std::size_t>(1, sorted.size() / 10);
  double noise = 0.0;
  for (std::size_t k = 0; k < decile; ++k) noise += sorted[k];
  noise /= static_cast<double>(decile);
  for (int c = 0; c < cols; ++c) {
    if (col_energy[static_cast<std::size_t>(c)] > params.onset_factor * noise) {
      f.onset_frequency = sig.frequencies[static_cast<std::size_t>(c)];
      break;
    }
  }
  return f;
}

enum class FixationClass { healthy, crack, loosening };

inline const char* to_string(FixationClass c) {
  switch (c) {
    case FixationClass::healthy: return "healthy";
    case FixationClass::crack: return "crack";
    default: return "loosening";
  }
}

// Rule from the signature-image observations: cracks show horizontal bands,
// loosening disturbs all channels without bands.
inline FixationClass classify(const FeatureVector& f, const AnalysisParams& params = {}) {
  if (f.total_energy < params.healthy_threshold) return FixationClass::healthy;
  if (!f.bands.empty()) return FixationClass::crack;
  return FixationClass::loosening;
}

// Same rule plus a [0,1] confidence from the margin to the decision surface.
inline std::pair<FixationClass, double> classify_with_confidence(const FeatureVector& f,
                                                                 const AnalysisParams& params = {}) {
  const FixationClass cls = classify(f, params);
  double conf = 1.0;
  if (cls == FixationClass::healthy) {
    conf = f.total_energy <= 0.0
               ? 1.0
               : std::clamp(1.0 - 0.5 * f.total_energy / params.healthy_threshold, 0.5, 1.0);
  } else {
    const double threshold = params.band_factor * f.global_median;
    double max_median = 0.0;
    for (double m : f.row_median) max_median = std::max(max_median, m);
    if (threshold <= 0.0) {
      conf = 0.5;
    } else if (cls == FixationClass::crack) {
      conf = std::clamp(max_median / threshold / 2.0, 0.5, 1.0);
    } else {
      conf = std::clamp(1.0 - max_median / threshold / 2.0, 0.5, 1.0);
    }
  }
  return {cls, conf};
}

// Energy-per-size calibration at a fixed defect location, for mapping
// disturbance energy to a size estimate.
struct SeverityCalibration {
  std::vector<std::pair<double, double>> points;  // (size, energy), size ascending

  void validate() const {
    if (points.size() < 2)
      throw std::invalid_argument("SeverityCalibration: need at least two points");
    for (std::size_t i = 1; i < points.size(); ++i) {
      if (!(points[i].first > points[i - 1].first))
        throw std::invalid_argument("SeverityCalibration: sizes must be strictly increasing");
      if (!(points[i].second > points[i - 1].second))
        throw std::invalid_argument("SeverityCalibration: energies must be strictly increasing");
    }
  }
};

struct SeverityEstimate {
  double severity = 0.0;                // total disturbance energy
  std::optional<double> size_estimate;  // same unit as the calibration sizes
  bool extrapolated = false;
};

inline SeverityEstimate estimate_severity(const FeatureVector& f,
                                          const SeverityCalibration* calibration = nullptr) {
  SeverityEstimate est;
  est.severity = f.total_energy;
  if (!calibration) return est;
  calibration->validate();
  const auto& pts = calibration->points;
  const double e = est.severity;
  std::size_t seg = 0;
  if (e < pts.front().second) {
    est.extrapolated = true;
  } else if (e > pts.back().second) {
    est.extrapolated = true;
    seg = pts.size() - 2;
  } else {
    while (seg + 2 < pts.size() && e > pts[seg + 1].second) ++seg;
  }
  const auto& [s0, e0] = pts[seg];
  const auto& [s1, e1] = pts[seg + 1];
  est.size_estimate = s0 + (s1 - s0) * (e - e0) / (e1 - e0);
  return est;
}

struct SensorGeometry {
  int sensor_count = 0;
  std::vector<int> actuators;
  std::vector<int> receivers;

  static SensorGeometry of(const SignatureImage& sig) {
    return SensorGeometry{sig.sensor_count, sig.actuators, sig.receivers};
  }
};

// Defect angle from the detected bands: each band names an actuator-receiver
// pair; the estimate is the energy-weighted circular mean of the pair
// midpoint angles. Antipodal pairs have no defined midpoint and are skipped.
inline std::optional<double> localize(const FeatureVector& f, const SensorGeometry& geo) {
  if (f.bands.empty()) return std::nullopt;
  const int nr = static_cast<int>(geo.receivers.size());
  double sx = 0.0, sy = 0.0;
  for (int row : f.bands) {
    const int a = geo.actuators[static_cast<std::size_t>(row / nr)];
    const int b = geo.receivers[static_cast<std::size_t>(row % nr)];
    const double ta = 2.0 * kPi * a / geo.sensor_count;
    const double tb = 2.0 * kPi * b / geo.sensor_count;
    const double mx = std::cos(ta) + std::cos(tb);
    const double my = std::sin(ta) + std::sin(tb);
    const double norm = std::hypot(mx, my);
    if (norm < 1e-12) continue;
    const double w = f.row_energy[static_cast<std::size_t>(row)];
    sx += w * mx / norm;
    sy += w * my / norm;
  }
  if (std::hypot(sx, sy) < 1e-300) return std::nullopt;
  return std::atan2(sy, sx);
}

struct NnLibraryEntry {
  std::string label;
  int config_index = 0;
  Eigen::MatrixXd amplitude;
  Eigen::MatrixXd phase;
  std::string plan_hash;
};

struct NnMatch {
  std::string label;
  int config_index = 0;
  double distance = 0.0;
  std::size_t entry = 0;
};

// Nearest library signature under the Frobenius distance on amplitude
// matrices (plus an optional phase term). Ties go to the lowest config index.
inline NnMatch nn_match(const SignatureImage& query, const std::vector<NnLibraryEntry>& library,
                        double phase_weight = 0.0) {
  if (library.empty())
    throw std::invalid_argument("nn_match: empty library");
  bool have = false;
  NnMatch best;
  for (std::size_t k = 0; k < library.size(); ++k) {
    const NnLibraryEntry& e = library[k];
    if (!e.plan_hash.empty() && !query.plan_hash.empty() && e.plan_hash != query.plan_hash)
      throw std::invalid_argument("nn_match: library entry with a different sweep plan");
    if (e.amplitude.rows() != query.amplitude.rows() ||
        e.amplitude.cols() != query.amplitude.cols())
      throw std::invalid_argument("nn_match: library entry with a different shape");
    double d2 = (e.amplitude - query.amplitude).squaredNorm();
    if (phase_weight > 0.0) d2 += phase_weight * (e.phase - query.phase).squaredNorm();
    const double d = std::sqrt(d2);
    if (!have || d < best.distance ||
        (d == best.distance && e.config_index < best.config_index)) {
      have = true;
      best = NnMatch{e.label, e.config_index, d, k};
    }
  }
  return best;
}

struct DefectReport {
  FixationClass classification = FixationClass::healthy;
  double confidence = 0.0;
  double severity = 0.0;
  std::optional<double> size_estimate;
  bool size_extrapolated = false;
  std::optional<double> location_estimate;  // radians
  FeatureVector evidence;
  AnalysisParams params;
};

inline DefectReport analyze_signature(const SignatureImage& sig, const AnalysisParams& params = {},
                                      const SeverityCalibration* calibration = nullptr) {
  DefectReport report;
  report.params = params;
  report.evidence = extract_features(sig, params);
  auto [cls, conf] = classify_with_confidence(report.evidence, params);
  report.classification = cls;
  report.confidence = conf;
  const SeverityEstimate sev = estimate_severity(report.evidence, calibration);
  report.severity = sev.severity;
  report.size_estimate = sev.size_estimate;
  report.size_extrapolated = sev.extrapolated;
  if (cls == FixationClass::crack)
    report.location_estimate = localize(report.evidence, SensorGeometry::of(sig));
  return report;
}

inline io::KeyValues report_kv(const DefectReport& r) {
  io::KeyValues kv;
  kv.set("classification", to_string(r.classification));
  kv.set("confidence", io::format_double(r.confidence));
  kv.set("severity", io::format_double(r.severity));
  if (r.size_estimate) {
    kv.set("size_estimate_mm", io::format_double(*r.size_estimate * 1e3));
    kv.set("size_extrapolated", r.size_extrapolated ? "true" : "false");
  }
  if (r.location_estimate)
    kv.set("location_estimate_deg", io::format_double(rad_to_deg(wrap_phase(*r.location_estimate))));
  kv.set("total_energy", io::format_double(r.evidence.total_energy));
  kv.set("band_count", std::to_string(r.evidence.bands.size()));
  kv.set("bands", io::join_ints(r.evidence.bands));
  kv.set("onset_khz", r.evidence.onset_frequency
                          ? io::format_double(*r.evidence.onset_frequency / 1e3)
                          : "none");
  kv.set("low_band_energy", io::format_double(r.evidence.low_band_energy));
  kv.set("high_band_energy", io::format_double(r.evidence.high_band_energy));
  kv.set("band_factor", io::format_double(r.params.band_factor));
  kv.set("onset_factor", io::format_double(r.params.onset_factor));
  kv.set("low_cutoff_khz", io::format_double(r.params.low_cutoff_hz / 1e3));
  kv.set("healthy_threshold", io::format_double(r.params.healthy_threshold));
  return kv;
}

inline std::string report_text(const DefectReport& r, const std::string& title) {
  std::string out;
  out += "Fixation condition report: " + title + "\n";
  out += "  classification: " + std::string(to_string(r.classification)) +
         " (confidence " + io::format_double(r.confidence) + ")\n";
  out += "  severity (disturbance energy): " + io::format_double(r.severity) + "\n";
  if (r.size_estimate)
    out += "  estimated defect size: " + io::format_double(*r.size_estimate * 1e3) + " mm" +
           (r.size_extrapolated ? " (extrapolated)" : "") + "\n";
  if (r.location_estimate)
    out += "  estimated location: " +
           io::format_double(rad_to_deg(wrap_phase(*r.location_estimate))) + " deg\n";
  out += "  horizontal bands: ";
  out += r.evidence.bands.empty() ? "none" : io::join_ints(r.evidence.bands);
  out += "\n";
  out += "  onset frequency: ";
  out += r.evidence.onset_frequency ? io::format_double(*r.evidence.onset_frequency / 1e3) + " kHz"
                                    : std::string("none");
  out += "\n";
  return out;
}

}  // namespace sonosig
