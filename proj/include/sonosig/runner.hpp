#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sonosig/analysis.hpp"
#include "sonosig/config.hpp"
#include "sonosig/matrix_io.hpp"
#include "sonosig/signature.hpp"

namespace sonosig {

namespace fs = std::filesystem;

struct RunPaths {
  fs::path root;
  fs::path manifest() const { return root / "manifest.json"; }
  fs::path config() const { return root / "config.json"; }
  fs::path matrices() const { return root / "matrices"; }
  fs::path signatures() const { return root / "signatures"; }
  fs::path reports() const { return root / "reports"; }
  fs::path figures() const { return root / "figures"; }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string case_basename(const Scenario& s) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d_", s.id);
  return buf + s.name();
}

// Everything needed to reproduce and audit a run: the effective config, the
// scenario list, per-case status/quality, and a content hash for every file
// the run produced.
struct RunManifest {
  std::string created_utc;
  std::string updated_utc;
  ordered_json config;
  std::vector<std::string> scenario_lines;

  struct CaseRecord {
    std::string name;
    std::string status;  // "done" or "failed"
    std::string error;
    std::vector<int> quality;
    std::vector<std::pair<std::string, std::string>> files;  // run-relative path -> hash
  };
  std::map<int, CaseRecord> cases;
  std::vector<std::pair<std::string, std::string>> extra_files;  // analyze/render outputs

  ordered_json to_json() const {
    ordered_json j;
    j["format"] = "sonosig-run-manifest-v1";
    j["created_utc"] = created_utc;
    j["updated_utc"] = updated_utc;
    j["config"] = config;
    j["scenarios"] = scenario_lines;
    ordered_json cases_json;
    for (const auto& [id, rec] : cases) {
      ordered_json c;
      c["name"] = rec.name;
      c["status"] = rec.status;
      if (!rec.error.empty()) c["error"] = rec.error;
      c["quality"] = rec.quality;
      ordered_json files;
      for (const auto& [path, hash] : rec.files) files[path] = hash;
      c["files"] = files;
      cases_json[std::to_string(id)] = c;
    }
    j["cases"] = cases_json;
    ordered_json extra;
    for (const auto& [path, hash] : extra_files) extra[path] = hash;
    j["extra_files"] = extra;
    return j;
  }

  static RunManifest from_json(const ordered_json& j) {
    RunManifest m;
    if (j.value("format", "") != "sonosig-run-manifest-v1")
      throw std::runtime_error("unsupported manifest format");
    m.created_utc = j.value("created_utc", "");
    m.updated_utc = j.value("updated_utc", "");
    m.config = j.at("config");
    for (const auto& line : j.at("scenarios")) m.scenario_lines.push_back(line.get<std::string>());
    if (j.contains("cases")) {
      for (const auto& [key, c] : j.at("cases").items()) {
        CaseRecord rec;
        rec.name = c.value("name", "");
        rec.status = c.value("status", "");
        rec.error = c.value("error", "");
        if (c.contains("quality"))
          for (const auto& q : c["quality"]) rec.quality.push_back(q.get<int>());
        if (c.contains("files"))
          for (const auto& [path, hash] : c["files"].items())
            rec.files.emplace_back(path, hash.get<std::string>());
        m.cases[std::stoi(key)] = std::move(rec);
      }
    }
    if (j.contains("extra_files"))
      for (const auto& [path, hash] : j["extra_files"].items())
        m.extra_files.emplace_back(path, hash.get<std::string>());
    return m;
  }

  void save(const RunPaths& paths) {
    updated_utc = utc_timestamp();
    io::atomic_write(paths.manifest(), to_json().dump(2) + "\n");
  }

  static RunManifest load(const RunPaths& paths) {
    return from_json(ordered_json::parse(io::read_file(paths.manifest())));
  }
};

struct SweepOptions {
  int jobs = 1;
  std::optional<std::set<int>> scenario_filter;  // defect ids; healthy always runs
  std::function<void(const std::string&)> progress;
};

struct SweepResult {
  int solved = 0;
  int skipped = 0;
  int failed = 0;
  RunPaths paths;
};

namespace detail {

inline bool case_outputs_match(const RunManifest::CaseRecord& rec, const fs::path& root) {
  if (rec.status != "done" || rec.files.empty()) return false;
  for (const auto& [rel, hash] : rec.files) {
    const fs::path p = root / rel;
    if (!fs::exists(p)) return false;
    if (io::hash_file(p) != hash) return false;
  }
  return true;
}

}  // namespace detail

// Solve the healthy baseline plus the selected scenarios, persist one transfer
// matrix per config and a signature per defect, and keep the manifest current
// after every case. Completed cases found on disk are skipped, so an
// interrupted sweep resumes where it stopped and a finished one is a no-op.
inline SweepResult run_sweep(const RunConfig& cfg, const fs::path& out_dir,
                             const SweepOptions& options = {}) {
  RunPaths paths{out_dir};
  fs::create_directories(paths.root);

  const ordered_json config_json = to_json(cfg);
  const std::vector<Scenario> grid = cfg.grid();
  const SweepPlan plan = cfg.plan();
  plan.validate(cfg.phantom.sensor_count);

  RunManifest manifest;
  if (fs::exists(paths.manifest())) {
    manifest = RunManifest::load(paths);
    if (manifest.config != config_json)
      throw std::runtime_error("run directory " + out_dir.string() +
                               " was created with a different configuration");
  } else {
    manifest.created_utc = utc_timestamp();
    manifest.config = config_json;
    for (const Scenario& s : grid) manifest.scenario_lines.push_back(s.line());
  }
  io::atomic_write(paths.config(), config_json.dump(2) + "\n");

  std::vector<Scenario> selected;
  for (const Scenario& s : grid) {
    if (s.is_healthy()) continue;
    if (!options.scenario_filter || options.scenario_filter->count(s.id)) selected.push_back(s);
  }
  // A run with no defect cases still emits the healthy self-signature so it
  // produces a usable (all-black) artifact.
  const bool healthy_self_signature = selected.empty();

  auto progress = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  SweepResult result;
  result.paths = paths;

  const RasterPhantom healthy_phantom = build_phantom(cfg.phantom, cfg.grid_h);

  auto solve_case = [&](const Scenario& s, const RasterPhantom& phantom) -> TransferMatrix {
    TransferProvenance prov{case_basename(s), s.line()};
    return transfer_matrix(phantom, plan, cfg.solver, options.jobs, prov);
  };

  auto record_files = [&](RunManifest::CaseRecord& rec, const std::vector<fs::path>& files) {
    for (const fs::path& p : files) {
      const std::string rel = fs::relative(p, paths.root).generic_string();
      rec.files.emplace_back(rel, io::hash_file(p));
    }
  };

  // Healthy baseline first: every signature needs it.
  TransferMatrix healthy_tm;
  {
    const Scenario& s = grid.front();
    const std::string base = case_basename(s);
    auto it = manifest.cases.find(s.id);
    if (it != manifest.cases.end() && detail::case_outputs_match(it->second, paths.root)) {
      healthy_tm = load_transfer_matrix(paths.matrices() / (base + ".meta"));
      ++result.skipped;
      progress("skip " + base);
    } else {
      progress("solve " + base);
      healthy_tm = solve_case(s, healthy_phantom);
      RunManifest::CaseRecord rec;
      rec.name = s.name();
      rec.status = "done";
      rec.quality = healthy_tm.quality;
      const SavedMatrixFiles files =
          save_transfer_matrix(healthy_tm, paths.matrices(), base, cfg.matrix_format);
      std::vector<fs::path> produced{files.meta, files.data};
      if (healthy_self_signature) {
        const SignatureImage sig = build_signature(healthy_tm, healthy_tm);
        const SavedSignatureFiles sf = export_signature(sig, paths.signatures(), base);
        produced.push_back(sf.meta);
        produced.push_back(sf.csv);
      }
      record_files(rec, produced);
      manifest.cases[s.id] = std::move(rec);
      manifest.save(paths);
      ++result.solved;
    }
  }

  for (const Scenario& s : selected) {
    const std::string base = case_basename(s);
    auto it = manifest.cases.find(s.id);
    if (it != manifest.cases.end() && detail::case_outputs_match(it->second, paths.root)) {
      ++result.skipped;
      progress("skip " + base);
      continue;
    }
    progress("solve " + base);
    RunManifest::CaseRecord rec;
    rec.name = s.name();
    try {
      const RasterPhantom phantom = apply_defect(healthy_phantom, *s.defect);
      const TransferMatrix tm = solve_case(s, phantom);
      rec.status = "done";
      rec.quality = tm.quality;
      const SavedMatrixFiles files = save_transfer_matrix(tm, paths.matrices(), base, cfg.matrix_format);
      const SignatureImage sig = build_signature(tm, healthy_tm);
      const SavedSignatureFiles sf = export_signature(sig, paths.signatures(), base);
      record_files(rec, {files.meta, files.data, sf.meta, sf.csv});
      ++result.solved;
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.error = e.what();
      ++result.failed;
    }
    manifest.cases[s.id] = std::move(rec);
    manifest.save(paths);
  }
  return result;
}

struct AnalyzeRow {
  int id = 0;
  std::string name;
  std::string true_kind;
  std::string predicted;
  double confidence = 0.0;
  double severity = 0.0;
  std::optional<double> size_estimate_m;
  std::optional<double> onset_hz;
  int band_count = 0;
  std::optional<double> true_angle;  // radians; cracks and loosening
  std::optional<double> estimated_angle;
  std::optional<double> angle_error;  // radians, |wrapped|
  std::string nn_label;
  double nn_distance = 0.0;
};

struct AnalyzeSummary {
  std::vector<AnalyzeRow> rows;
  int healthy_total = 0;
  int healthy_correct = 0;
  int loo_crack_correct = 0, loo_crack_total = 0;
  int loo_loosening_correct = 0, loo_loosening_total = 0;
  int rule_crack_correct = 0, rule_loosening_correct = 0;
  double loo_accuracy() const {
    const int total = loo_crack_total + loo_loosening_total;
    return total == 0 ? 0.0
                      : static_cast<double>(loo_crack_correct + loo_loosening_correct) / total;
  }
};

// Per-signature defect reports plus the run-level summary table, confusion
// counts and leave-one-out nearest-neighbor accuracy.
inline AnalyzeSummary run_analyze(const fs::path& run_dir) {
  RunPaths paths{run_dir};
  RunManifest manifest = RunManifest::load(paths);
  const RunConfig cfg = run_config_from_json(manifest.config);
  const std::vector<Scenario> grid = cfg.grid();

  struct Loaded {
    Scenario scenario;
    SignatureImage sig;
    FeatureVector features;
  };
  std::vector<Loaded> defects;
  AnalyzeSummary summary;

  for (const Scenario& s : grid) {
    auto it = manifest.cases.find(s.id);
    if (it == manifest.cases.end() || it->second.status != "done") continue;
    if (s.is_healthy()) continue;
    const fs::path meta = paths.signatures() / (case_basename(s) + ".meta");
    if (!fs::exists(meta))
      throw std::runtime_error("missing signature for config " + std::to_string(s.id) + ": " +
                               meta.string());
    Loaded l{s, import_signature(meta), {}};
    l.features = extract_features(l.sig, cfg.analysis);
    defects.push_back(std::move(l));
  }

  // The healthy baseline classifies against its own (exactly zero) signature.
  {
    auto it = manifest.cases.find(0);
    if (it != manifest.cases.end() && it->second.status == "done") {
      const TransferMatrix healthy_tm =
          load_transfer_matrix(paths.matrices() / (case_basename(grid.front()) + ".meta"));
      const SignatureImage self = build_signature(healthy_tm, healthy_tm);
      const DefectReport report = analyze_signature(self, cfg.analysis);
      ++summary.healthy_total;
      if (report.classification == FixationClass::healthy) ++summary.healthy_correct;
      io::KeyValues kv = report_kv(report);
      kv.items.insert(kv.items.begin(), {"config_id", "0"});
      kv.items.insert(kv.items.begin() + 1, {"true_kind", "healthy"});
      io::atomic_write(paths.reports() / "000_healthy.kv", kv.serialize());
      io::atomic_write(paths.reports() / "000_healthy.txt", report_text(report, "000_healthy"));
    }
  }

  // Leave-one-out severity calibration per crack position.
  auto calibration_for = [&](const Loaded& query) -> std::optional<SeverityCalibration> {
    if (query.scenario.defect->kind != DefectKind::crack) return std::nullopt;
    SeverityCalibration cal;
    for (const Loaded& l : defects) {
      if (l.scenario.id == query.scenario.id) continue;
      const DefectSpec& d = *l.scenario.defect;
      if (d.kind != DefectKind::crack || d.angle != query.scenario.defect->angle) continue;
      cal.points.emplace_back(d.diameter, l.features.total_energy);
    }
    std::sort(cal.points.begin(), cal.points.end());
    if (cal.points.size() < 2) return std::nullopt;
    for (std::size_t i = 1; i < cal.points.size(); ++i)
      if (!(cal.points[i].second > cal.points[i - 1].second)) return std::nullopt;
    return cal;
  };

  std::vector<NnLibraryEntry> library;
  for (const Loaded& l : defects)
    library.push_back(NnLibraryEntry{std::string(to_string(l.scenario.defect->kind)),
                                     l.scenario.id, l.sig.amplitude, l.sig.phase, l.sig.plan_hash});

  for (std::size_t q = 0; q < defects.size(); ++q) {
    const Loaded& l = defects[q];
    const std::optional<SeverityCalibration> cal = calibration_for(l);
    const DefectReport report = analyze_signature(l.sig, cfg.analysis, cal ? &*cal : nullptr);

    std::vector<NnLibraryEntry> loo;
    for (std::size_t k = 0; k < library.size(); ++k)
      if (k != q) loo.push_back(library[k]);
    const NnMatch match = nn_match(l.sig, loo, cfg.analysis.phase_weight);

    AnalyzeRow row;
    row.id = l.scenario.id;
    row.name = l.scenario.name();
    row.true_kind = to_string(l.scenario.defect->kind);
    row.predicted = to_string(report.classification);
    row.confidence = report.confidence;
    row.severity = report.severity;
    row.size_estimate_m = report.size_estimate;
    row.onset_hz = report.evidence.onset_frequency;
    row.band_count = static_cast<int>(report.evidence.bands.size());
    row.true_angle = l.scenario.defect->angle;
    row.estimated_angle = report.location_estimate;
    if (row.estimated_angle)
      row.angle_error = std::abs(wrap_phase(*row.estimated_angle - *row.true_angle));
    row.nn_label = match.label;
    row.nn_distance = match.distance;
    summary.rows.push_back(row);

    const bool is_crack = l.scenario.defect->kind == DefectKind::crack;
    if (is_crack) {
      ++summary.loo_crack_total;
      if (match.label == "crack") ++summary.loo_crack_correct;
      if (report.classification == FixationClass::crack) ++summary.rule_crack_correct;
    } else {
      ++summary.loo_loosening_total;
      if (match.label == "loosening") ++summary.loo_loosening_correct;
      if (report.classification == FixationClass::loosening) ++summary.rule_loosening_correct;
    }

    const std::string base = case_basename(l.scenario);
    io::KeyValues kv = report_kv(report);
    kv.items.insert(kv.items.begin(), {"config_id", std::to_string(l.scenario.id)});
    kv.items.insert(kv.items.begin() + 1, {"true_kind", row.true_kind});
    kv.items.insert(kv.items.begin() + 2, {"scenario", l.scenario.line()});
    kv.set("nn_label", match.label);
    kv.set("nn_distance", io::format_double(match.distance));
    io::atomic_write(paths.reports() / (base + ".kv"), kv.serialize());
    io::atomic_write(paths.reports() / (base + ".txt"), report_text(report, base));
  }

  std::string csv =
      "config_id,name,true_kind,predicted,confidence,severity,onset_khz,band_count,"
      "true_angle_deg,estimated_angle_deg,angle_error_deg,size_estimate_mm,nn_label,nn_distance\n";
  for (const AnalyzeRow& r : summary.rows) {
    csv += std::to_string(r.id) + "," + r.name + "," + r.true_kind + "," + r.predicted + ",";
    csv += io::format_double(r.confidence) + "," + io::format_double(r.severity) + ",";
    csv += (r.onset_hz ? io::format_double(*r.onset_hz / 1e3) : "none") + ",";
    csv += std::to_string(r.band_count) + ",";
    csv += io::format_double(rad_to_deg(wrap_phase(*r.true_angle))) + ",";
    csv += (r.estimated_angle ? io::format_double(rad_to_deg(wrap_phase(*r.estimated_angle))) : "none");
    csv += ",";
    csv += (r.angle_error ? io::format_double(rad_to_deg(*r.angle_error)) : "none");
    csv += ",";
    csv += (r.size_estimate_m ? io::format_double(*r.size_estimate_m * 1e3) : "none");
    csv += "," + r.nn_label + "," + io::format_double(r.nn_distance) + "\n";
  }
  io::atomic_write(paths.reports() / "summary.csv", csv);

  io::KeyValues acc;
  acc.set("healthy_total", std::to_string(summary.healthy_total));
  acc.set("healthy_correct", std::to_string(summary.healthy_correct));
  acc.set("loo_crack_correct", std::to_string(summary.loo_crack_correct));
  acc.set("loo_crack_total", std::to_string(summary.loo_crack_total));
  acc.set("loo_loosening_correct", std::to_string(summary.loo_loosening_correct));
  acc.set("loo_loosening_total", std::to_string(summary.loo_loosening_total));
  acc.set("loo_accuracy", io::format_double(summary.loo_accuracy()));
  acc.set("rule_crack_correct", std::to_string(summary.rule_crack_correct));
  acc.set("rule_loosening_correct", std::to_string(summary.rule_loosening_correct));
  io::atomic_write(paths.reports() / "accuracy.kv", acc.serialize());

  std::vector<fs::path> outputs{paths.reports() / "summary.csv", paths.reports() / "accuracy.kv"};
  manifest.extra_files.clear();
  for (const auto& entry : fs::recursive_directory_iterator(paths.reports()))
    if (entry.is_regular_file()) outputs.push_back(entry.path());
  std::sort(outputs.begin(), outputs.end());
  outputs.erase(std::unique(outputs.begin(), outputs.end()), outputs.end());
  for (const fs::path& p : outputs)
    manifest.extra_files.emplace_back(fs::relative(p, paths.root).generic_string(),
                                      io::hash_file(p));
  manifest.save(paths);
  return summary;
}

struct RenderOptions {
  bool global_normalization = false;
  // optional field snapshot: scenario id, frequency, actuator
  std::optional<std::tuple<int, double, int>> field_snapshot;
  int jobs = 1;
};

// Amplitude and phase PGM per signature, plus optional field snapshots.
inline std::vector<fs::path> run_render(const fs::path& run_dir, const RenderOptions& options = {}) {
  RunPaths paths{run_dir};
  RunManifest manifest = RunManifest::load(paths);
  const RunConfig cfg = run_config_from_json(manifest.config);
  const std::vector<Scenario> grid = cfg.grid();

  std::vector<std::pair<Scenario, SignatureImage>> sigs;
  for (const Scenario& s : grid) {
    const fs::path meta = paths.signatures() / (case_basename(s) + ".meta");
    auto it = manifest.cases.find(s.id);
    if (it == manifest.cases.end() || it->second.status != "done") continue;
    if (!fs::exists(meta)) continue;
    sigs.emplace_back(s, import_signature(meta));
  }

  double global_max = 0.0;
  if (options.global_normalization)
    for (const auto& [s, sig] : sigs)
      global_max = std::max(global_max, sig.amplitude.cwiseAbs().maxCoeff());

  std::vector<fs::path> produced;
  for (const auto& [s, sig] : sigs) {
    const std::string base = case_basename(s);
    const fs::path amp_path = paths.figures() / (base + "_amp.pgm");
    const fs::path phase_path = paths.figures() / (base + "_phase.pgm");
    io::write_pgm(amp_path, render_image(sig, SignatureChannel::amplitude,
                                         options.global_normalization ? global_max : 0.0));
    io::write_pgm(phase_path, render_image(sig, SignatureChannel::phase));
    produced.push_back(amp_path);
    produced.push_back(phase_path);
  }

  if (options.field_snapshot) {
    const auto& [id, freq, actuator] = *options.field_snapshot;
    const Scenario* scenario = nullptr;
    for (const Scenario& s : grid)
      if (s.id == id) scenario = &s;
    if (!scenario)
      throw std::invalid_argument("field snapshot: unknown scenario id " + std::to_string(id));
    RasterPhantom phantom = build_phantom(cfg.phantom, cfg.grid_h);
    if (scenario->defect) phantom = apply_defect(phantom, *scenario->defect);
    const HelmholtzSystem sys = assemble_system(phantom, 2.0 * kPi * freq, actuator, cfg.solver);
    const FieldSolution field = solve_field(sys, cfg.solver);
    io::GrayImage img;
    img.width = phantom.nx;
    img.height = phantom.ny;
    img.pixels.assign(static_cast<std::size_t>(phantom.nx) * phantom.ny, 0);
    double vmax = 0.0;
    for (const Complex& v : field.values) vmax = std::max(vmax, std::abs(v));
    if (vmax > 0.0) {
      for (int j = 0; j < phantom.ny; ++j)
        for (int i = 0; i < phantom.nx; ++i) {
          const double v = std::abs(field.values[static_cast<std::size_t>(phantom.cell_index(i, j))]);
          img.pixels[static_cast<std::size_t>(phantom.ny - 1 - j) * phantom.nx + i] =
              static_cast<std::uint8_t>(std::lround(std::min(v / vmax, 1.0) * 255.0));
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "field_%03d_%gkHz_s%d.pgm", id, freq / 1e3, actuator);
    const fs::path p = paths.figures() / buf;
    io::write_pgm(p, img);
    produced.push_back(p);
  }

  for (const fs::path& p : produced) {
    const std::string rel = fs::relative(p, paths.root).generic_string();
    bool found = false;
    for (auto& [path, hash] : manifest.extra_files) {
      if (path == rel) {
        hash = io::hash_file(p);
        found = true;
        break;
      }
    }
    if (!found) manifest.extra_files.emplace_back(rel, io::hash_file(p));
  }
  manifest.save(paths);
  return produced;
}

struct VerifyResult {
  std::vector<std::string> missing;
  std::vector<std::string> mismatched;
  int checked = 0;
  bool ok() const { return missing.empty() && mismatched.empty(); }
};

// Recompute every hash recorded in the manifest and compare.
inline VerifyResult verify_run(const fs::path& run_dir) {
  RunPaths paths{run_dir};
  const RunManifest manifest = RunManifest::load(paths);
  VerifyResult result;
  auto check = [&](const std::string& rel, const std::string& hash) {
    const fs::path p = paths.root / rel;
    ++result.checked;
    if (!fs::exists(p)) {
      result.missing.push_back(rel);
      return;
    }
    if (io::hash_file(p) != hash) result.mismatched.push_back(rel);
  };
  for (const auto& [id, rec] : manifest.cases)
    for (const auto& [rel, hash] : rec.files) check(rel, hash);
  for (const auto& [rel, hash] : manifest.extra_files) check(rel, hash);
  return result;
}

}  // namespace sonosig
