// Command-line front end: batch sweeps, analysis, rendering and run
// verification over a run directory.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "sonosig/runner.hpp"

namespace {

using namespace sonosig;

std::set<int> parse_scenario_filter(const std::string& text) {
  std::set<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    const std::string token = text.substr(pos, end - pos);
    pos = end + 1;
    if (token.empty()) continue;
    const std::size_t dash = token.find('-');
    if (dash == std::string::npos) {
      out.insert(std::stoi(token));
    } else {
      const int lo = std::stoi(token.substr(0, dash));
      const int hi = std::stoi(token.substr(dash + 1));
      for (int k = lo; k <= hi; ++k) out.insert(k);
    }
  }
  return out;
}

RunConfig load_config_or_default(const std::string& config_path) {
  if (config_path.empty()) return default_run_config();
  return load_run_config(config_path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sonosig: ultrasonic implant-fixation screening on a simulated 2D thigh phantom"};
  app.require_subcommand(1);

  std::string config_path, out_dir, scenarios_text, normalization = "per-image", field_spec;
  int jobs = 0;
  int freq_stride = 0;
  double grid_h_mm = 0.0;

  auto add_common = [&](CLI::App* cmd, bool with_config) {
    cmd->add_option("--out", out_dir, "run directory")->required();
    if (with_config)
      cmd->add_option("--config", config_path, "JSON run configuration (defaults when omitted)");
  };

  CLI::App* sweep = app.add_subcommand("sweep", "solve scenarios and write matrices + signatures");
  add_common(sweep, true);
  sweep->add_option("--jobs", jobs, "parallel frequency tasks (0 = all cores)");
  sweep->add_option("--scenarios", scenarios_text, "defect config ids, e.g. 1-4,25 (healthy always runs)");
  sweep->add_option("--freq-stride", freq_stride, "keep every k-th frequency of the plan");
  sweep->add_option("--grid-h", grid_h_mm, "grid spacing override [mm]");
  sweep->callback([&]() {
    RunConfig cfg = load_config_or_default(config_path);
    if (freq_stride > 0) cfg.freq_stride = freq_stride;
    if (grid_h_mm > 0.0) cfg.grid_h = grid_h_mm * 1e-3;
    SweepOptions options;
    options.jobs = jobs;
    if (!scenarios_text.empty()) options.scenario_filter = parse_scenario_filter(scenarios_text);
    options.progress = [](const std::string& msg) { std::printf("%s\n", msg.c_str()); };
    const SweepResult res = run_sweep(cfg, out_dir, options);
    std::printf("sweep done: %d solved, %d skipped, %d failed\n", res.solved, res.skipped,
                res.failed);
    if (res.failed > 0) throw CLI::RuntimeError(2);
  });

  CLI::App* analyze = app.add_subcommand("analyze", "classify signatures and write reports");
  add_common(analyze, false);
  analyze->callback([&]() {
    const AnalyzeSummary summary = run_analyze(out_dir);
    std::printf("%-4s %-28s %-10s %-10s %6s %5s %s\n", "id", "name", "true", "predicted", "bands",
                "nn", "severity");
    for (const AnalyzeRow& r : summary.rows)
      std::printf("%-4d %-28s %-10s %-10s %6d %5s %.3e\n", r.id, r.name.c_str(),
                  r.true_kind.c_str(), r.predicted.c_str(), r.band_count, r.nn_label.c_str(),
                  r.severity);
    std::printf("healthy rule: %d/%d correct\n", summary.healthy_correct, summary.healthy_total);
    std::printf("leave-one-out nn accuracy (crack vs loosening): %.3f\n", summary.loo_accuracy());
  });

  CLI::App* render = app.add_subcommand("render", "write signature images (and field snapshots)");
  add_common(render, false);
  render->add_option("--normalization", normalization, "per-image or global amplitude scale")
      ->check(CLI::IsMember({"per-image", "global"}));
  render->add_option("--field", field_spec, "field snapshot as <config_id>:<freq_khz>:<actuator>");
  render->callback([&]() {
    RenderOptions options;
    options.global_normalization = normalization == "global";
    if (!field_spec.empty()) {
      const std::size_t c1 = field_spec.find(':');
      const std::size_t c2 = field_spec.find(':', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos)
        throw CLI::ValidationError("--field must be <config_id>:<freq_khz>:<actuator>");
      options.field_snapshot = {std::stoi(field_spec.substr(0, c1)),
                                std::stod(field_spec.substr(c1 + 1, c2 - c1 - 1)) * 1e3,
                                std::stoi(field_spec.substr(c2 + 1))};
    }
    const auto produced = run_render(out_dir, options);
    std::printf("rendered %zu image(s) under %s\n", produced.size(),
                (std::filesystem::path(out_dir) / "figures").string().c_str());
  });

  CLI::App* debug = app.add_subcommand("phantom-debug", "rasterize the phantom and emit a PGM");
  std::string debug_out = "phantom.pgm";
  debug->add_option("--config", config_path, "JSON run configuration");
  debug->add_option("--out", debug_out, "output PGM path");
  debug->add_option("--grid-h", grid_h_mm, "grid spacing override [mm]");
  debug->callback([&]() {
    RunConfig cfg = load_config_or_default(config_path);
    if (grid_h_mm > 0.0) cfg.grid_h = grid_h_mm * 1e-3;
    const RasterPhantom raster = build_phantom(cfg.phantom, cfg.grid_h);
    io::write_pgm(debug_out, phantom_debug_image(raster));
    std::vector<int> counts(kRegionCount, 0);
    for (std::uint8_t r : raster.region) ++counts[r];
    std::printf("grid %dx%d, h = %g mm, %d interior cells\n", raster.nx, raster.ny,
                raster.h * 1e3, raster.interior_count());
    for (int r = 0; r < kRegionCount; ++r)
      if (counts[r] > 0)
        std::printf("  %-12s %8d cells\n", to_string(static_cast<Region>(r)), counts[r]);
    for (const auto& s : raster.sensors)
      std::printf("  sensor %d at %5.1f deg, %zu aperture cells\n", s.index,
                  rad_to_deg(s.angle), s.aperture_cells.size());
    std::printf("wrote %s\n", debug_out.c_str());
  });

  CLI::App* verify = app.add_subcommand("verify", "recompute and check all manifest hashes");
  add_common(verify, false);
  verify->callback([&]() {
    const VerifyResult res = verify_run(out_dir);
    for (const auto& p : res.missing) std::printf("MISSING    %s\n", p.c_str());
    for (const auto& p : res.mismatched) std::printf("MISMATCH   %s\n", p.c_str());
    std::printf("verify: %d file(s) checked, %zu missing, %zu mismatched\n", res.checked,
                res.missing.size(), res.mismatched.size());
    if (!res.ok()) throw CLI::RuntimeError(3);
  });

  try {
    CLI11_PARSE(app, argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
