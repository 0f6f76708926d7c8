#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "sonosig/analysis.hpp"
#include "sonosig/matrix_io.hpp"
#include "sonosig/phantom.hpp"
#include "sonosig/scenario.hpp"
#include "sonosig/solver.hpp"

namespace sonosig {

using ordered_json = nlohmann::ordered_json;

// Everything a run depends on, pinned in one file. Lengths are millimetres
// and angles degrees on the JSON surface; SI internally.
struct RunConfig {
  PhantomSpec phantom = default_phantom_spec();
  double grid_h = 0.5e-3;
  double freq_start_hz = 1e3;
  double freq_stop_hz = 300e3;
  double freq_step_hz = 1e3;
  int freq_stride = 1;
  SolverSettings solver;
  AnalysisParams analysis;
  ScenarioGridParams scenarios;
  MatrixFormat matrix_format = MatrixFormat::binary;

  SweepPlan plan() const {
    SweepPlan p;
    const long n = std::lround((freq_stop_hz - freq_start_hz) / freq_step_hz) + 1;
    for (long k = 0; k < n; ++k) p.frequencies.push_back(freq_start_hz + k * freq_step_hz);
    for (int s = 0; s < phantom.sensor_count; ++s) {
      p.actuators.push_back(s);
      p.receivers.push_back(s);
    }
    return strided_plan(std::move(p), freq_stride);
  }

  std::vector<Scenario> grid() const { return scenario_grid(scenarios); }
};

inline RunConfig default_run_config() { return RunConfig{}; }

namespace detail {

inline ordered_json material_to_json(const Material& m, bool by_speed) {
  ordered_json j;
  j["rho"] = m.rho;
  if (by_speed) {
    j["speed"] = m.pwave_speed;
  } else {
    j["youngs_modulus"] = m.youngs_modulus;
    j["poisson"] = m.poisson;
  }
  return j;
}

inline Material material_from_json(const std::string& name, const ordered_json& j,
                                   const Material& fallback) {
  if (!j.is_object()) return fallback;
  const double rho = j.value("rho", fallback.rho);
  if (j.contains("speed"))
    return Material::from_speed(name, rho, j["speed"].get<double>());
  return Material::from_elastic(name, rho, j.value("youngs_modulus", fallback.youngs_modulus),
                                j.value("poisson", fallback.poisson));
}

inline std::vector<double> deg_list_to_rad(const ordered_json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(deg_to_rad(v.get<double>()));
  return out;
}

inline std::vector<double> mm_list_to_m(const ordered_json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.get<double>() * 1e-3);
  return out;
}

}  // namespace detail

inline ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  ordered_json& ph = j["phantom"];
  ph["outer_radius_mm"] = cfg.phantom.outer_radius * 1e3;
  ph["skin_thickness_mm"] = cfg.phantom.skin_thickness * 1e3;
  ph["fat_thickness_mm"] = cfg.phantom.fat_thickness * 1e3;
  ph["bone_outer_radius_mm"] = cfg.phantom.bone_outer_radius * 1e3;
  ph["bone_thickness_mm"] = cfg.phantom.bone_thickness * 1e3;
  ph["implant_radius_mm"] = cfg.phantom.implant_radius * 1e3;
  ph["sensor_count"] = cfg.phantom.sensor_count;
  ph["sensor_aperture_deg"] = rad_to_deg(cfg.phantom.sensor_aperture);
  ordered_json& mats = ph["materials"];
  static const char* kByName[] = {"skin", "fat", "muscle", "compact_bone", "marrow", "implant"};
  for (const char* name : kByName) {
    Region reg = Region::exterior;
    for (int r = 1; r < kRegionCount; ++r)
      if (std::string(to_string(static_cast<Region>(r))) == name) reg = static_cast<Region>(r);
    mats[name] = detail::material_to_json(cfg.phantom.materials[static_cast<std::size_t>(reg)], false);
  }
  mats["water"] =
      detail::material_to_json(cfg.phantom.materials[static_cast<std::size_t>(Region::water)], true);

  j["grid"]["h_mm"] = cfg.grid_h * 1e3;
  ordered_json& plan = j["plan"];
  plan["freq_start_khz"] = cfg.freq_start_hz / 1e3;
  plan["freq_stop_khz"] = cfg.freq_stop_hz / 1e3;
  plan["freq_step_khz"] = cfg.freq_step_hz / 1e3;
  plan["freq_stride"] = cfg.freq_stride;

  ordered_json& sol = j["solver"];
  sol["loss_tangent"] = cfg.solver.loss_tangent;
  sol["min_points_per_wavelength"] = cfg.solver.min_points_per_wavelength;
  sol["residual_tol"] = cfg.solver.residual_tol;
  sol["condition_warn"] = cfg.solver.condition_warn;
  sol["estimate_condition"] = cfg.solver.estimate_condition;
  sol["source_amplitude"] = cfg.solver.source_amplitude;

  ordered_json& an = j["analysis"];
  an["band_factor"] = cfg.analysis.band_factor;
  an["onset_factor"] = cfg.analysis.onset_factor;
  an["low_cutoff_khz"] = cfg.analysis.low_cutoff_hz / 1e3;
  an["energy_pivot_khz"] = cfg.analysis.energy_pivot_hz / 1e3;
  an["healthy_threshold"] = cfg.analysis.healthy_threshold;
  an["phase_weight"] = cfg.analysis.phase_weight;

  ordered_json& sc = j["scenarios"];
  auto rad_list = [](const std::vector<double>& v) {
    ordered_json out = ordered_json::array();
    for (double x : v) out.push_back(rad_to_deg(x));
    return out;
  };
  auto mm_list = [](const std::vector<double>& v) {
    ordered_json out = ordered_json::array();
    for (double x : v) out.push_back(x * 1e3);
    return out;
  };
  sc["loosening_angles_deg"] = rad_list(cfg.scenarios.loosening_angles);
  sc["loosening_thicknesses_mm"] = mm_list(cfg.scenarios.loosening_thicknesses);
  sc["loosening_arcs"] = cfg.scenarios.loosening_arcs;
  sc["crack_angles_deg"] = rad_list(cfg.scenarios.crack_angles);
  sc["crack_diameters_mm"] = mm_list(cfg.scenarios.crack_diameters);

  j["output"]["matrix_format"] = to_string(cfg.matrix_format);
  return j;
}

inline RunConfig run_config_from_json(const ordered_json& j) {
  RunConfig cfg;
  if (j.contains("phantom")) {
    const auto& ph = j["phantom"];
    auto mm = [&](const char* key, double fallback) {
      return ph.contains(key) ? ph[key].get<double>() * 1e-3 : fallback;
    };
    cfg.phantom.outer_radius = mm("outer_radius_mm", cfg.phantom.outer_radius);
    cfg.phantom.skin_thickness = mm("skin_thickness_mm", cfg.phantom.skin_thickness);
    cfg.phantom.fat_thickness = mm("fat_thickness_mm", cfg.phantom.fat_thickness);
    cfg.phantom.bone_outer_radius = mm("bone_outer_radius_mm", cfg.phantom.bone_outer_radius);
    cfg.phantom.bone_thickness = mm("bone_thickness_mm", cfg.phantom.bone_thickness);
    cfg.phantom.implant_radius = mm("implant_radius_mm", cfg.phantom.implant_radius);
    cfg.phantom.sensor_count = ph.value("sensor_count", cfg.phantom.sensor_count);
    if (ph.contains("sensor_aperture_deg"))
      cfg.phantom.sensor_aperture = deg_to_rad(ph["sensor_aperture_deg"].get<double>());
    if (ph.contains("materials")) {
      const auto& mats = ph["materials"];
      auto load = [&](Region reg, const char* name) {
        auto& slot = cfg.phantom.materials[static_cast<std::size_t>(reg)];
        if (mats.contains(name)) slot = detail::material_from_json(name, mats[name], slot);
      };
      load(Region::skin, "skin");
      load(Region::fat, "fat");
      load(Region::muscle, "muscle");
      load(Region::compact_bone, "compact_bone");
      load(Region::marrow, "marrow");
      load(Region::implant, "implant");
      load(Region::water, "water");
    }
  }
  if (j.contains("grid") && j["grid"].contains("h_mm"))
    cfg.grid_h = j["grid"]["h_mm"].get<double>() * 1e-3;
  if (j.contains("plan")) {
    const auto& plan = j["plan"];
    if (plan.contains("freq_start_khz")) cfg.freq_start_hz = plan["freq_start_khz"].get<double>() * 1e3;
    if (plan.contains("freq_stop_khz")) cfg.freq_stop_hz = plan["freq_stop_khz"].get<double>() * 1e3;
    if (plan.contains("freq_step_khz")) cfg.freq_step_hz = plan["freq_step_khz"].get<double>() * 1e3;
    cfg.freq_stride = plan.value("freq_stride", cfg.freq_stride);
  }
  if (j.contains("solver")) {
    const auto& sol = j["solver"];
    cfg.solver.loss_tangent = sol.value("loss_tangent", cfg.solver.loss_tangent);
    cfg.solver.min_points_per_wavelength =
        sol.value("min_points_per_wavelength", cfg.solver.min_points_per_wavelength);
    cfg.solver.residual_tol = sol.value("residual_tol", cfg.solver.residual_tol);
    cfg.solver.condition_warn = sol.value("condition_warn", cfg.solver.condition_warn);
    cfg.solver.estimate_condition = sol.value("estimate_condition", cfg.solver.estimate_condition);
    cfg.solver.source_amplitude = sol.value("source_amplitude", cfg.solver.source_amplitude);
  }
  if (j.contains("analysis")) {
    const auto& an = j["analysis"];
    cfg.analysis.band_factor = an.value("band_factor", cfg.analysis.band_factor);
    cfg.analysis.onset_factor = an.value("onset_factor", cfg.analysis.onset_factor);
    if (an.contains("low_cutoff_khz"))
      cfg.analysis.low_cutoff_hz = an["low_cutoff_khz"].get<double>() * 1e3;
    if (an.contains("energy_pivot_khz"))
      cfg.analysis.energy_pivot_hz = an["energy_pivot_khz"].get<double>() * 1e3;
    cfg.analysis.healthy_threshold = an.value("healthy_threshold", cfg.analysis.healthy_threshold);
    cfg.analysis.phase_weight = an.value("phase_weight", cfg.analysis.phase_weight);
  }
  if (j.contains("scenarios")) {
    const auto& sc = j["scenarios"];
    if (sc.contains("loosening_angles_deg"))
      cfg.scenarios.loosening_angles = detail::deg_list_to_rad(sc["loosening_angles_deg"]);
    if (sc.contains("loosening_thicknesses_mm"))
      cfg.scenarios.loosening_thicknesses = detail::mm_list_to_m(sc["loosening_thicknesses_mm"]);
    if (sc.contains("loosening_arcs"))
      cfg.scenarios.loosening_arcs = sc["loosening_arcs"].get<std::vector<double>>();
    if (sc.contains("crack_angles_deg"))
      cfg.scenarios.crack_angles = detail::deg_list_to_rad(sc["crack_angles_deg"]);
    if (sc.contains("crack_diameters_mm"))
      cfg.scenarios.crack_diameters = detail::mm_list_to_m(sc["crack_diameters_mm"]);
  }
  if (j.contains("output") && j["output"].contains("matrix_format"))
    cfg.matrix_format = matrix_format_from_string(j["output"]["matrix_format"].get<std::string>());
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(ordered_json::parse(io::read_file(path)));
}

inline void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  io::atomic_write(path, to_json(cfg).dump(2) + "\n");
}

}  // namespace sonosig
