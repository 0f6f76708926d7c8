#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonosig/io.hpp"

namespace sonosig {

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

enum class DefectKind : std::uint8_t { crack, loosening };

inline const char* to_string(DefectKind k) {
  return k == DefectKind::crack ? "crack" : "loosening";
}

// A single fixation defect at the implant-marrow interface. Cracks are
// water-filled bubbles (disks centered on the interface circle); loosening is
// a water layer hugging the implant over a fraction of the interface arc.
struct DefectSpec {
  DefectKind kind = DefectKind::crack;
  double angle = 0.0;       // angular position on the interface [rad]
  double diameter = 0.0;    // crack bubble diameter [m]
  double thickness = 0.0;   // loosening layer thickness [m]
  double arc_length = 0.0;  // loosening extent as a fraction of the interface arc, (0, 1]

  static DefectSpec crack(double angle, double diameter) {
    DefectSpec d;
    d.kind = DefectKind::crack;
    d.angle = angle;
    d.diameter = diameter;
    return d;
  }

  static DefectSpec loosening(double angle, double thickness, double arc_fraction) {
    DefectSpec d;
    d.kind = DefectKind::loosening;
    d.angle = angle;
    d.thickness = thickness;
    d.arc_length = arc_fraction;
    return d;
  }

  void validate() const {
    if (kind == DefectKind::crack) {
      if (!(diameter > 0.0))
        throw std::invalid_argument("DefectSpec: crack diameter must be positive");
    } else {
      if (!(thickness > 0.0))
        throw std::invalid_argument("DefectSpec: loosening thickness must be positive");
      if (!(arc_length > 0.0) || arc_length > 1.0)
        throw std::invalid_argument("DefectSpec: loosening arc_length must lie in (0, 1]");
    }
  }

  std::string line() const {
    std::string out = to_string(kind);
    out += " angle_deg=" + io::format_double(rad_to_deg(angle));
    if (kind == DefectKind::crack) {
      out += " diameter_mm=" + io::format_double(diameter * 1e3);
    } else {
      out += " thickness_mm=" + io::format_double(thickness * 1e3);
      out += " arc=" + io::format_double(arc_length);
    }
    return out;
  }
};

// One entry of the experiment grid; defect absent means the healthy baseline.
struct Scenario {
  int id = 0;
  std::optional<DefectSpec> defect;

  bool is_healthy() const { return !defect.has_value(); }

  std::string name() const {
    if (!defect) return "healthy";
    char buf[96];
    const DefectSpec& d = *defect;
    if (d.kind == DefectKind::crack)
      std::snprintf(buf, sizeof(buf), "crack_a%g_d%gmm", rad_to_deg(d.angle), d.diameter * 1e3);
    else
      std::snprintf(buf, sizeof(buf), "loosening_a%g_t%gmm_l%g", rad_to_deg(d.angle),
                    d.thickness * 1e3, d.arc_length);
    return buf;
  }

  std::string line() const {
    return std::to_string(id) + " " + (defect ? defect->line() : "healthy");
  }
};

// Defect grid dimensions. Tip is the interface angle farthest from sensor 0
// (180 deg); side is 90 deg from tip.
struct ScenarioGridParams {
  std::vector<double> loosening_angles = {deg_to_rad(180.0), deg_to_rad(90.0)};  // tip, side
  std::vector<double> loosening_thicknesses = {0.25e-3, 0.5e-3, 1.0e-3};
  std::vector<double> loosening_arcs = {0.25, 0.5, 0.75, 1.0};
  std::vector<double> crack_angles = {deg_to_rad(90.0), deg_to_rad(135.0), deg_to_rad(180.0)};
  std::vector<double> crack_diameters = {0.5e-3, 1.0e-3, 1.5e-3, 2.0e-3};
};

// Healthy first, then loosening, then crack; nested loops run position, then
// size parameters in declaration order. Ids are the enumeration positions.
inline std::vector<Scenario> scenario_grid(const ScenarioGridParams& params) {
  std::vector<Scenario> out;
  out.push_back(Scenario{0, std::nullopt});
  int id = 1;
  for (double angle : params.loosening_angles)
    for (double thickness : params.loosening_thicknesses)
      for (double arc : params.loosening_arcs)
        out.push_back(Scenario{id++, DefectSpec::loosening(angle, thickness, arc)});
  for (double angle : params.crack_angles)
    for (double diameter : params.crack_diameters)
      out.push_back(Scenario{id++, DefectSpec::crack(angle, diameter)});
  for (const Scenario& s : out)
    if (s.defect) s.defect->validate();
  return out;
}

inline std::vector<Scenario> default_scenario_grid() { return scenario_grid(ScenarioGridParams{}); }

// Frequencies and the actuation rotation. Receivers default to all sensors.
struct SweepPlan {
  std::vector<double> frequencies;  // Hz, strictly increasing
  std::vector<int> actuators;
  std::vector<int> receivers;

  void validate(int sensor_count) const {
    if (frequencies.empty())
      throw std::invalid_argument("SweepPlan: no frequencies");
    for (std::size_t i = 0; i < frequencies.size(); ++i) {
      if (!(frequencies[i] > 0.0))
        throw std::invalid_argument("SweepPlan: frequencies must be positive");
      if (i > 0 && !(frequencies[i] > frequencies[i - 1]))
        throw std::invalid_argument("SweepPlan: frequencies must be strictly increasing");
    }
    auto check_indices = [&](const std::vector<int>& v, const char* what) {
      if (v.empty())
        throw std::invalid_argument(std::string("SweepPlan: empty ") + what + " list");
      std::vector<bool> seen(static_cast<std::size_t>(sensor_count), false);
      for (int s : v) {
        if (s < 0 || s >= sensor_count)
          throw std::invalid_argument(std::string("SweepPlan: invalid ") + what + " index");
        if (seen[static_cast<std::size_t>(s)])
          throw std::invalid_argument(std::string("SweepPlan: duplicate ") + what + " index");
        seen[static_cast<std::size_t>(s)] = true;
      }
    };
    check_indices(actuators, "actuator");
    check_indices(receivers, "receiver");
  }

  int rows() const { return static_cast<int>(actuators.size() * receivers.size()); }

  std::string hash() const {
    std::string canon = "freqs " + io::join_doubles(frequencies) + "\nact " +
                        io::join_ints(actuators) + "\nrecv " + io::join_ints(receivers) + "\n";
    return io::to_hex(io::fnv1a64(canon));
  }
};

// 1 kHz to 300 kHz in 1 kHz increments, every sensor actuating and receiving.
inline SweepPlan default_sweep_plan(int sensor_count) {
  if (sensor_count < 2)
    throw std::invalid_argument("default_sweep_plan: need at least 2 sensors");
  SweepPlan plan;
  plan.frequencies.reserve(300);
  for (int k = 1; k <= 300; ++k)
    plan.frequencies.push_back(1000.0 * k);
  for (int s = 0; s < sensor_count; ++s) {
    plan.actuators.push_back(s);
    plan.receivers.push_back(s);
  }
  return plan;
}

// Keep every stride-th frequency, counted from the stride-th entry, so stride
// 10 over the default plan yields 10, 20, ..., 300 kHz.
inline SweepPlan strided_plan(SweepPlan plan, int stride) {
  if (stride < 1)
    throw std::invalid_argument("strided_plan: stride must be >= 1");
  if (stride == 1) return plan;
  std::vector<double> kept;
  for (std::size_t i = stride - 1; i < plan.frequencies.size(); i += stride)
    kept.push_back(plan.frequencies[i]);
  plan.frequencies = std::move(kept);
  return plan;
}

inline long long case_count(const std::vector<Scenario>& grid, const SweepPlan& plan) {
  return static_cast<long long>(grid.size()) * static_cast<long long>(plan.actuators.size()) *
         static_cast<long long>(plan.frequencies.size());
}

}  // namespace sonosig
