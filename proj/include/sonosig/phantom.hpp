#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sonosig/io.hpp"
#include "sonosig/material.hpp"
#include "sonosig/scenario.hpp"

namespace sonosig {

enum class Region : std::uint8_t {
  exterior = 0,
  skin,
  fat,
  muscle,
  compact_bone,
  marrow,
  implant,
  water,
};

inline constexpr int kRegionCount = 8;

inline const char* to_string(Region r) {
  static const char* names[kRegionCount] = {"exterior", "skin",   "fat",     "muscle",
                                            "compact_bone", "marrow", "implant", "water"};
  return names[static_cast<int>(r)];
}

// Concentric 2D thigh cross-section: skin and fat over a muscle disk, a ring
// of compact bone filled with marrow, and a titanium implant at the center.
struct PhantomSpec {
  double outer_radius = 0.075;
  double skin_thickness = 0.002;
  double fat_thickness = 0.010;
  double bone_outer_radius = 0.016;
  double bone_thickness = 0.006;
  double implant_radius = 0.006;
  int sensor_count = 8;
  double sensor_aperture = deg_to_rad(10.0);  // arc subtended by one transducer
  std::vector<Material> materials;            // indexed by Region

  double marrow_outer_radius() const { return bone_outer_radius - bone_thickness; }
  double muscle_outer_radius() const { return outer_radius - fat_thickness - skin_thickness; }

  void validate() const {
    if (!(implant_radius > 0.0) || !(skin_thickness > 0.0) || !(fat_thickness > 0.0) ||
        !(bone_thickness > 0.0))
      throw std::invalid_argument("PhantomSpec: radii and thicknesses must be positive");
    if (!(implant_radius < marrow_outer_radius() && marrow_outer_radius() < bone_outer_radius &&
          bone_outer_radius < muscle_outer_radius()))
      throw std::invalid_argument("PhantomSpec: regions are not strictly nested");
    if (sensor_count < 2)
      throw std::invalid_argument("PhantomSpec: need at least 2 sensors");
    if (!(sensor_aperture > 0.0) || sensor_aperture >= 2.0 * kPi / sensor_count)
      throw std::invalid_argument("PhantomSpec: sensor aperture must be positive and smaller than the sensor spacing");
    if (static_cast<int>(materials.size()) != kRegionCount)
      throw std::invalid_argument("PhantomSpec: material table must have one entry per region");
    for (int r = 1; r < kRegionCount; ++r)
      if (!(materials[r].rho > 0.0) || !(materials[r].pwave_speed > 0.0))
        throw std::invalid_argument("PhantomSpec: invalid material for region " +
                                    std::string(to_string(static_cast<Region>(r))));
  }

  // Thinnest annulus the grid has to resolve.
  double thinnest_layer() const {
    double t = skin_thickness;
    t = std::min(t, fat_thickness);
    t = std::min(t, muscle_outer_radius() - bone_outer_radius);
    t = std::min(t, bone_thickness);
    t = std::min(t, marrow_outer_radius() - implant_radius);
    t = std::min(t, implant_radius);
    return t;
  }
};

// Tissue rows follow the published table; titanium and water use handbook
// values (water by speed directly).
inline std::vector<Material> default_material_table() {
  std::vector<Material> m(kRegionCount);
  m[static_cast<int>(Region::exterior)] = Material::from_speed("exterior", 1.0, 1.0);
  m[static_cast<int>(Region::skin)] = Material::from_elastic("skin", 1109.0, 2.900e9, 0.29);
  m[static_cast<int>(Region::fat)] = Material::from_elastic("fat", 911.0, 1.889e9, 0.29);
  m[static_cast<int>(Region::muscle)] = Material::from_elastic("muscle", 1090.0, 2.762e9, 0.4);
  m[static_cast<int>(Region::compact_bone)] =
      Material::from_elastic("compact_bone", 1376.0, 17e9, 0.29);
  m[static_cast<int>(Region::marrow)] = Material::from_elastic("marrow", 115.0, 0.520e9, 0.29);
  m[static_cast<int>(Region::implant)] = Material::from_elastic("titanium", 4506.0, 116e9, 0.32);
  m[static_cast<int>(Region::water)] = Material::from_speed("water", 1000.0, 1480.0);
  return m;
}

inline PhantomSpec default_phantom_spec() {
  PhantomSpec spec;
  spec.materials = default_material_table();
  return spec;
}

struct SensorPlacement {
  int index = 0;
  double angle = 0.0;  // radians, measured from the +x axis
  double x = 0.0;
  double y = 0.0;
  std::vector<int> aperture_cells;  // sorted cell ids on the interior boundary
};

inline double wrap_angle(double a) {
  double y = std::fmod(a + kPi, 2.0 * kPi);
  if (y <= 0.0) y += 2.0 * kPi;
  return y - kPi;  // (-pi, pi]
}

// Uniform cell-centered raster of the phantom. The grid is square and
// centered on the implant axis so the 90-degree index rotation
// (i, j) -> (n-1-j, i) maps cell centers onto cell centers exactly.
struct RasterPhantom {
  double h = 0.0;
  int nx = 0, ny = 0;
  std::vector<std::uint8_t> region;  // Region per cell
  std::vector<double> rho;           // zero outside the phantom
  std::vector<double> speed;
  std::vector<SensorPlacement> sensors;
  PhantomSpec spec;  // geometry the raster was built from

  int cell_index(int i, int j) const { return j * nx + i; }
  double center_x(int i) const { return ((2 * i + 1 - nx) * h) / 2.0; }
  double center_y(int j) const { return ((2 * j + 1 - ny) * h) / 2.0; }
  bool is_interior(int cell) const {
    return region[static_cast<std::size_t>(cell)] != static_cast<std::uint8_t>(Region::exterior);
  }
  Region region_at(int cell) const { return static_cast<Region>(region[static_cast<std::size_t>(cell)]); }

  int interior_count() const {
    int n = 0;
    for (std::uint8_t r : region)
      if (r != 0) ++n;
    return n;
  }

  // Interior cell with at least one exterior or off-grid 4-neighbor.
  bool is_boundary_cell(int i, int j) const {
    if (!is_interior(cell_index(i, j))) return false;
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    for (int k = 0; k < 4; ++k) {
      int ii = i + di[k], jj = j + dj[k];
      if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) return true;
      if (!is_interior(cell_index(ii, jj))) return true;
    }
    return false;
  }

  double min_interior_speed() const {
    double c = 0.0;
    for (std::size_t k = 0; k < region.size(); ++k) {
      if (region[k] == 0) continue;
      if (c == 0.0 || speed[k] < c) c = speed[k];
    }
    return c;
  }
};

// Equally spaced transducers on the outer boundary, starting at angle 0.
// Aperture cells are the interior-boundary cells within each sensor's arc.
inline std::vector<SensorPlacement> sensor_layout(const PhantomSpec& spec,
                                                  const RasterPhantom& raster) {
  std::vector<SensorPlacement> sensors(static_cast<std::size_t>(spec.sensor_count));
  for (int k = 0; k < spec.sensor_count; ++k) {
    SensorPlacement& s = sensors[static_cast<std::size_t>(k)];
    s.index = k;
    s.angle = 2.0 * kPi * k / spec.sensor_count;
    s.x = spec.outer_radius * std::cos(s.angle);
    s.y = spec.outer_radius * std::sin(s.angle);
  }
  const double half_aperture = spec.sensor_aperture / 2.0;
  for (int j = 0; j < raster.ny; ++j) {
    for (int i = 0; i < raster.nx; ++i) {
      if (!raster.is_boundary_cell(i, j)) continue;
      const double theta = std::atan2(raster.center_y(j), raster.center_x(i));
      for (auto& s : sensors) {
        if (std::abs(wrap_angle(theta - s.angle)) <= half_aperture) {
          s.aperture_cells.push_back(raster.cell_index(i, j));
          break;  // apertures are disjoint by the spec validation
        }
      }
    }
  }
  for (const auto& s : sensors)
    if (s.aperture_cells.empty())
      throw std::runtime_error("sensor_layout: empty aperture for sensor " +
                               std::to_string(s.index) + "; grid too coarse");
  return sensors;
}

// Classify every cell center by radial distance, ties toward the inner
// region, and place the sensors. Deterministic for a given spec and h.
inline RasterPhantom build_phantom(const PhantomSpec& spec, double h) {
  spec.validate();
  if (!(h > 0.0))
    throw std::invalid_argument("build_phantom: h must be positive");
  if (spec.thinnest_layer() < 2.0 * h)
    throw std::invalid_argument("build_phantom: h too coarse to resolve the thinnest layer (" +
                                io::format_double(spec.thinnest_layer() * 1e3) + " mm) with 2 cells");

  RasterPhantom raster;
  raster.h = h;
  const int n = static_cast<int>(std::ceil(2.0 * spec.outer_radius / h));
  raster.nx = raster.ny = n;
  raster.spec = spec;
  const std::size_t cells = static_cast<std::size_t>(n) * n;
  raster.region.assign(cells, 0);
  raster.rho.assign(cells, 0.0);
  raster.speed.assign(cells, 0.0);

  const double r2_outer = spec.outer_radius * spec.outer_radius;
  const double r_skin = spec.outer_radius - spec.skin_thickness;
  const double r2_skin = r_skin * r_skin;
  const double r_fat = spec.muscle_outer_radius();
  const double r2_fat = r_fat * r_fat;
  const double r2_bone = spec.bone_outer_radius * spec.bone_outer_radius;
  const double r_marrow = spec.marrow_outer_radius();
  const double r2_marrow = r_marrow * r_marrow;
  const double r2_implant = spec.implant_radius * spec.implant_radius;

  for (int j = 0; j < n; ++j) {
    const double y = raster.center_y(j);
    for (int i = 0; i < n; ++i) {
      const double x = raster.center_x(i);
      const double r2 = x * x + y * y;
      Region reg;
      if (r2 > r2_outer)
        reg = Region::exterior;
      else if (r2 > r2_skin)
        reg = Region::skin;
      else if (r2 > r2_fat)
        reg = Region::fat;
      else if (r2 > r2_bone)
        reg = Region::muscle;
      else if (r2 > r2_marrow)
        reg = Region::compact_bone;
      else if (r2 > r2_implant)
        reg = Region::marrow;
      else
        reg = Region::implant;
      const int cell = raster.cell_index(i, j);
      raster.region[static_cast<std::size_t>(cell)] = static_cast<std::uint8_t>(reg);
      if (reg != Region::exterior) {
        const Material& m = spec.materials[static_cast<std::size_t>(reg)];
        raster.rho[static_cast<std::size_t>(cell)] = m.rho;
        raster.speed[static_cast<std::size_t>(cell)] = m.pwave_speed;
      }
    }
  }

  raster.sensors = sensor_layout(spec, raster);
  return raster;
}

// Reassign cells inside the defect region to water. Zero-size defects are
// no-ops; negative sizes and regions reaching past the marrow are rejected.
//
// Cells partially covered by the defect get effective properties mixed by
// area fraction (Wood's law: compressibility 1/(rho c^2) and specific volume
// 1/rho average linearly). A plain cell-center rule quantizes sub-grid
// defects so hard that e.g. 1.0 mm and 1.5 mm bubbles rasterize identically
// at h = 0.5 mm; fractional coverage keeps the response a smooth, monotone
// function of defect size. The region index follows the majority, so cells
// still map to exactly one material for counting and rendering.
inline RasterPhantom apply_defect(const RasterPhantom& phantom, const DefectSpec& defect) {
  const PhantomSpec& spec = phantom.spec;
  const double r_implant = spec.implant_radius;
  const double r_marrow = spec.marrow_outer_radius();

  RasterPhantom out = phantom;
  const Material& water = spec.materials[static_cast<std::size_t>(Region::water)];

  // 4x4 subsample grid, symmetric under the 90-degree rotation group
  constexpr int kSub = 4;
  constexpr double kOffsets[kSub] = {-0.375, -0.125, 0.125, 0.375};

  auto apply_coverage = [&](int cell, double fraction) {
    if (fraction <= 0.0) return;
    const std::size_t k = static_cast<std::size_t>(cell);
    if (fraction >= 1.0) {
      out.region[k] = static_cast<std::uint8_t>(Region::water);
      out.rho[k] = water.rho;
      out.speed[k] = water.pwave_speed;
      return;
    }
    const double rho0 = phantom.rho[k], c0 = phantom.speed[k];
    const double inv_rho = (1.0 - fraction) / rho0 + fraction / water.rho;
    const double inv_k = (1.0 - fraction) / (rho0 * c0 * c0) +
                         fraction / (water.rho * water.pwave_speed * water.pwave_speed);
    out.rho[k] = 1.0 / inv_rho;
    out.speed[k] = std::sqrt(inv_rho / inv_k);
    if (fraction >= 0.5) out.region[k] = static_cast<std::uint8_t>(Region::water);
  };

  auto coverage = [&](int i, int j, auto&& inside) {
    int hits = 0;
    for (int sj = 0; sj < kSub; ++sj)
      for (int si = 0; si < kSub; ++si)
        if (inside(phantom.center_x(i) + kOffsets[si] * phantom.h,
                   phantom.center_y(j) + kOffsets[sj] * phantom.h))
          ++hits;
    return static_cast<double>(hits) / (kSub * kSub);
  };

  if (defect.kind == DefectKind::crack) {
    if (defect.diameter < 0.0)
      throw std::invalid_argument("apply_defect: crack diameter must be non-negative");
    if (defect.diameter == 0.0) return out;
    const double radius = defect.diameter / 2.0;
    if (r_implant + radius > r_marrow)
      throw std::invalid_argument("apply_defect: crack extends outside the marrow region");
    if (radius > r_implant)
      throw std::invalid_argument("apply_defect: crack extends beyond the implant center");
    const double cx = r_implant * std::cos(defect.angle);
    const double cy = r_implant * std::sin(defect.angle);
    const double radius2 = radius * radius;
    auto inside = [&](double x, double y) {
      const double dx = x - cx, dy = y - cy;
      return dx * dx + dy * dy <= radius2;
    };
    for (int j = 0; j < phantom.ny; ++j) {
      if (std::abs(phantom.center_y(j) - cy) > radius + phantom.h) continue;
      for (int i = 0; i < phantom.nx; ++i) {
        if (std::abs(phantom.center_x(i) - cx) > radius + phantom.h) continue;
        apply_coverage(phantom.cell_index(i, j), coverage(i, j, inside));
      }
    }
  } else {
    if (defect.thickness < 0.0)
      throw std::invalid_argument("apply_defect: loosening thickness must be non-negative");
    if (defect.arc_length < 0.0 || defect.arc_length > 1.0)
      throw std::invalid_argument("apply_defect: loosening arc_length must lie in [0, 1]");
    if (defect.thickness == 0.0 || defect.arc_length == 0.0) return out;
    if (r_implant + defect.thickness > r_marrow)
      throw std::invalid_argument("apply_defect: loosening extends outside the marrow region");
    const double r2_inner = r_implant * r_implant;
    const double r_outer = r_implant + defect.thickness;
    const double r2_outer = r_outer * r_outer;
    const double half_span = defect.arc_length * kPi;
    auto inside = [&](double x, double y) {
      const double r2 = x * x + y * y;
      if (r2 <= r2_inner || r2 > r2_outer) return false;
      return std::abs(wrap_angle(std::atan2(y, x) - defect.angle)) <= half_span;
    };
    for (int j = 0; j < phantom.ny; ++j) {
      const double y = phantom.center_y(j);
      if (std::abs(y) > r_outer + phantom.h) continue;
      for (int i = 0; i < phantom.nx; ++i) {
        const double x = phantom.center_x(i);
        if (std::abs(x) > r_outer + phantom.h) continue;
        const double r2 = x * x + y * y;
        const double slack = 2.0 * phantom.h * (r_outer + phantom.h);
        if (r2 > r2_outer + slack || r2 < r2_inner - slack) continue;
        apply_coverage(phantom.cell_index(i, j), coverage(i, j, inside));
      }
    }
  }
  return out;
}

// Material-index raster as a grayscale image, for visual inspection.
inline io::GrayImage phantom_debug_image(const RasterPhantom& raster) {
  io::GrayImage img;
  img.width = raster.nx;
  img.height = raster.ny;
  img.pixels.resize(raster.region.size());
  for (std::size_t k = 0; k < raster.region.size(); ++k)
    img.pixels[k] = static_cast<std::uint8_t>(raster.region[k] * 255 / (kRegionCount - 1));
  // row 0 of the image is the top of the domain (largest y)
  io::GrayImage flipped = img;
  for (int j = 0; j < img.height; ++j)
    for (int i = 0; i < img.width; ++i)
      flipped.pixels[static_cast<std::size_t>(j) * img.width + i] =
          img.pixels[static_cast<std::size_t>(img.height - 1 - j) * img.width + i];
  return flipped;
}

}  // namespace sonosig
