#include <catch2/catch.hpp>

#include <cmath>
#include <queue>
#include <set>

#include "sonosig/phantom.hpp"

using namespace sonosig;

namespace {

int nearest_cell(const RasterPhantom& r, double x, double y) {
  int best = 0;
  double best_d = 1e300;
  for (int j = 0; j < r.ny; ++j) {
    for (int i = 0; i < r.nx; ++i) {
      const double d = std::hypot(r.center_x(i) - x, r.center_y(j) - y);
      if (d < best_d) {
        best_d = d;
        best = r.cell_index(i, j);
      }
    }
  }
  return best;
}

int region_count(const RasterPhantom& r, Region reg) {
  int n = 0;
  for (std::uint8_t v : r.region)
    if (v == static_cast<std::uint8_t>(reg)) ++n;
  return n;
}

double ring_area(double r_in, double r_out) { return kPi * (r_out * r_out - r_in * r_in); }

}  // namespace

TEST_CASE("cell classification hits the expected regions") {
  const PhantomSpec spec = default_phantom_spec();
  const RasterPhantom raster = build_phantom(spec, 1e-3);

  REQUIRE(raster.region_at(nearest_cell(raster, 0.0, 0.0)) == Region::implant);
  const double mid_skin = spec.outer_radius - spec.skin_thickness / 2.0;
  REQUIRE(raster.region_at(nearest_cell(raster, mid_skin, 0.0)) == Region::skin);
  const double mid_fat = spec.outer_radius - spec.skin_thickness - spec.fat_thickness / 2.0;
  REQUIRE(raster.region_at(nearest_cell(raster, 0.0, -mid_fat)) == Region::fat);
  REQUIRE(raster.region_at(nearest_cell(raster, 0.03, 0.03)) == Region::muscle);
  REQUIRE(raster.region_at(nearest_cell(raster, 0.013, 0.0)) == Region::compact_bone);
  REQUIRE(raster.region_at(nearest_cell(raster, 0.008, 0.0)) == Region::marrow);
  REQUIRE(raster.region_at(nearest_cell(raster, 0.07, 0.07)) == Region::exterior);
}

TEST_CASE("rasterized region areas converge to the analytic ring areas") {
  const PhantomSpec spec = default_phantom_spec();
  struct Ring {
    Region region;
    double r_in, r_out;
  };
  const Ring rings[] = {
      {Region::skin, spec.outer_radius - spec.skin_thickness, spec.outer_radius},
      {Region::fat, spec.muscle_outer_radius(), spec.outer_radius - spec.skin_thickness},
      {Region::muscle, spec.bone_outer_radius, spec.muscle_outer_radius()},
      {Region::compact_bone, spec.marrow_outer_radius(), spec.bone_outer_radius},
      {Region::marrow, spec.implant_radius, spec.marrow_outer_radius()},
      {Region::implant, 0.0, spec.implant_radius},
  };

  for (double h : {1e-3, 0.5e-3}) {
    const RasterPhantom raster = build_phantom(spec, h);
    for (const Ring& ring : rings) {
      const double analytic = ring_area(ring.r_in, ring.r_out);
      const double rasterized = region_count(raster, ring.region) * h * h;
      const double band = 2.0 * kPi * (ring.r_in + ring.r_out) * h;  // boundary band area
      CAPTURE(to_string(ring.region), h);
      REQUIRE(std::abs(rasterized - analytic) <= 1.5 * band + 8.0 * h * h);
    }
  }

  // refining h by 2x keeps the error below the previous boundary band
  const RasterPhantom coarse = build_phantom(spec, 1e-3);
  const RasterPhantom fine = build_phantom(spec, 0.5e-3);
  for (const Ring& ring : rings) {
    const double analytic = ring_area(ring.r_in, ring.r_out);
    const double err_fine = std::abs(region_count(fine, ring.region) * 0.5e-3 * 0.5e-3 - analytic);
    const double coarse_band = 2.0 * kPi * (ring.r_in + ring.r_out) * 1e-3;
    REQUIRE(err_fine < coarse_band);
  }
}

TEST_CASE("rasterization is deterministic") {
  const PhantomSpec spec = default_phantom_spec();
  const RasterPhantom a = build_phantom(spec, 1e-3);
  const RasterPhantom b = build_phantom(spec, 1e-3);
  REQUIRE(a.region == b.region);
  REQUIRE(a.rho == b.rho);
  REQUIRE(a.speed == b.speed);
  REQUIRE(a.sensors.size() == b.sensors.size());
  for (std::size_t k = 0; k < a.sensors.size(); ++k)
    REQUIRE(a.sensors[k].aperture_cells == b.sensors[k].aperture_cells);
}

TEST_CASE("build_phantom rejects bad inputs") {
  PhantomSpec spec = default_phantom_spec();
  REQUIRE_THROWS_AS(build_phantom(spec, 2e-3), std::invalid_argument);  // skin needs 2 cells
  REQUIRE_THROWS_AS(build_phantom(spec, 0.0), std::invalid_argument);
  spec.bone_outer_radius = 0.070;  // bone ring would cross the fat layer
  REQUIRE_THROWS_AS(build_phantom(spec, 0.5e-3), std::invalid_argument);
}

TEST_CASE("sensor layout spacing and apertures") {
  const PhantomSpec spec = default_phantom_spec();
  const RasterPhantom raster = build_phantom(spec, 1e-3);
  REQUIRE(raster.sensors.size() == 8);
  for (int k = 0; k < 8; ++k) {
    REQUIRE(raster.sensors[static_cast<std::size_t>(k)].angle ==
            Approx(2.0 * kPi * k / 8.0).margin(1e-12));
    REQUIRE(std::hypot(raster.sensors[static_cast<std::size_t>(k)].x,
                       raster.sensors[static_cast<std::size_t>(k)].y) ==
            Approx(spec.outer_radius).epsilon(1e-12));
  }

  std::set<int> seen;
  for (const auto& s : raster.sensors) {
    REQUIRE_FALSE(s.aperture_cells.empty());
    for (int cell : s.aperture_cells) {
      REQUIRE(seen.insert(cell).second);  // pairwise disjoint
      const int i = cell % raster.nx, j = cell / raster.nx;
      REQUIRE(raster.is_boundary_cell(i, j));
    }
  }

  PhantomSpec two = default_phantom_spec();
  two.sensor_count = 2;
  const RasterPhantom r2 = build_phantom(two, 1e-3);
  REQUIRE(r2.sensors[0].angle == 0.0);
  REQUIRE(r2.sensors[1].angle == Approx(kPi));
}

TEST_CASE("zero-size defects are no-ops") {
  const RasterPhantom raster = build_phantom(default_phantom_spec(), 1e-3);
  const RasterPhantom with_crack = apply_defect(raster, DefectSpec::crack(1.0, 0.0));
  REQUIRE(with_crack.region == raster.region);
  const RasterPhantom with_loose = apply_defect(raster, DefectSpec::loosening(1.0, 0.0, 0.5));
  REQUIRE(with_loose.region == raster.region);
  const RasterPhantom no_arc = apply_defect(raster, DefectSpec::loosening(1.0, 1e-3, 0.0));
  REQUIRE(no_arc.region == raster.region);
}

TEST_CASE("crack rasterization matches the disk area") {
  const double h = 0.2e-3;
  const RasterPhantom raster = build_phantom(default_phantom_spec(), h);
  const double diameter = 2.0e-3;
  const RasterPhantom defected = apply_defect(raster, DefectSpec::crack(deg_to_rad(137.0), diameter));
  const int water = region_count(defected, Region::water);
  const double disk_area = kPi * (diameter / 2.0) * (diameter / 2.0);
  const double expected = disk_area / (h * h);
  const double tolerance = kPi * diameter / h;  // perimeter band in cells
  REQUIRE(std::abs(water - expected) <= tolerance);

  // replaced cells were implant or marrow before
  for (std::size_t k = 0; k < raster.region.size(); ++k) {
    if (defected.region[k] == static_cast<std::uint8_t>(Region::water)) {
      const Region before = static_cast<Region>(raster.region[k]);
      REQUIRE((before == Region::implant || before == Region::marrow));
    }
  }
}

TEST_CASE("full-arc loosening forms a contiguous annulus") {
  const double h = 0.5e-3;
  const RasterPhantom raster = build_phantom(default_phantom_spec(), h);
  const double thickness = 2.0e-3;
  const RasterPhantom defected =
      apply_defect(raster, DefectSpec::loosening(deg_to_rad(45.0), thickness, 1.0));

  std::vector<int> water_cells;
  for (std::size_t k = 0; k < defected.region.size(); ++k)
    if (defected.region[k] == static_cast<std::uint8_t>(Region::water)) {
      water_cells.push_back(static_cast<int>(k));
      REQUIRE(raster.region[k] == static_cast<std::uint8_t>(Region::marrow));
    }
  REQUIRE_FALSE(water_cells.empty());

  // single 8-connected component
  std::set<int> remaining(water_cells.begin(), water_cells.end());
  std::queue<int> frontier;
  frontier.push(*remaining.begin());
  remaining.erase(remaining.begin());
  while (!frontier.empty()) {
    const int cell = frontier.front();
    frontier.pop();
    const int i = cell % defected.nx, j = cell / defected.nx;
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int ii = i + di, jj = j + dj;
        if (ii < 0 || ii >= defected.nx || jj < 0 || jj >= defected.ny) continue;
        const int q = defected.cell_index(ii, jj);
        auto it = remaining.find(q);
        if (it != remaining.end()) {
          remaining.erase(it);
          frontier.push(q);
        }
      }
  }
  REQUIRE(remaining.empty());

  // the ring wraps all the way around
  bool octant[8] = {};
  for (int cell : water_cells) {
    const double x = defected.center_x(cell % defected.nx);
    const double y = defected.center_y(cell / defected.nx);
    const double a = std::atan2(y, x) + kPi;
    octant[std::min(7, static_cast<int>(a / (kPi / 4.0)))] = true;
  }
  for (bool b : octant) REQUIRE(b);
}

TEST_CASE("defects that leave the marrow region are rejected") {
  const RasterPhantom raster = build_phantom(default_phantom_spec(), 1e-3);
  // 6 mm implant radius, 10 mm marrow outer radius: 8 mm bubble reaches the bone
  REQUIRE_THROWS_AS(apply_defect(raster, DefectSpec::crack(0.0, 9e-3)), std::invalid_argument);
  REQUIRE_THROWS_AS(apply_defect(raster, DefectSpec::loosening(0.0, 5e-3, 1.0)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(apply_defect(raster, DefectSpec::crack(0.0, -1e-3)), std::invalid_argument);
  REQUIRE_THROWS_AS(apply_defect(raster, DefectSpec::loosening(0.0, -1e-3, 0.5)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(apply_defect(raster, DefectSpec::loosening(0.0, 1e-3, 1.5)),
                    std::invalid_argument);
}

TEST_CASE("phantom debug image has one gray level per region") {
  const RasterPhantom raster = build_phantom(default_phantom_spec(), 1e-3);
  const io::GrayImage img = phantom_debug_image(raster);
  REQUIRE(img.width == raster.nx);
  REQUIRE(img.height == raster.ny);
  std::set<std::uint8_t> levels(img.pixels.begin(), img.pixels.end());
  REQUIRE(levels.size() == 7);  // exterior + six healthy regions
}
