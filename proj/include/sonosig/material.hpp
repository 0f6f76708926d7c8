#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace sonosig {

// Plane P-wave speed from the elastic constants,
//   c = sqrt(E (1-nu) / (rho (1+nu) (1-2nu))).
inline double derive_pwave_speed(double youngs_modulus, double poisson, double rho) {
  if (!(rho > 0.0))
    throw std::domain_error("derive_pwave_speed: rho must be positive");
  if (!(youngs_modulus > 0.0))
    throw std::domain_error("derive_pwave_speed: Young's modulus must be positive");
  if (!(poisson >= 0.0) || poisson >= 0.5)
    throw std::domain_error("derive_pwave_speed: Poisson's ratio must lie in [0, 0.5)");
  const double num = youngs_modulus * (1.0 - poisson);
  const double den = rho * (1.0 + poisson) * (1.0 - 2.0 * poisson);
  return std::sqrt(num / den);
}

// Acoustic medium. Fluids can be specified by speed directly; E is then
// back-filled with nu = 0 so the speed relation still holds.
struct Material {
  std::string name;
  double rho = 0.0;             // density [kg/m^3]
  double youngs_modulus = 0.0;  // [Pa]
  double poisson = 0.0;         // in [0, 0.5)
  double pwave_speed = 0.0;     // [m/s]

  static Material from_elastic(std::string name, double rho, double youngs_modulus,
                               double poisson) {
    Material m;
    m.name = std::move(name);
    m.rho = rho;
    m.youngs_modulus = youngs_modulus;
    m.poisson = poisson;
    m.pwave_speed = derive_pwave_speed(youngs_modulus, poisson, rho);
    return m;
  }

  static Material from_speed(std::string name, double rho, double speed) {
    if (!(rho > 0.0))
      throw std::domain_error("Material::from_speed: rho must be positive");
    if (!(speed > 0.0))
      throw std::domain_error("Material::from_speed: speed must be positive");
    Material m;
    m.name = std::move(name);
    m.rho = rho;
    m.poisson = 0.0;
    m.youngs_modulus = speed * speed * rho;
    m.pwave_speed = speed;
    return m;
  }
};

}  // namespace sonosig
