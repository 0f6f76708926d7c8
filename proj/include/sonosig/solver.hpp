#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <atomic>
#include <bit>
#include <complex>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sonosig/phantom.hpp"
#include "sonosig/scenario.hpp"

namespace sonosig {

using Complex = std::complex<double>;
using SparseComplex = Eigen::SparseMatrix<Complex>;

struct SolverSettings {
  double loss_tangent = 0.005;  // uniform attenuation regularizing interior resonances
  double min_points_per_wavelength = 6.0;
  double residual_tol = 1e-10;
  double condition_warn = 1e12;
  bool estimate_condition = true;
  double source_amplitude = 1.0;
};

// Quality flag bits recorded per frequency.
enum QualityFlag : int {
  kQualityNearSingular = 1,  // condition estimate above condition_warn
  kQualityResidual = 2,      // residual above residual_tol after refinement
};

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& msg, double omega, int actuator = -1)
      : std::runtime_error(msg), omega(omega), actuator(actuator) {}
  double omega;
  int actuator;
};

struct GridMap {
  int nx = 0, ny = 0;
  std::vector<int> cell_to_unknown;  // -1 for exterior cells
  std::vector<int> unknown_to_cell;
  int unknowns() const { return static_cast<int>(unknown_to_cell.size()); }
};

struct HelmholtzSystem {
  double omega = 0.0;
  SparseComplex op;  // complex symmetric, at most 5 nonzeros per row
  Eigen::VectorXcd rhs;
  std::shared_ptr<const GridMap> map;
};

struct FieldSolution {
  double omega = 0.0;
  std::vector<Complex> values;  // per cell on the full grid, zero outside
  double residual = 0.0;
  double condition_estimate = 0.0;  // 0 when not estimated
  int quality = 0;
};

struct ChannelReading {
  int receiver = 0;
  Complex value;
};

// Discretizes div((1/rho) grad p) + (omega^2 (1+i*lt) / (rho c^2)) p = 0 on
// the interior cells with five-point differences and face-harmonic averaging
// of 1/rho. The outer boundary (grid edge or exterior neighbor) carries
// homogeneous Neumann data except over the actuator aperture, where a unit
// total normal flux enters as the right-hand side. The operator pattern and
// flux coefficients do not depend on omega, so they are built once and the
// mass term is added onto the stored diagonal per frequency.
class HelmholtzAssembler {
 public:
  HelmholtzAssembler(const RasterPhantom& phantom, SolverSettings settings = {})
      : settings_(settings), h_(phantom.h) {
    const int nx = phantom.nx, ny = phantom.ny;
    auto map = std::make_shared<GridMap>();
    map->nx = nx;
    map->ny = ny;
    map->cell_to_unknown.assign(static_cast<std::size_t>(nx) * ny, -1);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int cell = phantom.cell_index(i, j);
        if (!phantom.is_interior(cell)) continue;
        map->cell_to_unknown[static_cast<std::size_t>(cell)] = map->unknowns();
        map->unknown_to_cell.push_back(cell);
      }
    }
    map_ = std::move(map);
    const int m = map_->unknowns();
    if (m == 0)
      throw std::invalid_argument("HelmholtzAssembler: phantom has no interior cells");

    min_speed_ = phantom.min_interior_speed();
    inv_rho_c2_.resize(static_cast<std::size_t>(m));
    for (int u = 0; u < m; ++u) {
      const int cell = map_->unknown_to_cell[static_cast<std::size_t>(u)];
      const double rho = phantom.rho[static_cast<std::size_t>(cell)];
      const double c = phantom.speed[static_cast<std::size_t>(cell)];
      inv_rho_c2_[static_cast<std::size_t>(u)] = 1.0 / (rho * c * c);
    }

    // Flux part. The face coefficient 2/((rho_P+rho_Q) h^2) is evaluated
    // identically from both sides, so the matrix is symmetric bit for bit.
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(static_cast<std::size_t>(m) * 5);
    const double inv_h2 = 1.0 / (h_ * h_);
    const int di[4] = {-1, 1, 0, 0};
    const int dj[4] = {0, 0, -1, 1};
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        const int cell = phantom.cell_index(i, j);
        const int p = map_->cell_to_unknown[static_cast<std::size_t>(cell)];
        if (p < 0) continue;
        double diag = 0.0;
        for (int k = 0; k < 4; ++k) {
          const int ii = i + di[k], jj = j + dj[k];
          if (ii < 0 || ii >= nx || jj < 0 || jj >= ny) continue;
          const int qcell = phantom.cell_index(ii, jj);
          const int q = map_->cell_to_unknown[static_cast<std::size_t>(qcell)];
          if (q < 0) continue;
          const double t = 2.0 / (phantom.rho[static_cast<std::size_t>(cell)] +
                                  phantom.rho[static_cast<std::size_t>(qcell)]) *
                           inv_h2;
          diag -= t;
          trip.emplace_back(p, q, Complex(t, 0.0));
        }
        trip.emplace_back(p, p, Complex(diag, 0.0));
      }
    }
    base_.resize(m, m);
    base_.setFromTriplets(trip.begin(), trip.end());
    base_.makeCompressed();
    diag_pos_.resize(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      bool found = false;
      for (auto idx = base_.outerIndexPtr()[k]; idx < base_.outerIndexPtr()[k + 1]; ++idx) {
        if (base_.innerIndexPtr()[idx] == k) {
          diag_pos_[static_cast<std::size_t>(k)] = idx;
          found = true;
          break;
        }
      }
      if (!found)
        throw std::logic_error("HelmholtzAssembler: missing diagonal entry");
    }

    aperture_unknowns_.resize(phantom.sensors.size());
    for (std::size_t s = 0; s < phantom.sensors.size(); ++s) {
      for (int cell : phantom.sensors[s].aperture_cells)
        aperture_unknowns_[s].push_back(map_->cell_to_unknown[static_cast<std::size_t>(cell)]);
    }
  }

  const SolverSettings& settings() const { return settings_; }
  std::shared_ptr<const GridMap> map() const { return map_; }
  double grid_h() const { return h_; }
  double min_speed() const { return min_speed_; }
  int sensor_count() const { return static_cast<int>(aperture_unknowns_.size()); }

  double points_per_wavelength(double omega) const {
    const double freq = omega / (2.0 * kPi);
    return min_speed_ / (freq * h_);
  }

  // Accuracy guard: reject frequencies the grid cannot resolve.
  void check_resolvable(double omega) const {
    if (!(omega > 0.0))
      throw SolverError("assemble: omega must be positive", omega);
    const double ppw = points_per_wavelength(omega);
    if (ppw < settings_.min_points_per_wavelength)
      throw SolverError("assemble: only " + io::format_double(ppw) +
                            " points per wavelength in the slowest medium at omega=" +
                            io::format_double(omega) + " (need " +
                            io::format_double(settings_.min_points_per_wavelength) + ")",
                        omega);
  }

  SparseComplex operator_for(double omega) const {
    check_resolvable(omega);
    SparseComplex op = base_;
    const Complex factor = omega * omega * Complex(1.0, settings_.loss_tangent);
    Complex* vals = op.valuePtr();
    for (int u = 0; u < map_->unknowns(); ++u)
      vals[diag_pos_[static_cast<std::size_t>(u)]] += factor * inv_rho_c2_[static_cast<std::size_t>(u)];
    return op;
  }

  // Unit total inward flux spread over the actuator's aperture cells.
  Eigen::VectorXcd aperture_rhs(int actuator) const {
    if (actuator < 0 || actuator >= sensor_count())
      throw std::invalid_argument("aperture_rhs: invalid actuator index");
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(map_->unknowns());
    const auto& cells = aperture_unknowns_[static_cast<std::size_t>(actuator)];
    const double w = -settings_.source_amplitude / (static_cast<double>(cells.size()) * h_ * h_);
    for (int u : cells) b[u] = Complex(w, 0.0);
    return b;
  }

  // Per-cell volumetric source term; used by manufactured-solution oracles
  // and field-snapshot point sources.
  Eigen::VectorXcd volume_rhs(const std::vector<Complex>& per_cell) const {
    if (per_cell.size() != map_->cell_to_unknown.size())
      throw std::invalid_argument("volume_rhs: source vector must cover the full grid");
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(map_->unknowns());
    for (int u = 0; u < map_->unknowns(); ++u)
      b[u] = per_cell[static_cast<std::size_t>(map_->unknown_to_cell[static_cast<std::size_t>(u)])];
    return b;
  }

  const std::vector<int>& aperture_unknowns(int sensor) const {
    return aperture_unknowns_[static_cast<std::size_t>(sensor)];
  }

 private:
  SolverSettings settings_;
  double h_;
  double min_speed_ = 0.0;
  std::shared_ptr<const GridMap> map_;
  SparseComplex base_;
  std::vector<Eigen::Index> diag_pos_;
  std::vector<double> inv_rho_c2_;
  std::vector<std::vector<int>> aperture_unknowns_;
};

inline HelmholtzSystem assemble_system(const RasterPhantom& phantom, double omega, int actuator,
                                       const SolverSettings& settings = {}) {
  HelmholtzAssembler assembler(phantom, settings);
  HelmholtzSystem sys;
  sys.omega = omega;
  sys.op = assembler.operator_for(omega);
  sys.rhs = assembler.aperture_rhs(actuator);
  sys.map = assembler.map();
  return sys;
}

namespace detail {

inline double one_norm(const SparseComplex& a) {
  double best = 0.0;
  for (int k = 0; k < a.outerSize(); ++k) {
    double col = 0.0;
    for (SparseComplex::InnerIterator it(a, k); it; ++it) col += std::abs(it.value());
    best = std::max(best, col);
  }
  return best;
}

// Hager's 1-norm estimator for ||A^-1||. The operator is complex symmetric,
// so transpose solves reuse the same factorization.
template <typename Solver>
double inverse_one_norm_estimate(const Solver& lu, int n) {
  Eigen::VectorXcd x = Eigen::VectorXcd::Constant(n, Complex(1.0 / n, 0.0));
  double gamma = 0.0;
  int last_j = -1;
  for (int iter = 0; iter < 4; ++iter) {
    Eigen::VectorXcd v = lu.solve(x);
    gamma = v.lpNorm<1>();
    Eigen::VectorXcd xi(n);
    for (int i = 0; i < n; ++i) {
      const double m = std::abs(v[i]);
      xi[i] = m > 0.0 ? v[i] / m : Complex(1.0, 0.0);
    }
    Eigen::VectorXcd s = lu.solve(xi);
    int j = 0;
    double smax = 0.0;
    for (int i = 0; i < n; ++i) {
      const double m = std::abs(s[i]);
      if (m > smax) {
        smax = m;
        j = i;
      }
    }
    if (j == last_j || smax <= std::abs(s.dot(x))) break;
    x.setZero();
    x[j] = Complex(1.0, 0.0);
    last_j = j;
  }
  return gamma;
}

}  // namespace detail

// One factorization per frequency, shared by every actuation. Symbolic
// analysis is reused across frequencies since the pattern never changes.
class FrequencySolver {
 public:
  explicit FrequencySolver(const HelmholtzAssembler& assembler) : assembler_(&assembler) {}

  void factorize(double omega) {
    omega_ = omega;
    op_ = assembler_->operator_for(omega);
    if (!analyzed_) {
      lu_.analyzePattern(op_);
      analyzed_ = true;
    }
    lu_.factorize(op_);
    if (lu_.info() != Eigen::Success)
      throw SolverError("solve: factorization failed (interior resonance?) at omega=" +
                            io::format_double(omega),
                        omega);
    op_norm1_ = detail::one_norm(op_);
  }

  // Relative residual of x against b; one refinement pass if it misses tol.
  double solve_checked(const Eigen::VectorXcd& b, Eigen::VectorXcd& x) const {
    x = lu_.solve(b);
    const double bnorm = b.lpNorm<Eigen::Infinity>();
    if (bnorm == 0.0) {
      x.setZero();
      return 0.0;
    }
    Eigen::VectorXcd r = b - op_ * x;
    double res = r.lpNorm<Eigen::Infinity>() / bnorm;
    if (res > assembler_->settings().residual_tol) {
      x += lu_.solve(r);
      r = b - op_ * x;
      res = r.lpNorm<Eigen::Infinity>() / bnorm;
    }
    if (!x.allFinite())
      throw SolverError("solve: non-finite field at omega=" + io::format_double(omega_), omega_);
    return res;
  }

  double condition_estimate() const {
    return op_norm1_ * detail::inverse_one_norm_estimate(lu_, static_cast<int>(op_.rows()));
  }

  double omega() const { return omega_; }
  const SparseComplex& current_operator() const { return op_; }

 private:
  const HelmholtzAssembler* assembler_;
  Eigen::SparseLU<SparseComplex> lu_;
  SparseComplex op_;
  double omega_ = 0.0;
  double op_norm1_ = 0.0;
  bool analyzed_ = false;
};

inline FieldSolution solve_field(const HelmholtzSystem& system, const SolverSettings& settings = {}) {
  Eigen::SparseLU<SparseComplex> lu;
  lu.compute(system.op);
  if (lu.info() != Eigen::Success)
    throw SolverError("solve_field: factorization failed (interior resonance?) at omega=" +
                          io::format_double(system.omega),
                      system.omega);
  Eigen::VectorXcd x = lu.solve(system.rhs);

  FieldSolution out;
  out.omega = system.omega;
  const double bnorm = system.rhs.lpNorm<Eigen::Infinity>();
  if (bnorm == 0.0) {
    x.setZero();
  } else {
    Eigen::VectorXcd r = system.rhs - system.op * x;
    out.residual = r.lpNorm<Eigen::Infinity>() / bnorm;
    if (out.residual > settings.residual_tol) {
      x += lu.solve(r);
      r = system.rhs - system.op * x;
      out.residual = r.lpNorm<Eigen::Infinity>() / bnorm;
      if (out.residual > settings.residual_tol) out.quality |= kQualityResidual;
    }
  }
  if (!x.allFinite())
    throw SolverError("solve_field: non-finite field at omega=" + io::format_double(system.omega),
                      system.omega);
  if (settings.estimate_condition) {
    out.condition_estimate = detail::one_norm(system.op) *
                             detail::inverse_one_norm_estimate(lu, static_cast<int>(x.size()));
    if (out.condition_estimate > settings.condition_warn) out.quality |= kQualityNearSingular;
  }

  out.values.assign(system.map->cell_to_unknown.size(), Complex(0.0, 0.0));
  for (int u = 0; u < system.map->unknowns(); ++u)
    out.values[static_cast<std::size_t>(system.map->unknown_to_cell[static_cast<std::size_t>(u)])] = x[u];
  return out;
}

// Aperture-averaged complex reading at every sensor, self-channel included.
inline std::vector<ChannelReading> sample_channels(const FieldSolution& field,
                                                   const RasterPhantom& phantom, int actuator) {
  if (actuator < 0 || actuator >= static_cast<int>(phantom.sensors.size()))
    throw std::invalid_argument("sample_channels: invalid actuator index");
  if (field.values.size() != phantom.region.size())
    throw std::invalid_argument("sample_channels: field does not match phantom grid");
  std::vector<ChannelReading> out;
  out.reserve(phantom.sensors.size());
  for (const auto& s : phantom.sensors) {
    Complex sum(0.0, 0.0);
    for (int cell : s.aperture_cells) sum += field.values[static_cast<std::size_t>(cell)];
    out.push_back(ChannelReading{s.index, sum / static_cast<double>(s.aperture_cells.size())});
  }
  return out;
}

// Channel-by-frequency response of one fixation condition.
struct TransferMatrix {
  int sensor_count = 0;
  std::vector<int> actuators;
  std::vector<int> receivers;
  std::vector<double> frequencies;
  Eigen::MatrixXcd values;   // (|actuators| * |receivers|) x |frequencies|
  std::vector<int> quality;  // per-frequency flag bits
  std::string config_id;
  std::string config_line;
  std::string plan_hash;
  double grid_h = 0.0;
  int nx = 0, ny = 0;
  double loss_tangent = 0.0;
  double source_amplitude = 1.0;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }

  // Row of the (actuator, receiver) pair given by positions in the plan lists.
  int row_index(int a_pos, int r_pos) const {
    return a_pos * static_cast<int>(receivers.size()) + r_pos;
  }
  // Channel id actuator*N + receiver encoded by a row.
  int channel_id(int row) const {
    const int nr = static_cast<int>(receivers.size());
    return actuators[static_cast<std::size_t>(row / nr)] * sensor_count +
           receivers[static_cast<std::size_t>(row % nr)];
  }
};

struct TransferProvenance {
  std::string config_id;
  std::string config_line;
};

// Full actuation rotation over the sweep plan. Frequencies are the parallel
// unit; every task writes into its own column, so results do not depend on
// scheduling order or worker count.
inline TransferMatrix transfer_matrix(const RasterPhantom& phantom, const SweepPlan& plan,
                                      const SolverSettings& settings = {}, int jobs = 1,
                                      const TransferProvenance& prov = {}) {
  plan.validate(static_cast<int>(phantom.sensors.size()));
  HelmholtzAssembler assembler(phantom, settings);
  // Guard the whole plan up front so a bad plan fails before any solve.
  try {
    assembler.check_resolvable(2.0 * kPi * plan.frequencies.back());
  } catch (const SolverError& e) {
    throw SolverError("config '" + prov.config_id + "': " + e.what(), e.omega, e.actuator);
  }

  TransferMatrix tm;
  tm.sensor_count = static_cast<int>(phantom.sensors.size());
  tm.actuators = plan.actuators;
  tm.receivers = plan.receivers;
  tm.frequencies = plan.frequencies;
  tm.values.resize(plan.rows(), static_cast<Eigen::Index>(plan.frequencies.size()));
  tm.quality.assign(plan.frequencies.size(), 0);
  tm.config_id = prov.config_id;
  tm.config_line = prov.config_line;
  tm.plan_hash = plan.hash();
  tm.grid_h = phantom.h;
  tm.nx = phantom.nx;
  tm.ny = phantom.ny;
  tm.loss_tangent = settings.loss_tangent;
  tm.source_amplitude = settings.source_amplitude;

  if (jobs < 1) jobs = static_cast<int>(std::thread::hardware_concurrency());
  if (jobs < 1) jobs = 1;
  jobs = std::min<int>(jobs, static_cast<int>(plan.frequencies.size()));

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    FrequencySolver solver(assembler);
    Eigen::VectorXcd x;
    while (true) {
      const std::size_t fi = next.fetch_add(1);
      if (fi >= plan.frequencies.size()) break;
      try {
        const double omega = 2.0 * kPi * plan.frequencies[fi];
        solver.factorize(omega);
        int flags = 0;
        for (std::size_t ap = 0; ap < plan.actuators.size(); ++ap) {
          const Eigen::VectorXcd b = assembler.aperture_rhs(plan.actuators[ap]);
          const double res = solver.solve_checked(b, x);
          if (res > settings.residual_tol) flags |= kQualityResidual;
          for (std::size_t rp = 0; rp < plan.receivers.size(); ++rp) {
            const auto& cells = assembler.aperture_unknowns(plan.receivers[rp]);
            Complex sum(0.0, 0.0);
            for (int u : cells) sum += x[u];
            tm.values(tm.row_index(static_cast<int>(ap), static_cast<int>(rp)),
                      static_cast<Eigen::Index>(fi)) = sum / static_cast<double>(cells.size());
          }
        }
        if (settings.estimate_condition &&
            solver.condition_estimate() > settings.condition_warn)
          flags |= kQualityNearSingular;
        tm.quality[fi] = flags;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(plan.frequencies.size());
        break;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) {
    try {
      std::rethrow_exception(first_error);
    } catch (const SolverError& e) {
      throw SolverError("config '" + prov.config_id + "': " + e.what(), e.omega, e.actuator);
    }
  }
  return tm;
}

}  // namespace sonosig
