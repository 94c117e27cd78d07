#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rollcast/tensor.hpp"

namespace rollcast {

constexpr int kDaysPerYear = 365;  // no leap days

/// Raised on inconsistent trajectories, grids or year ranges.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Gridded-field geometry: H rows with latitude centers, W columns,
/// V variables.
struct GridSpec {
  std::size_t H = 0, W = 0, V = 1;
  std::vector<double> latitudes;  // degrees, strictly increasing, |lat| < 90

  static GridSpec uniform(std::size_t H, std::size_t W, std::size_t V = 1);
  void validate() const;
  std::size_t cells() const { return V * H * W; }
  bool operator==(const GridSpec& o) const = default;
};

/// Time-ordered sequence of daily gridded states.
struct Trajectory {
  GridSpec grid;
  std::int64_t start_day = 0;  // absolute day index; day-of-year = day % 365
  // states: T x V x H x W row-major
  std::vector<Tensor> states;

  std::size_t days() const { return states.size(); }
  int day_of_year(std::size_t t) const {
    return static_cast<int>((start_day + static_cast<std::int64_t>(t)) % kDaysPerYear);
  }
  void validate() const;
};

/// Per day-of-year mean of the training record, smoothed over a centered
/// circular window.
struct ClimatologyTable {
  GridSpec grid;
  int window = 11;  // odd, days
  std::vector<Tensor> table;  // 365 entries of V*H*W

  const Tensor& at_doy(int doy) const { return table[static_cast<std::size_t>(doy)]; }
};

/// Anomalies A_t = X_t - C(dayofyear(t)); adding the table back reconstructs
/// the trajectory bitwise.
struct AnomalySeries {
  GridSpec grid;
  std::int64_t start_day = 0;
  std::vector<Tensor> values;
};

// ---- simulators ---------------------------------------------------------

struct Lorenz63Params {
  double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
};

/// RK4 integration of Lorenz-63; one recorded snapshot every `record_every`
/// steps (the initial state is snapshot 0). Grid is V=3, H=1, W=1.
Trajectory simulate_l63(const Lorenz63Params& p, const std::array<double, 3>& y0,
                        double dt, std::size_t n_steps, std::size_t record_every);

/// Lorenz-63 tendency and its state Jacobian (for diagnostics oracles).
std::array<double, 3> l63_tendency(const Lorenz63Params& p,
                                   const std::array<double, 3>& y);
void l63_jacobian(const Lorenz63Params& p, const std::array<double, 3>& y,
                  double J[3][3]);

struct ChannelParams {
  double f0 = 8.0;        // base Lorenz-96 forcing (chaotic regime)
  double season_amp = 2.0;  // A: annual-cycle amplitude of the forcing
  double dt = 0.025;        // RK4 substep, model-time units (must be <= 0.05)
  double time_per_day = 0.05;  // model-time advanced per calendar day
  std::uint64_t seed = 1;
  std::int64_t start_day = 0;
};

/// Seasonally forced latitude channel: every (variable, row) pair is an
/// independent Lorenz-96 ring of size W with forcing
///   F(row, t) = f0 + season_amp * cos(lat_row) * sin(2*pi*dayofyear(t)/365).
/// Daily snapshots after `n_days` days of RK4 integration.
Trajectory simulate_channel(const GridSpec& grid, const ChannelParams& p,
                            std::size_t n_days);

// ---- climatology & anomalies -------------------------------------------

/// Cross-year day-of-year mean over all given trajectories, then a centered
/// circular moving average of length `window` (odd). Requires at least two
/// full years of total coverage.
ClimatologyTable compute_climatology(const std::vector<const Trajectory*>& trajs,
                                     int window = 11);
ClimatologyTable compute_climatology(const Trajectory& traj, int window = 11);

AnomalySeries anomalies(const Trajectory& traj, const ClimatologyTable& clim);

/// Contiguous year ranges (1-based, inclusive) relative to the trajectory
/// start; ranges must be disjoint and inside coverage.
struct YearRange {
  int first = 1, last = 1;
  std::size_t n_years() const { return static_cast<std::size_t>(last - first + 1); }
};

std::pair<Trajectory, Trajectory> split_dataset(const Trajectory& traj,
                                                const YearRange& train_years,
                                                const YearRange& test_years);

// ---- trajectory file format ---------------------------------------------
// magic "RCTJ", version u32, start-day u64, T u64, V u64, H u64, W u64,
// H float-64 latitudes, then T*V*H*W float-64 values little-endian (t-major).

void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

}  // namespace rollcast
