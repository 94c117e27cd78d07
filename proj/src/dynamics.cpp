#include "rollcast/dynamics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "rollcast/io_util.hpp"
#include "rollcast/rng.hpp"

namespace rollcast {

GridSpec GridSpec::uniform(std::size_t H, std::size_t W, std::size_t V) {
  GridSpec g;
  g.H = H;
  g.W = W;
  g.V = V;
  g.latitudes.resize(H);
  for (std::size_t i = 0; i < H; ++i) {
    g.latitudes[i] = -90.0 + (static_cast<double>(i) + 0.5) * 180.0 / static_cast<double>(H);
  }
  g.validate();
  return g;
}

void GridSpec::validate() const {
  if (H * W * V == 0) throw DataError("GridSpec: H*W*V must be positive");
  if (latitudes.size() != H) throw DataError("GridSpec: need one latitude per row");
  for (std::size_t i = 0; i < H; ++i) {
    if (std::abs(latitudes[i]) >= 90.0) {
      throw DataError("GridSpec: |latitude| must be < 90");
    }
    if (i > 0 && latitudes[i] <= latitudes[i - 1]) {
      throw DataError("GridSpec: latitudes must be strictly increasing");
    }
  }
}

void Trajectory::validate() const {
  grid.validate();
  if (states.empty()) throw DataError("Trajectory: needs at least one day");
  for (std::size_t t = 0; t < states.size(); ++t) {
    if (states[t].size() != grid.cells()) {
      throw DataError("Trajectory: state size mismatch at day " + std::to_string(t));
    }
    if (!states[t].all_finite()) {
      throw DataError("Trajectory: non-finite state at day " + std::to_string(t));
    }
  }
}

// ---- Lorenz-63 -----------------------------------------------------------

std::array<double, 3> l63_tendency(const Lorenz63Params& p,
                                   const std::array<double, 3>& y) {
  return {p.sigma * (y[1] - y[0]), y[0] * (p.rho - y[2]) - y[1],
          y[0] * y[1] - p.beta * y[2]};
}

void l63_jacobian(const Lorenz63Params& p, const std::array<double, 3>& y,
                  double J[3][3]) {
  J[0][0] = -p.sigma; J[0][1] = p.sigma;      J[0][2] = 0.0;
  J[1][0] = p.rho - y[2]; J[1][1] = -1.0;     J[1][2] = -y[0];
  J[2][0] = y[1];     J[2][1] = y[0];         J[2][2] = -p.beta;
}

namespace {

std::array<double, 3> rk4_l63(const Lorenz63Params& p, std::array<double, 3> y,
                              double dt) {
  auto k1 = l63_tendency(p, y);
  std::array<double, 3> tmp;
  for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * dt * k1[i];
  auto k2 = l63_tendency(p, tmp);
  for (int i = 0; i < 3; ++i) tmp[i] = y[i] + 0.5 * dt * k2[i];
  auto k3 = l63_tendency(p, tmp);
  for (int i = 0; i < 3; ++i) tmp[i] = y[i] + dt * k3[i];
  auto k4 = l63_tendency(p, tmp);
  for (int i = 0; i < 3; ++i) {
    y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return y;
}

}  // namespace

Trajectory simulate_l63(const Lorenz63Params& p, const std::array<double, 3>& y0,
                        double dt, std::size_t n_steps, std::size_t record_every) {
  if (!(dt > 0)) throw DataError("simulate_l63: dt must be > 0");
  if (record_every == 0) throw DataError("simulate_l63: record_every must be >= 1");
  Trajectory traj;
  traj.grid.H = 1;
  traj.grid.W = 1;
  traj.grid.V = 3;
  traj.grid.latitudes = {0.0};
  auto y = y0;
  auto record = [&](const std::array<double, 3>& s) {
    traj.states.push_back(Tensor({3, 1, 1}, {s[0], s[1], s[2]}));
  };
  record(y);
  for (std::size_t s = 1; s <= n_steps; ++s) {
    y = rk4_l63(p, y, dt);
    for (double v : y) {
      if (!std::isfinite(v)) {
        throw DataError("simulate_l63: non-finite state at step " + std::to_string(s));
      }
    }
    if (s % record_every == 0) record(y);
  }
  return traj;
}

// ---- seasonal Lorenz-96 channel ------------------------------------------

namespace {

// Lorenz-96 tendency for one ring: dx_i = (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F
void l96_tendency(const double* x, double f, std::size_t w, double* out) {
  for (std::size_t i = 0; i < w; ++i) {
    std::size_t ip1 = (i + 1) % w;
    std::size_t im1 = (i + w - 1) % w;
    std::size_t im2 = (i + w - 2) % w;
    out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + f;
  }
}

void rk4_l96(double* x, double f, std::size_t w, double dt,
             std::vector<double>& scratch) {
  scratch.resize(5 * w);
  double* k1 = scratch.data();
  double* k2 = k1 + w;
  double* k3 = k2 + w;
  double* k4 = k3 + w;
  double* tmp = k4 + w;
  l96_tendency(x, f, w, k1);
  for (std::size_t i = 0; i < w; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  l96_tendency(tmp, f, w, k2);
  for (std::size_t i = 0; i < w; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  l96_tendency(tmp, f, w, k3);
  for (std::size_t i = 0; i < w; ++i) tmp[i] = x[i] + dt * k3[i];
  l96_tendency(tmp, f, w, k4);
  for (std::size_t i = 0; i < w; ++i) {
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

}  // namespace

Trajectory simulate_channel(const GridSpec& grid, const ChannelParams& p,
                            std::size_t n_days) {
  grid.validate();
  if (grid.W < 4) throw DataError("simulate_channel: Lorenz-96 needs W >= 4 sites");
  if (!(p.dt > 0) || p.dt > 0.05) {
    throw DataError("simulate_channel: dt must be in (0, 0.05]");
  }
  if (n_days == 0) throw DataError("simulate_channel: n_days must be >= 1");

  std::size_t substeps = static_cast<std::size_t>(std::ceil(p.time_per_day / p.dt - 1e-12));
  substeps = std::max<std::size_t>(substeps, 1);
  double dt = p.time_per_day / static_cast<double>(substeps);

  Trajectory traj;
  traj.grid = grid;
  traj.start_day = p.start_day;

  // state: one ring per (variable, row)
  Tensor state({grid.V, grid.H, grid.W});
  Rng rng(Rng::derive(p.seed, 0xC4A11EFULL));
  for (std::size_t i = 0; i < state.size(); ++i) {
    state[i] = p.f0 + 0.01 * (rng.uniform() - 0.5);
  }

  std::vector<double> scratch;
  auto snapshot = [&]() { traj.states.push_back(state); };
  snapshot();  // day 0
  for (std::size_t day = 1; day < n_days; ++day) {
    int doy = static_cast<int>((p.start_day + static_cast<std::int64_t>(day - 1)) %
                               kDaysPerYear);
    double season = std::sin(2.0 * M_PI * static_cast<double>(doy) /
                             static_cast<double>(kDaysPerYear));
    for (std::size_t v = 0; v < grid.V; ++v) {
      for (std::size_t h = 0; h < grid.H; ++h) {
        double lat_rad = grid.latitudes[h] * M_PI / 180.0;
        double f = p.f0 + p.season_amp * std::cos(lat_rad) * season;
        double* ring = state.data() + (v * grid.H + h) * grid.W;
        for (std::size_t s = 0; s < substeps; ++s) {
          rk4_l96(ring, f, grid.W, dt, scratch);
        }
      }
    }
    if (!state.all_finite()) {
      throw DataError("simulate_channel: non-finite state at day " + std::to_string(day));
    }
    snapshot();
  }
  return traj;
}

// ---- climatology ----------------------------------------------------------

ClimatologyTable compute_climatology(const std::vector<const Trajectory*>& trajs,
                                     int window) {
  if (trajs.empty()) throw DataError("compute_climatology: no trajectories");
  if (window < 1 || window % 2 == 0) {
    throw DataError("compute_climatology: window must be odd and >= 1");
  }
  const GridSpec& grid = trajs.front()->grid;
  std::size_t cells = grid.cells();
  std::size_t total_days = 0;
  for (const Trajectory* t : trajs) {
    if (!(t->grid == grid)) throw DataError("compute_climatology: grid mismatch");
    total_days += t->days();
  }
  if (total_days < 2 * kDaysPerYear) {
    throw DataError("compute_climatology: need at least two full years of coverage");
  }

  // cross-year mean per day-of-year
  std::vector<Tensor> sum(kDaysPerYear, Tensor({grid.V, grid.H, grid.W}));
  std::vector<std::size_t> count(kDaysPerYear, 0);
  for (const Trajectory* traj : trajs) {
    for (std::size_t t = 0; t < traj->days(); ++t) {
      int doy = traj->day_of_year(t);
      ++count[static_cast<std::size_t>(doy)];
      Tensor& acc = sum[static_cast<std::size_t>(doy)];
      const Tensor& st = traj->states[t];
      for (std::size_t i = 0; i < cells; ++i) acc[i] += st[i];
    }
  }
  for (int d = 0; d < kDaysPerYear; ++d) {
    if (count[static_cast<std::size_t>(d)] == 0) {
      throw DataError("compute_climatology: no samples for day-of-year " +
                      std::to_string(d));
    }
    Tensor& acc = sum[static_cast<std::size_t>(d)];
    double inv = 1.0 / static_cast<double>(count[static_cast<std::size_t>(d)]);
    for (std::size_t i = 0; i < cells; ++i) acc[i] *= inv;
  }

  // centered circular moving average
  ClimatologyTable out;
  out.grid = grid;
  out.window = window;
  out.table.assign(kDaysPerYear, Tensor({grid.V, grid.H, grid.W}));
  int half = window / 2;
  double inv_w = 1.0 / static_cast<double>(window);
  for (int d = 0; d < kDaysPerYear; ++d) {
    Tensor& dst = out.table[static_cast<std::size_t>(d)];
    for (int k = -half; k <= half; ++k) {
      int src = ((d + k) % kDaysPerYear + kDaysPerYear) % kDaysPerYear;
      const Tensor& s = sum[static_cast<std::size_t>(src)];
      for (std::size_t i = 0; i < cells; ++i) dst[i] += s[i];
    }
    for (std::size_t i = 0; i < cells; ++i) dst[i] *= inv_w;
  }
  return out;
}

ClimatologyTable compute_climatology(const Trajectory& traj, int window) {
  return compute_climatology(std::vector<const Trajectory*>{&traj}, window);
}

AnomalySeries anomalies(const Trajectory& traj, const ClimatologyTable& clim) {
  if (!(traj.grid == clim.grid)) throw DataError("anomalies: grid mismatch");
  AnomalySeries out;
  out.grid = traj.grid;
  out.start_day = traj.start_day;
  out.values.reserve(traj.days());
  for (std::size_t t = 0; t < traj.days(); ++t) {
    const Tensor& c = clim.at_doy(traj.day_of_year(t));
    Tensor a = traj.states[t];
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= c[i];
    out.values.push_back(std::move(a));
  }
  return out;
}

std::pair<Trajectory, Trajectory> split_dataset(const Trajectory& traj,
                                                const YearRange& train_years,
                                                const YearRange& test_years) {
  auto slice = [&](const YearRange& r, const char* what) {
    if (r.first < 1 || r.last < r.first) {
      throw DataError(std::string("split_dataset: invalid ") + what + " year range");
    }
    std::size_t d0 = static_cast<std::size_t>(r.first - 1) * kDaysPerYear;
    std::size_t d1 = static_cast<std::size_t>(r.last) * kDaysPerYear;
    if (d1 > traj.days()) {
      throw DataError(std::string("split_dataset: ") + what +
                      " range exceeds trajectory coverage");
    }
    Trajectory out;
    out.grid = traj.grid;
    out.start_day = traj.start_day + static_cast<std::int64_t>(d0);
    out.states.assign(traj.states.begin() + static_cast<std::ptrdiff_t>(d0),
                      traj.states.begin() + static_cast<std::ptrdiff_t>(d1));
    return out;
  };
  bool overlap = !(train_years.last < test_years.first ||
                   test_years.last < train_years.first);
  if (overlap) throw DataError("split_dataset: year ranges overlap");
  return {slice(train_years, "train"), slice(test_years, "test")};
}

// ---- trajectory i/o -------------------------------------------------------

namespace {
constexpr const char* kTrajMagic = "RCTJ";
constexpr std::uint32_t kTrajVersion = 1;
}  // namespace

void write_trajectory(const std::string& path, const Trajectory& traj) {
  traj.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FileFormatError("cannot open trajectory for writing: " + path);
  os.write(kTrajMagic, 4);
  write_u32(os, kTrajVersion);
  write_u64(os, static_cast<std::uint64_t>(traj.start_day));
  write_u64(os, traj.days());
  write_u64(os, traj.grid.V);
  write_u64(os, traj.grid.H);
  write_u64(os, traj.grid.W);
  for (double lat : traj.grid.latitudes) write_f64(os, lat);
  for (const Tensor& st : traj.states) {
    for (double v : st.vec()) write_f64(os, v);
  }
  if (!os) throw FileFormatError("write failure for trajectory: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileFormatError("cannot open trajectory: " + path);
  check_magic(is, kTrajMagic);
  std::uint32_t version = read_u32(is, "trajectory version");
  if (version != kTrajVersion) {
    throw FileFormatError("unsupported trajectory version " + std::to_string(version));
  }
  Trajectory traj;
  traj.start_day = static_cast<std::int64_t>(read_u64(is, "start day"));
  std::uint64_t T = read_u64(is, "day count");
  traj.grid.V = read_u64(is, "variable count");
  traj.grid.H = read_u64(is, "row count");
  traj.grid.W = read_u64(is, "column count");
  traj.grid.latitudes.resize(traj.grid.H);
  for (auto& lat : traj.grid.latitudes) lat = read_f64(is, "latitude");
  traj.states.reserve(T);
  for (std::uint64_t t = 0; t < T; ++t) {
    Tensor st({traj.grid.V, traj.grid.H, traj.grid.W});
    for (std::size_t i = 0; i < st.size(); ++i) st[i] = read_f64(is, "state value");
    traj.states.push_back(std::move(st));
  }
  // must be exactly at EOF
  is.peek();
  if (!is.eof()) throw FileFormatError("trailing bytes in trajectory file: " + path);
  traj.validate();
  return traj;
}

}  // namespace rollcast
