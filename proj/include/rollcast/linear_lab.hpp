#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rollcast/tensor.hpp"

namespace rollcast {

/// Gradient descent on the shared-weight deep linear model
/// l(Theta) = ||Phi - Theta^L||_F^2.
struct LinearLabConfig {
  std::size_t d = 3;
  std::size_t L = 8;
  Tensor target;           // Phi, d x d
  Tensor init;             // Theta(0); identity when empty
  double eta = 0.0;        // step size; 0 derives it from the eta policy
  double eta_slack = 0.1;  // c = 1 + ||Theta(0) - I||_2 + slack
  long max_iters = 200000;
  double rel_tol = 1e-6;         // converged: l(t) <= rel_tol * l(0)
  double diverge_factor = 1e6;   // diverged: l(t) > factor * l(0) or non-finite
  long record_stride = 0;        // 0 = auto (~1e4 recorded points)
};

struct GdTrace {
  enum class Status { Converged, Diverged, Budget };
  std::vector<long> iters;        // recorded iteration indices
  std::vector<double> loss;       // l(t)
  std::vector<double> radius;     // R(t) = ||Theta(t) - I||_2
  std::vector<double> grad_norm;  // ||grad l||_F
  Status status = Status::Budget;
  long iterations = 0;
  double final_loss = 0.0;
  double initial_loss = 0.0;
  double eta = 0.0;
};

double deep_linear_loss(const Tensor& theta, const Tensor& phi, std::size_t L);

/// grad = -2 sum_{k=0}^{L-1} (Theta^T)^k E (Theta^T)^{L-1-k}, E = Phi - Theta^L.
Tensor deep_linear_grad(const Tensor& theta, const Tensor& phi, std::size_t L);

/// Step-size policy eta = 1 / (3 L^2 d^5 max(c^4, ||Phi||_2)).
double eta_policy(std::size_t d, std::size_t L, const Tensor& phi, double c);

GdTrace run_gd(const LinearLabConfig& cfg);

/// Measured sides of the modified gradient inequality
/// ||grad l||^2 >= 4 L^2 l(Theta) (1 - sigma_min(Theta)). Reported, not
/// asserted: for sigma_min > 1 the right side is negative and vacuous.
struct GradientBoundReport {
  double grad_sq_norm = 0.0;
  double loss = 0.0;
  double lhs_ratio = 0.0;   // ||grad||^2 / (4 L^2 l)
  double rhs_factor = 0.0;  // 1 - sigma_min(Theta)
  double sigma_min = 0.0;
  bool holds = false;       // lhs_ratio >= rhs_factor
};

GradientBoundReport check_gradient_bound(const Tensor& theta, const Tensor& phi,
                                         std::size_t L);

/// One cell of the (L, initial-loss) phase diagram.
struct PhaseCell {
  std::size_t L = 0;
  double initial_loss = 0.0;
  double eta = 0.0;
  GdTrace::Status status = GdTrace::Status::Budget;
  long iterations = 0;
  double final_loss = 0.0;
};

/// Sweeps depth x initial-loss with identity init and targets
/// Phi = I + s * G (seeded G, s chosen so l(0) hits each grid value).
/// The per-cell iteration budget scales with L.
std::vector<PhaseCell> stability_sweep(const std::vector<std::size_t>& depths,
                                       const std::vector<double>& initial_losses,
                                       std::size_t d, long base_iters,
                                       double eta_slack = 0.1,
                                       std::uint64_t seed = 7);

void write_phase_csv(const std::string& path, const std::vector<PhaseCell>& cells);
void write_trace_csv(const std::string& path, const GdTrace& trace);

/// Largest initial loss that converged, per depth (the convergence frontier).
std::vector<std::pair<std::size_t, double>> convergence_frontier(
    const std::vector<PhaseCell>& cells);

}  // namespace rollcast
