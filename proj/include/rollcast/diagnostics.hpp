#pragma once

#include <functional>

#include "rollcast/train.hpp"

namespace rollcast {

constexpr std::size_t kDenseJacobianGuard = 4096;

/// Step Jacobian J_t = dXhat_t / dXhat_{t-1} over the flattened state.
struct JacobianRecord {
  int step = 0;
  Tensor jacobian;  // [D, D]
  double spectral_norm = 0.0;
};

/// Dense step Jacobian assembled from reverse passes, one output row per
/// pass. Guarded: state dimensions above `dense_guard` are an error advising
/// the power-iteration path.
JacobianRecord jacobian_step(const ModelParams& params, const AdapterBank* bank,
                             int adapter_set, const Tensor& x, const AuxInput& aux,
                             std::size_t dense_guard = kDenseJacobianGuard);

/// Spectral norm by power iteration on A^T A (tol 1e-10, <= 1e4 iterations).
double spectral_norm(const Tensor& a);

/// Jacobian-vector product along an orbit: v -> J_t v at state X_{t-1}.
using StepJvp =
    std::function<Tensor(std::size_t t, const Tensor& state_prev, const Tensor& v)>;

/// Leading Lyapunov exponent of the Jacobian product along an orbit
/// X_0..X_T: (1/T) log ||prod J||_2, estimated by iterated Jacobian-vector
/// products with per-step renormalization (rank-1 QR), which avoids
/// overflow. Steps before `burn_in` align the vector and are excluded from
/// the average. Returns the per-step exponent.
double lyapunov_max(const StepJvp& jvp, const std::vector<Tensor>& orbit,
                    std::size_t burn_in = 0);

/// Model-based JVP via central finite differences (for lyapunov estimates
/// on state dimensions beyond the dense guard).
StepJvp model_fd_jvp(const ModelParams& params, const AdapterBank* bank,
                     bool use_adapters, const std::vector<AuxInput>& aux_per_step,
                     double eps = 1e-6);

/// Per-step log spectral norm of the accumulated Jacobian product
/// log ||J_t ... J_1||_2 for t = 1..T, computed with running normalization.
std::vector<double> jacobian_product_log_norms(const std::vector<Tensor>& jacobians);

/// Explicit BPTT gradient: sum_t (dF_t/dtheta)^T lambda_t with
/// lambda_t = sum_{j>=t} (J_j ... J_{t+1})^T dl_j/dXhat_j, Jacobian products
/// assembled as dense matrices (teacher-forced steps cut the product).
/// Small models only (dense guard applies); T <= 7.
std::map<std::string, Tensor> grad_via_expansion(const ModelParams& params,
                                                 const RolloutBatch& batch,
                                                 const TeacherForcingSchedule& schedule,
                                                 std::size_t dense_guard = kDenseJacobianGuard);

/// Stability statistics from a training record.
struct StabilityReport {
  double max_loss_jump = 0.0;       // max |loss[i+1] - loss[i]|
  double max_window_variance = 0.0; // loss variance over trailing windows
  long grad_spike_count = 0;        // grad norm > 10x trailing median
  long nonfinite_count = 0;
  bool diverged = false;
};

StabilityReport divergence_monitor(const TrainRecord& record);

}  // namespace rollcast
