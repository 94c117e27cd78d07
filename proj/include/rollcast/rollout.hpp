#pragma once

#include <vector>

#include "rollcast/model.hpp"

namespace rollcast {

/// Per-step teacher forcing decisions. In segment mode the rollout is T
/// free-running steps (forcing happens only between segments, i.e. by
/// training on short windows). In periodic mode every k-th step feeds the
/// observed state back instead of the prediction; the replacement always
/// carries a stop-gradient, interrupting the Jacobian product there.
struct TeacherForcingSchedule {
  enum class Mode { Segment, Periodic };
  Mode mode = Mode::Segment;
  int period = 1;  // k, periodic mode only

  static TeacherForcingSchedule segment() { return {Mode::Segment, 1}; }
  static TeacherForcingSchedule periodic(int k) {
    if (k < 1) throw std::invalid_argument("TeacherForcingSchedule: period must be >= 1");
    return {Mode::Periodic, k};
  }

  /// True when the input of step t (1-based) is the observed state
  /// X_{t-1} rather than the previous prediction. Step 1 always starts
  /// from the observed X_0 and is not counted as forcing.
  bool forced_input(int t) const {
    if (t <= 1) return false;
    return mode == Mode::Periodic && (t - 1) % period == 0;
  }
};

/// One rollout batch: start states plus per-step aux encodings, observations,
/// climatology rows and per-cell latitude weights for the losses.
struct RolloutBatch {
  Tensor x0;                     // [B, D]
  std::vector<Tensor> aux;       // T entries, [B, aux_width]
  std::vector<Tensor> observed;  // T entries, [B, D]; raw states X_1..X_T
  std::vector<Tensor> clim;      // T entries, [B, D]; C(dayofyear(t)) per row
  Tensor cell_weights;           // [D]
};

struct RolloutResult {
  std::vector<Tensor> predictions;  // X-hat_1..T, raw states [B, D]
  std::vector<double> step_losses;  // combined loss per step (batch mean)
  std::vector<bool> forced;         // per step: input was teacher-forced
  Var total_loss;                   // sum of per-step combined losses
  double forced_fraction = 0.0;
};

/// Unrolls the model for T steps with teacher forcing. When `with_loss` is
/// set, per-step combined losses against observed anomalies are recorded on
/// the graph. Adapter sets are routed by lead day when `use_adapters`.
RolloutResult rollout(Graph& g, const BoundModel& model, const RolloutBatch& batch,
                      const TeacherForcingSchedule& schedule,
                      bool use_adapters = false, bool with_loss = true);

// ---- losses ---------------------------------------------------------------
// Anomaly fields are [B, N] (or [N]); weights are per-cell, length N, and are
// broadcast across the batch.

/// Latitude-weighted anomaly MSE: mean over samples of
/// (1/N) sum_i w_i (A_i - Ahat_i)^2.
double loss_amse(const Tensor& pred_anom, const Tensor& true_anom,
                 const Tensor& weights);

/// Latitude-weighted PCC loss: mean over samples of
/// 1 - sum(w A Ahat) / sqrt(sum(w A^2) sum(w Ahat^2)). Uncentered; anomalies
/// are already climatology-centered. Zero-norm fields are an error.
double loss_pcc(const Tensor& pred_anom, const Tensor& true_anom,
                const Tensor& weights);

double combined_loss(double amse, double pcc_loss);

/// Graph versions used by the trainer (pred is a live node).
Var loss_amse_graph(Graph& g, Var pred_anom, Var true_anom, Var weights);
Var loss_pcc_graph(Graph& g, Var pred_anom, Var true_anom, Var weights);

}  // namespace rollcast
