#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rollcast/optim.hpp"
#include "rollcast/rollout.hpp"

namespace rollcast {

/// Training-side view of a dataset split.
struct TrainData {
  const Trajectory* traj = nullptr;
  const ClimatologyTable* clim = nullptr;
  Tensor cell_weights;  // [D], latitude weights expanded per cell
};

struct StageConfig {
  std::string name = "stage";
  int index = 1;  // 1..3, selects the trainable mask
  int T = 1;
  TeacherForcingSchedule schedule = TeacherForcingSchedule::segment();
  enum class Mask { Backbone, AdapterOnly, All } mask = Mask::Backbone;
  LrSchedule lr = LrSchedule::constant(1e-4);
  int epochs = 1;
  int batch = 16;
  double warmup_frac = 0.05;  // cosine schedules only
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  bool use_adapters = false;
  long max_steps = 0;  // optimizer-step budget cap; 0 = run all epochs
};

/// Three-stage curriculum: T grows 1 -> 7 -> 42, stage 3 trains adapters only
/// by default.
struct StagePlan {
  std::vector<StageConfig> stages;
  std::uint64_t seed = 0;
  void validate() const;
};

struct TrainRecord {
  std::string stage;
  std::vector<double> loss;             // per optimizer step (sum over rollout steps)
  std::vector<double> grad_norm;        // pre-clip global norm over trainables
  std::vector<double> lr_used;
  std::vector<double> forced_fraction;
  double wall_time_s = 0.0;
  bool diverged = false;
  long diverged_step = -1;
};

/// Number of optimizer steps one epoch takes (all start days represented).
long steps_per_epoch(std::size_t n_days, int T, int batch);
/// Total step-work (optimizer steps x T) of a plan on a dataset.
long plan_step_work(const StagePlan& plan, std::size_t n_days);

/// Minimizes the combined anomaly loss summed over all rollout steps.
/// Windows are drawn as uniformly shuffled start days, every start day
/// represented once per epoch. Deterministic per seed. On divergence the
/// record is returned intact with `diverged` set and parameters left at the
/// last finite state.
TrainRecord train_stage(const StageConfig& cfg, const TrainData& data,
                        ModelParams& params, AdapterBank* bank,
                        std::uint64_t seed);

struct StageSnapshot {
  ModelParams params;
  AdapterBank bank;
  TrainRecord record;
};

struct MultistageResult {
  std::vector<StageSnapshot> stages;  // one snapshot per completed stage
  bool diverged = false;
};

/// Runs the staged curriculum, checkpointing after each stage when
/// `checkpoint_dir` is non-empty (files <dir>/<stage-name>.ckpt).
MultistageResult run_multistage(const StagePlan& plan, const TrainData& data,
                                ModelParams params, AdapterBank bank,
                                const std::string& checkpoint_dir = "");

/// Single-stage 42-day fine-tuning without intermediate stages; full
/// fine-tuning, no forcing. `budget_steps` caps total optimizer steps so the
/// step-work matches a multi-stage run. Divergence is recorded, not thrown.
TrainRecord train_naive_baseline(const TrainData& data, ModelParams& params,
                                 const StageConfig& base_cfg, long budget_steps,
                                 std::uint64_t seed);

/// Default desk-scale plan (paper learning-rate profile is available through
/// the config layer).
StagePlan default_plan(std::uint64_t seed);

void write_train_record_csv(const std::string& path, const TrainRecord& rec);
TrainRecord read_train_record_csv(const std::string& path);

}  // namespace rollcast
