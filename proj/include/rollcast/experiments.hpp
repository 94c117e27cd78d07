#pragma once

#include "rollcast/config.hpp"
#include "rollcast/diagnostics.hpp"
#include "rollcast/eval.hpp"
#include "rollcast/linear_lab.hpp"

namespace rollcast {

/// Signals a training divergence that aborted a command (CLI exit code 4).
struct DivergenceAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Generated dataset bundle: split trajectories plus the train-only
/// climatology (computed from train years only, so test data never leaks
/// into the anomalies).
struct Dataset {
  Trajectory train;
  Trajectory test;
  ClimatologyTable clim;
  Tensor weights;  // per-cell latitude weights

  TrainData train_view() const { return {&train, &clim, weights}; }
  TrainData test_view() const { return {&test, &clim, weights}; }
};

/// Simulates, discards spin-up years, splits and builds the climatology.
Dataset build_dataset(const RunConfig& cfg);

BackboneConfig backbone_config(const RunConfig& cfg);
StagePlan stage_plan(const RunConfig& cfg);
StageConfig naive_config(const RunConfig& cfg);

/// generate: writes train.rctj, test.rctj, clim.ckpt and a manifest into
/// `out`; refuses to overwrite existing outputs unless `force`.
void cmd_generate(const RunConfig& cfg, const std::string& out, bool force);

/// train: runs the staged curriculum from generated data; writes per-stage
/// checkpoints and records. `only_stage` 0 runs all stages; `naive` runs the
/// single-stage 42-day baseline with a matched step budget instead.
void cmd_train(const RunConfig& cfg, const std::string& out, int only_stage,
               bool naive);

/// evaluate: PCC/TCC per lead (plus CKA curve and the climatology reference
/// row) for a checkpoint; writes metrics CSV.
void cmd_evaluate(const RunConfig& cfg, const std::string& out,
                  const std::string& checkpoint);

/// diagnose: Jacobian-norm growth curve, Lyapunov estimate and divergence
/// statistics from training records.
void cmd_diagnose(const RunConfig& cfg, const std::string& out,
                  const std::string& checkpoint);

/// linear-lab: stability sweep plus a single-cell trace.
void cmd_linear_lab(const RunConfig& cfg, const std::string& out);

// helpers shared with the acceptance suite
std::map<std::string, Tensor> load_model_file(const std::string& path,
                                              const BackboneConfig& cfg,
                                              ModelParams& params, AdapterBank& bank);
void save_model_file(const std::string& path, const ModelParams& params,
                     const AdapterBank& bank);
void write_climatology_file(const std::string& path, const ClimatologyTable& clim);
ClimatologyTable read_climatology_file(const std::string& path);

}  // namespace rollcast
