#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace rollcast {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-stage knobs; StagePlan construction lives in experiments.
struct StageKnobs {
  int T = 1;
  int epochs = 0;
  int batch = 16;
  std::string lr_kind = "constant";  // constant | cosine
  double lr_peak = 1e-4;
  double lr_min = 1e-4;
  double warmup_frac = 0.05;
  double weight_decay = 0.0;
  double grad_clip = 0.0;
  std::string mode = "segment";  // segment | periodic
  int period = 7;
  bool full_ft = false;  // stage 3 ablation: train backbone too
};

/// Resolved experiment configuration. Every field has a default; the parser
/// rejects unknown keys.
struct RunConfig {
  // master seed; component seeds derive from it unless set explicitly
  std::uint64_t run_seed = 1;

  // data
  std::string data_system = "channel";  // channel | lorenz63
  std::size_t grid_h = 16, grid_w = 32, grid_v = 1;
  int train_years = 10, test_years = 2, spinup_years = 1;
  std::uint64_t data_seed = 0;  // 0 = derive from run seed
  double f0 = 8.0, season_amp = 2.0, dt = 0.025, time_per_day = 0.05;
  int clim_window = 11;

  // model
  std::string model_kind = "mlp";  // mlp | patch_transformer
  std::size_t hidden = 256, depth = 2, patch = 4, heads = 2;
  double init_gain = 1.0;
  std::uint64_t model_seed = 0;  // 0 = derive

  // adapters
  std::size_t adapter_sets = 6;
  double adapter_ratio = 0.04;

  // training
  std::uint64_t train_seed = 0;  // 0 = derive
  StageKnobs stage1{1, 16, 32, "constant", 1e-4, 1e-4, 0.0, 0.0, 0.0, "segment", 7, false};
  StageKnobs stage2{7, 6, 16, "cosine", 2e-5, 2e-6, 0.05, 0.0, 0.0, "segment", 7, false};
  StageKnobs stage3{42, 3, 8, "cosine", 1e-4, 1e-5, 0.05, 0.0, 0.0, "segment", 7, false};
  StageKnobs naive{42, 0, 8, "constant", 1e-4, 1e-4, 0.0, 0.0, 0.0, "segment", 7, false};

  // evaluation
  int eval_stride = 2;
  int eval_batch = 32;
  int cka_stride = 8;
  std::string eval_metrics = "pcc,tcc,cka";

  // linear lab
  std::size_t lab_d = 3;
  std::string lab_depths = "2,4,8,16,32,64";
  std::string lab_initial_losses = "1e-4,1e-3,1e-2,1e-1,1,4";
  long lab_base_iters = 20000;
  double lab_eta_slack = 0.1;
  std::uint64_t lab_seed = 7;
  std::size_t lab_trace_depth = 8;
  double lab_trace_loss0 = 1e-3;

  std::uint64_t seed_for(const char* role) const;
};

/// Parses the line-oriented `section.key = value` format. Later keys
/// override earlier ones; `#` starts a comment; `manifest.*` keys are
/// accepted and ignored so manifests replay as configs.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
void apply_config_line(RunConfig& cfg, const std::string& line);

/// All registry keys with the resolved values, sorted; the manifest body.
std::string dump_config(const RunConfig& cfg);

/// Resolved config plus provenance; loadable as a config file.
void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& command,
                    const std::map<std::string, std::string>& extra);

/// FNV-1a 64-bit digest of a file, as 16 hex digits.
std::string file_digest(const std::string& path);

std::vector<double> parse_double_list(const std::string& csv);
std::vector<std::size_t> parse_size_list(const std::string& csv);

}  // namespace rollcast
