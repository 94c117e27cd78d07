#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "rollcast/dynamics.hpp"
#include "rollcast/graph.hpp"
#include "rollcast/tensor.hpp"

namespace rollcast {

constexpr int kMaxLead = 42;      // rolling horizon, days
constexpr int kAdapterSpan = 7;   // days served by one adapter set
constexpr std::size_t kAdapterSets = 6;

struct BackboneConfig {
  enum class Kind { Mlp, PatchTransformer };
  Kind kind = Kind::Mlp;
  GridSpec grid;
  std::size_t hidden = 256;  // mlp hidden width / transformer embed dim
  std::size_t depth = 2;     // mlp hidden layers / transformer blocks
  std::size_t patch = 4;     // transformer only
  std::size_t heads = 2;     // transformer only
  std::size_t aux_width = 3; // day-of-year (sin, cos) + scaled lead time
  double init_gain = 1.0;

  std::size_t state_dim() const { return grid.cells(); }
  void validate() const;
};

/// Closed-form trainable-parameter count for a config.
std::size_t param_count(const BackboneConfig& config);

struct ModelParams {
  BackboneConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, Tensor> tensors;
};

/// Deterministic scaled-uniform initialization (Glorot bound times
/// config.init_gain); biases and norm offsets start at zero, norm gains at 1.
ModelParams model_init(const BackboneConfig& config, std::uint64_t seed);

/// 6 indexed sets of bottleneck adapters, one per backbone block, stored as
/// "adapter/<set>/<block>/<role>". Up-projections are zero-initialized so a
/// fresh bank leaves the backbone function unchanged.
struct AdapterBank {
  std::size_t sets = kAdapterSets;
  std::size_t blocks = 0;
  std::size_t width = 0;
  std::size_t bottleneck = 0;
  double ratio = 0.0;  // params(one set) / params(backbone)
  std::map<std::string, Tensor> tensors;
};

/// Builds a bank whose per-set parameter share is within +-0.01 of
/// `target_ratio` (bottleneck solved numerically; throws if unattainable).
/// A nonzero `bottleneck_override` skips the solve.
AdapterBank adapter_bank_init(const BackboneConfig& config, std::uint64_t seed,
                              std::size_t sets = kAdapterSets,
                              double target_ratio = 0.04,
                              std::size_t bottleneck_override = 0);

/// Adapter set serving a lead day in [1, 42]: floor((t-1)/7).
int select_adapter(int lead_day);

/// External inputs s_t: day-of-year as (sin, cos) plus lead-time index
/// scaled to (0, 1].
struct AuxInput {
  double sin_doy = 0.0, cos_doy = 1.0, lead_scaled = 0.0;
  static AuxInput encode(int day_of_year, int lead_day);
};

/// Names trainable in a given stage. Stages 1 and 2 train the backbone;
/// stage 3 trains adapters only unless the full fine-tuning ablation is on.
std::set<std::string> trainable_mask(int stage, const ModelParams& params,
                                     const AdapterBank* bank,
                                     bool full_ft_ablation = false);

/// Model parameters bound as graph leaves for one recorded computation.
struct BoundModel {
  const BackboneConfig* config = nullptr;
  std::map<std::string, Var> vars;
};

BoundModel bind_model(Graph& g, const ModelParams& params,
                      const AdapterBank* bank = nullptr);

/// One residual forecast step on the graph: X-hat = X_prev + net(X_prev, aux).
/// `x` is [B, D], `aux` is [B, aux_width]; `adapter_set` < 0 disables
/// adapters. `features_out`, when given, receives the designated feature
/// layer (last pre-output hidden activation), [B, F].
Var model_step_graph(Graph& g, const BoundModel& model, Var x, Var aux,
                     int adapter_set = -1, Var* features_out = nullptr);

/// Eager convenience wrapper; `x` is [B, D] (or [D] for a single sample).
Tensor model_step(const ModelParams& params, const Tensor& x,
                  const std::vector<AuxInput>& aux,
                  const AdapterBank* bank = nullptr, int adapter_set = -1);

/// Packs per-sample aux encodings into a [B, aux_width] tensor.
Tensor pack_aux(const std::vector<AuxInput>& aux, std::size_t aux_width);

}  // namespace rollcast
