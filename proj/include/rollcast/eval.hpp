#pragma once

#include "rollcast/metrics.hpp"
#include "rollcast/train.hpp"

namespace rollcast {

struct EvalOptions {
  int leads = kMaxLead;
  int start_stride = 1;      // evaluate every n-th start day
  int batch = 32;
  bool use_adapters = false;
  std::string run_id;
};

struct EvalResult {
  MetricSeries pcc;  // per lead day
  MetricSeries tcc;
  std::size_t samples = 0;
  std::size_t excluded_pcc = 0;  // degenerate samples across all leads
  std::size_t excluded_tcc = 0;
};

/// Free-running rollout skill over every start day of the test split
/// (stride-thinned), streamed so memory stays flat.
EvalResult evaluate_rollout(const ModelParams& params, const AdapterBank* bank,
                            const TrainData& test, const EvalOptions& opts);

/// CKA between features of the model applied to the true state X_{t-1} and
/// to its own rolled state Xhat_{t-1}, per lead day over the test set.
MetricSeries cka_rollout_curve(const ModelParams& params, const AdapterBank* bank,
                               const TrainData& test, const EvalOptions& opts);

}  // namespace rollcast
