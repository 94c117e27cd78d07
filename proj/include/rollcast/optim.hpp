#pragma once

#include <map>
#include <string>

#include "rollcast/tensor.hpp"

namespace rollcast {

/// Thrown when a non-finite gradient reaches the optimizer; carries the name
/// of the offending parameter so the divergence monitor can report it.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& param)
      : std::runtime_error("non-finite gradient for parameter '" + param + "'"),
        param_name(param) {}
  std::string param_name;
};

/// Decoupled-weight-decay Adam. Moment accumulators are created lazily per
/// parameter name and always match the parameter shape.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8,
        double weight_decay = 0.0)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  /// One update over every (param, grad) pair present in `grads`.
  /// Parameters without a gradient entry are left untouched.
  void step(std::map<std::string, Tensor>& params,
            const std::map<std::string, Tensor>& grads, double lr);

  long step_count() const { return step_count_; }
  double weight_decay() const { return weight_decay_; }
  void set_weight_decay(double wd) { weight_decay_ = wd; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  long step_count_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

/// Constant or cosine-decay learning rate with optional linear warmup.
struct LrSchedule {
  enum class Kind { Constant, Cosine };
  Kind kind = Kind::Constant;
  double peak = 1e-4;
  double min = 1e-4;
  long total_steps = 0;
  long warmup_steps = 0;

  static LrSchedule constant(double rate, long total = 0) {
    return {Kind::Constant, rate, rate, total, 0};
  }
  static LrSchedule cosine(double peak, double min, long total, long warmup = 0) {
    return {Kind::Cosine, peak, min, total, warmup};
  }

  /// Rate at an optimizer step in [0, total_steps]; out-of-range steps are
  /// clamped with a one-time warning on stderr.
  double at(long step) const;
};

}  // namespace rollcast
