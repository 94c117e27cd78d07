#include "rollcast/optim.hpp"

#include <cmath>
#include <cstdio>

namespace rollcast {

void AdamW::step(std::map<std::string, Tensor>& params,
                 const std::map<std::string, Tensor>& grads, double lr) {
  if (!(lr > 0)) throw std::invalid_argument("AdamW::step: lr must be > 0");
  for (const auto& [name, g] : grads) {
    auto pit = params.find(name);
    if (pit == params.end()) {
      throw std::invalid_argument("AdamW::step: gradient for unknown parameter '" +
                                  name + "'");
    }
    if (!pit->second.same_shape(g)) {
      throw std::invalid_argument("AdamW::step: shape mismatch for '" + name + "'");
    }
    if (!g.all_finite()) throw DivergenceError(name);
  }
  ++step_count_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    Tensor& m = m_.try_emplace(name, Tensor(p.shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape())).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[i]);
    }
  }
}

double LrSchedule::at(long step) const {
  static bool warned = false;
  long s = step;
  if (s < 0 || (total_steps > 0 && s > total_steps)) {
    if (!warned) {
      std::fprintf(stderr,
                   "warning: lr schedule step %ld outside [0, %ld]; clamping\n",
                   step, total_steps);
      warned = true;
    }
    s = s < 0 ? 0 : total_steps;
  }
  if (kind == Kind::Constant) return peak;
  if (warmup_steps > 0 && s < warmup_steps) {
    return peak * static_cast<double>(s + 1) / static_cast<double>(warmup_steps);
  }
  long span = total_steps - warmup_steps;
  double progress =
      span > 0 ? static_cast<double>(s - warmup_steps) / static_cast<double>(span)
               : 1.0;
  return min + 0.5 * (peak - min) * (1.0 + std::cos(M_PI * progress));
}

}  // namespace rollcast
