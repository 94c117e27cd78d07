#include "rollcast/diagnostics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "rollcast/rng.hpp"

namespace rollcast {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> mat_view(const Tensor& t) {
  return Eigen::Map<const RowMat>(t.data(), static_cast<Eigen::Index>(t.shape()[0]),
                                  static_cast<Eigen::Index>(t.shape()[1]));
}

}  // namespace

double spectral_norm(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("spectral_norm: need a rank-2 tensor");
  auto m = mat_view(a);
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.cols());
  v.normalize();
  double prev = 0.0;
  for (int it = 0; it < 10000; ++it) {
    Eigen::VectorXd w = m.transpose() * (m * v);
    double norm = w.norm();
    if (norm == 0.0) return 0.0;
    v = w / norm;
    double est = std::sqrt(norm);
    if (std::abs(est - prev) <= 1e-10 * std::max(1.0, est)) return est;
    prev = est;
  }
  return prev;
}

JacobianRecord jacobian_step(const ModelParams& params, const AdapterBank* bank,
                             int adapter_set, const Tensor& x, const AuxInput& aux,
                             std::size_t dense_guard) {
  std::size_t d = params.config.state_dim();
  if (x.size() != d) {
    throw ShapeError("jacobian_step: state size mismatch: got " + shape_str(x));
  }
  if (d > dense_guard) {
    throw std::invalid_argument(
        "jacobian_step: state dimension " + std::to_string(d) +
        " exceeds the dense guard (" + std::to_string(dense_guard) +
        "); use the power-iteration path (model_fd_jvp + lyapunov_max)");
  }
  Graph g;
  BoundModel model = bind_model(g, params, bank);
  Var xin = g.input("state", x.reshaped({1, d}));
  Var auxv = g.constant(pack_aux({aux}, params.config.aux_width));
  Var out = model_step_graph(g, model, xin, auxv, adapter_set);

  JacobianRecord rec;
  rec.jacobian = Tensor({d, d});
  Tensor seed({1, d});
  for (std::size_t i = 0; i < d; ++i) {
    g.clear_grads();
    seed.fill(0.0);
    seed[i] = 1.0;
    g.backward(out, seed);
    const Tensor& row = g.grad(xin);
    std::copy(row.vec().begin(), row.vec().end(),
              rec.jacobian.vec().begin() + i * d);
  }
  rec.spectral_norm = spectral_norm(rec.jacobian);
  return rec;
}

double lyapunov_max(const StepJvp& jvp, const std::vector<Tensor>& orbit,
                    std::size_t burn_in) {
  if (orbit.size() < 11) {
    throw std::invalid_argument("lyapunov_max: orbit must cover at least 10 steps");
  }
  std::size_t T = orbit.size() - 1;
  if (burn_in >= T) throw std::invalid_argument("lyapunov_max: burn_in >= steps");
  for (const Tensor& s : orbit) {
    if (!s.all_finite()) throw DataError("lyapunov_max: non-finite orbit state");
  }
  // deterministic start vector
  Tensor v({orbit[0].size()});
  Rng rng(0x1A9EULL);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
  double n0 = v.norm2();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= n0;

  double sum_log = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 1; t <= T; ++t) {
    v = jvp(t, orbit[t - 1], v);
    double r = v.norm2();
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw DataError("lyapunov_max: tangent vector collapsed at step " +
                      std::to_string(t));
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= r;
    if (t > burn_in) {
      sum_log += std::log(r);
      ++counted;
    }
  }
  return sum_log / static_cast<double>(counted);
}

StepJvp model_fd_jvp(const ModelParams& params, const AdapterBank* bank,
                     bool use_adapters, const std::vector<AuxInput>& aux_per_step,
                     double eps) {
  return [=, &params](std::size_t t, const Tensor& state, const Tensor& v) {
    if (t == 0 || t > aux_per_step.size()) {
      throw std::out_of_range("model_fd_jvp: step out of range");
    }
    const AuxInput& aux = aux_per_step[t - 1];
    int set = use_adapters ? select_adapter(static_cast<int>(t)) : -1;
    double scale = v.norm2();
    if (scale == 0.0) return Tensor(v.shape());
    Tensor hi = state, lo = state;
    for (std::size_t i = 0; i < state.size(); ++i) {
      hi[i] += eps * v[i] / scale;
      lo[i] -= eps * v[i] / scale;
    }
    Tensor fhi = model_step(params, hi, {aux}, bank, set);
    Tensor flo = model_step(params, lo, {aux}, bank, set);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = (fhi[i] - flo[i]) / (2.0 * eps) * scale;
    }
    return out;
  };
}

std::vector<double> jacobian_product_log_norms(const std::vector<Tensor>& jacobians) {
  if (jacobians.empty()) return {};
  std::size_t d = jacobians.front().shape()[0];
  RowMat prod = RowMat::Identity(static_cast<Eigen::Index>(d),
                                 static_cast<Eigen::Index>(d));
  double log_scale = 0.0;
  std::vector<double> out;
  out.reserve(jacobians.size());
  for (const Tensor& j : jacobians) {
    if (j.rank() != 2 || j.shape()[0] != d || j.shape()[1] != d) {
      throw ShapeError("jacobian_product_log_norms: inconsistent Jacobian shapes");
    }
    prod = mat_view(j) * prod;
    // renormalize by the Frobenius norm to avoid overflow; the spectral norm
    // of the normalized accumulator restores the exact value
    double f = prod.norm();
    if (!(f > 0.0) || !std::isfinite(f)) {
      throw DataError("jacobian_product_log_norms: product degenerated");
    }
    prod /= f;
    log_scale += std::log(f);
    Tensor tmp({d, d});
    Eigen::Map<RowMat>(tmp.data(), prod.rows(), prod.cols()) = prod;
    out.push_back(log_scale + std::log(spectral_norm(tmp)));
  }
  return out;
}

std::map<std::string, Tensor> grad_via_expansion(const ModelParams& params,
                                                 const RolloutBatch& batch,
                                                 const TeacherForcingSchedule& schedule,
                                                 std::size_t dense_guard) {
  std::size_t d = params.config.state_dim();
  std::size_t T = batch.aux.size();
  if (batch.x0.shape()[0] != 1) {
    throw std::invalid_argument("grad_via_expansion: single-sample batches only");
  }
  if (d > dense_guard) {
    throw std::invalid_argument("grad_via_expansion: state dimension exceeds dense guard");
  }
  if (T > 7) {
    throw std::invalid_argument("grad_via_expansion: T <= 7 only (dense products)");
  }

  // forward rollout, remembering each step's input
  std::vector<Tensor> inputs(T), preds(T);
  {
    Tensor prev = batch.x0;
    for (std::size_t t = 1; t <= T; ++t) {
      inputs[t - 1] = schedule.forced_input(static_cast<int>(t))
                          ? batch.observed[t - 2]
                          : prev;
      Graph g;
      BoundModel m = bind_model(g, params, nullptr);
      Var x = g.constant(inputs[t - 1]);
      Var aux = g.constant(batch.aux[t - 1]);
      preds[t - 1] = g.value(model_step_graph(g, m, x, aux, -1));
      prev = preds[t - 1];
    }
  }

  // per step: dense J_t and per-parameter dXhat_t/dtheta rows
  std::vector<RowMat> jac(T);
  std::vector<std::map<std::string, RowMat>> dstep(T);
  for (std::size_t t = 0; t < T; ++t) {
    Graph g;
    BoundModel m = bind_model(g, params, nullptr);
    Var x = g.input("state", inputs[t]);
    Var aux = g.constant(batch.aux[t]);
    Var out = model_step_graph(g, m, x, aux, -1);
    jac[t].resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& [name, tensor] : params.tensors) {
      dstep[t][name].resize(static_cast<Eigen::Index>(d),
                            static_cast<Eigen::Index>(tensor.size()));
    }
    Tensor seed({1, d});
    for (std::size_t i = 0; i < d; ++i) {
      g.clear_grads();
      seed.fill(0.0);
      seed[i] = 1.0;
      g.backward(out, seed);
      const Tensor& row = g.grad(x);
      for (std::size_t c = 0; c < d; ++c) {
        jac[t](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = row[c];
      }
      for (const auto& [name, tensor] : params.tensors) {
        RowMat& dst = dstep[t][name];
        Var leaf = g.leaf(name);
        if (!g.has_grad(leaf)) {
          dst.row(static_cast<Eigen::Index>(i)).setZero();
          continue;
        }
        const Tensor& pg = g.grad(leaf);
        for (std::size_t c = 0; c < pg.size(); ++c) {
          dst(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = pg[c];
        }
      }
    }
  }

  // per-step loss gradients dl_t/dXhat_t
  std::vector<Eigen::VectorXd> dloss(T);
  for (std::size_t t = 0; t < T; ++t) {
    Graph g;
    Var pred = g.input("pred", preds[t]);
    Var clim = g.constant(batch.clim[t]);
    Var pred_anom = g.sub(pred, clim);
    Var true_anom = g.sub(g.constant(batch.observed[t]), clim);
    Var w = g.constant(batch.cell_weights);
    Var amse = loss_amse_graph(g, pred_anom, true_anom, w);
    Var pcc = loss_pcc_graph(g, pred_anom, true_anom, w);
    Var loss = g.scale(g.add(amse, pcc), 0.5);
    g.backward(loss);
    const Tensor& grad = g.grad(pred);
    dloss[t] = Eigen::Map<const Eigen::VectorXd>(grad.data(),
                                                 static_cast<Eigen::Index>(d));
  }

  // adjoints assembled by explicit Jacobian products; a teacher-forced step
  // k cuts every product that crosses it
  std::map<std::string, Tensor> grads;
  for (const auto& [name, tensor] : params.tensors) {
    grads.emplace(name, Tensor(tensor.shape()));
  }
  for (std::size_t t = 1; t <= T; ++t) {
    Eigen::VectorXd lambda = dloss[t - 1];
    RowMat prod = RowMat::Identity(static_cast<Eigen::Index>(d),
                                   static_cast<Eigen::Index>(d));
    for (std::size_t j = t + 1; j <= T; ++j) {
      if (schedule.forced_input(static_cast<int>(j))) break;  // path blocked
      prod = jac[j - 1] * prod;  // dXhat_j / dXhat_t
      lambda += prod.transpose() * dloss[j - 1];
    }
    for (auto& [name, acc] : grads) {
      Eigen::VectorXd contrib = dstep[t - 1][name].transpose() * lambda;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += contrib[static_cast<Eigen::Index>(i)];
    }
  }
  return grads;
}

StabilityReport divergence_monitor(const TrainRecord& record) {
  if (record.loss.empty()) {
    throw std::invalid_argument("divergence_monitor: empty record");
  }
  StabilityReport rep;
  rep.diverged = record.diverged;
  const auto& loss = record.loss;
  for (double v : loss) {
    if (!std::isfinite(v)) ++rep.nonfinite_count;
  }
  for (double v : record.grad_norm) {
    if (!std::isfinite(v)) ++rep.nonfinite_count;
  }
  for (std::size_t i = 0; i + 1 < loss.size(); ++i) {
    if (std::isfinite(loss[i]) && std::isfinite(loss[i + 1])) {
      rep.max_loss_jump = std::max(rep.max_loss_jump, std::abs(loss[i + 1] - loss[i]));
    }
  }
  constexpr std::size_t kWindow = 50;
  for (std::size_t end = kWindow; end <= loss.size(); ++end) {
    double mean = 0.0;
    for (std::size_t i = end - kWindow; i < end; ++i) mean += loss[i];
    mean /= kWindow;
    double var = 0.0;
    for (std::size_t i = end - kWindow; i < end; ++i) {
      var += (loss[i] - mean) * (loss[i] - mean);
    }
    var /= kWindow;
    if (std::isfinite(var)) rep.max_window_variance = std::max(rep.max_window_variance, var);
  }
  // gradient spikes against the trailing median
  constexpr std::size_t kHistory = 50;
  const auto& gn = record.grad_norm;
  std::vector<double> window;
  for (std::size_t i = 0; i < gn.size(); ++i) {
    if (window.size() >= 5) {
      std::vector<double> sorted = window;
      std::sort(sorted.begin(), sorted.end());
      double median = sorted[sorted.size() / 2];
      if (median > 0 && std::isfinite(gn[i]) && gn[i] > 10.0 * median) {
        ++rep.grad_spike_count;
      }
    }
    if (std::isfinite(gn[i])) {
      window.push_back(gn[i]);
      if (window.size() > kHistory) window.erase(window.begin());
    }
  }
  return rep;
}

}  // namespace rollcast
