#include "rollcast/rollout.hpp"

#include <cmath>

namespace rollcast {

namespace {

Tensor as_batch(const Tensor& t) {
  return t.rank() == 1 ? t.reshaped({1, t.size()}) : t;
}

void check_loss_shapes(const Tensor& pred, const Tensor& truth, const Tensor& w,
                       const char* op) {
  if (!pred.same_shape(truth)) {
    throw ShapeError(std::string(op) + ": field shapes differ: " + shape_str(pred) +
                     " vs " + shape_str(truth));
  }
  if (w.rank() != 1 || w.size() != pred.shape()[1]) {
    throw ShapeError(std::string(op) + ": weights must be [N] matching fields");
  }
}

}  // namespace

Var loss_amse_graph(Graph& g, Var pred_anom, Var true_anom, Var weights) {
  const Tensor& p = g.value(pred_anom);
  check_loss_shapes(p, g.value(true_anom), g.value(weights), "loss_amse");
  std::size_t n = p.shape()[1];
  Var diff = g.sub(pred_anom, true_anom);
  Var sq = g.mul(diff, diff);
  Var per_sample = g.scale(g.rowwise_sum(g.mul_rowvec(sq, weights)),
                           1.0 / static_cast<double>(n));
  return g.mean_all(per_sample);
}

Var loss_pcc_graph(Graph& g, Var pred_anom, Var true_anom, Var weights) {
  const Tensor& p = g.value(pred_anom);
  check_loss_shapes(p, g.value(true_anom), g.value(weights), "loss_pcc");
  Var num = g.rowwise_sum(g.mul_rowvec(g.mul(pred_anom, true_anom), weights));
  Var dp = g.rowwise_sum(g.mul_rowvec(g.mul(pred_anom, pred_anom), weights));
  Var dt = g.rowwise_sum(g.mul_rowvec(g.mul(true_anom, true_anom), weights));
  const Tensor& vp = g.value(dp);
  const Tensor& vt = g.value(dt);
  for (std::size_t b = 0; b < vp.size(); ++b) {
    if (!(vp[b] > 0.0) || !(vt[b] > 0.0)) {
      throw DataError("loss_pcc: zero-norm anomaly field in sample " +
                      std::to_string(b) + "; correlation undefined");
    }
  }
  Var corr = g.div(num, g.sqrt_(g.mul(dp, dt)));
  return g.mean_all(g.add_const(g.scale(corr, -1.0), 1.0));
}

double loss_amse(const Tensor& pred_anom, const Tensor& true_anom,
                 const Tensor& weights) {
  Graph g;
  Var v = loss_amse_graph(g, g.constant(as_batch(pred_anom)),
                          g.constant(as_batch(true_anom)), g.constant(weights));
  return g.value(v).item();
}

double loss_pcc(const Tensor& pred_anom, const Tensor& true_anom,
                const Tensor& weights) {
  Graph g;
  Var v = loss_pcc_graph(g, g.constant(as_batch(pred_anom)),
                         g.constant(as_batch(true_anom)), g.constant(weights));
  return g.value(v).item();
}

double combined_loss(double amse, double pcc_loss) {
  return 0.5 * (amse + pcc_loss);
}

RolloutResult rollout(Graph& g, const BoundModel& model, const RolloutBatch& batch,
                      const TeacherForcingSchedule& schedule, bool use_adapters,
                      bool with_loss) {
  std::size_t T = batch.aux.size();
  if (T == 0) throw std::invalid_argument("rollout: need at least one step");
  bool any_forcing = false;
  for (std::size_t t = 1; t <= T; ++t) {
    any_forcing |= schedule.forced_input(static_cast<int>(t));
  }
  if ((with_loss || any_forcing) && batch.observed.size() != T) {
    throw DataError("rollout: observations X_1..X_T required for forcing/losses");
  }
  if (with_loss && batch.clim.size() != T) {
    throw DataError("rollout: climatology rows required for losses");
  }

  RolloutResult res;
  res.predictions.reserve(T);
  Var weights = with_loss ? g.constant(batch.cell_weights) : Var{};
  Var x = g.constant(batch.x0);
  Var prev = x;
  int forced_count = 0;
  for (std::size_t t = 1; t <= T; ++t) {
    bool forced = schedule.forced_input(static_cast<int>(t));
    Var input = prev;
    if (forced) {
      // substitute the observed state; stop-gradient interrupts the
      // multiplicative Jacobian path across the substitution
      input = g.stop_gradient(g.constant(batch.observed[t - 2]));
      ++forced_count;
    }
    int set = use_adapters ? select_adapter(static_cast<int>(t)) : -1;
    Var aux = g.constant(batch.aux[t - 1]);
    Var pred = model_step_graph(g, model, input, aux, set);
    res.predictions.push_back(g.value(pred));
    res.forced.push_back(forced);
    if (with_loss) {
      Var clim = g.constant(batch.clim[t - 1]);
      Var pred_anom = g.sub(pred, clim);
      Var true_anom = g.sub(g.constant(batch.observed[t - 1]), clim);
      Var amse = loss_amse_graph(g, pred_anom, true_anom, weights);
      Var pcc = loss_pcc_graph(g, pred_anom, true_anom, weights);
      Var step_loss = g.scale(g.add(amse, pcc), 0.5);
      res.step_losses.push_back(g.value(step_loss).item());
      res.total_loss = t == 1 ? step_loss : g.add(res.total_loss, step_loss);
    }
    prev = pred;
  }
  res.forced_fraction = static_cast<double>(forced_count) / static_cast<double>(T);
  return res;
}

}  // namespace rollcast
