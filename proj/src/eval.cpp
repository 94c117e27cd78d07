#include "rollcast/eval.hpp"

#include <cmath>

namespace rollcast {

namespace {

std::vector<std::size_t> eval_starts(std::size_t n_days, int leads, int stride) {
  if (n_days < static_cast<std::size_t>(leads) + 1) {
    throw DataError("evaluate: test split shorter than the rollout horizon");
  }
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + static_cast<std::size_t>(leads) < n_days;
       s += static_cast<std::size_t>(stride)) {
    starts.push_back(s);
  }
  return starts;
}

Tensor batch_rows(const Trajectory& traj, const std::vector<std::size_t>& days) {
  std::size_t d = traj.grid.cells();
  Tensor out({days.size(), d});
  for (std::size_t r = 0; r < days.size(); ++r) {
    const Tensor& st = traj.states[days[r]];
    std::copy(st.vec().begin(), st.vec().end(), out.vec().begin() + r * d);
  }
  return out;
}

}  // namespace

EvalResult evaluate_rollout(const ModelParams& params, const AdapterBank* bank,
                            const TrainData& test, const EvalOptions& opts) {
  const Trajectory& traj = *test.traj;
  std::size_t d = traj.grid.cells();
  auto starts = eval_starts(traj.days(), opts.leads, opts.start_stride);
  std::size_t T = static_cast<std::size_t>(opts.leads);

  // streaming accumulators
  std::vector<double> pcc_sum(T, 0.0);
  std::vector<std::size_t> pcc_used(T, 0), pcc_excl(T, 0);
  std::vector<std::vector<double>> tcc_num(T, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> tcc_dp(T, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> tcc_dt(T, std::vector<double>(d, 0.0));
  const Tensor& w = test.cell_weights;

  for (std::size_t off = 0; off < starts.size();
       off += static_cast<std::size_t>(opts.batch)) {
    std::size_t hi =
        std::min(starts.size(), off + static_cast<std::size_t>(opts.batch));
    std::vector<std::size_t> chunk(starts.begin() + off, starts.begin() + hi);
    std::size_t B = chunk.size();

    Graph g;
    BoundModel model = bind_model(g, params, bank);
    RolloutBatch batch;
    batch.x0 = batch_rows(traj, chunk);
    for (std::size_t t = 1; t <= T; ++t) {
      std::vector<AuxInput> aux(B);
      for (std::size_t b = 0; b < B; ++b) {
        aux[b] = AuxInput::encode(
            traj.day_of_year(chunk[b] + t), static_cast<int>(t));
      }
      batch.aux.push_back(pack_aux(aux, params.config.aux_width));
    }
    RolloutResult roll = rollout(g, model, batch, TeacherForcingSchedule::segment(),
                                 opts.use_adapters, /*with_loss=*/false);

    for (std::size_t t = 1; t <= T; ++t) {
      const Tensor& pred = roll.predictions[t - 1];  // [B, d]
      for (std::size_t b = 0; b < B; ++b) {
        std::size_t day = chunk[b] + t;
        const Tensor& truth = traj.states[day];
        const Tensor& clim = test.clim->at_doy(traj.day_of_year(day));
        double num = 0, dp = 0, dt = 0;
        for (std::size_t i = 0; i < d; ++i) {
          double pa = pred[b * d + i] - clim[i];
          double ta = truth[i] - clim[i];
          num += w[i] * pa * ta;
          dp += w[i] * pa * pa;
          dt += w[i] * ta * ta;
          tcc_num[t - 1][i] += pa * ta;
          tcc_dp[t - 1][i] += pa * pa;
          tcc_dt[t - 1][i] += ta * ta;
        }
        if (dp > 0.0 && dt > 0.0 && std::isfinite(num)) {
          pcc_sum[t - 1] += num / std::sqrt(dp * dt);
          ++pcc_used[t - 1];
        } else {
          ++pcc_excl[t - 1];
        }
      }
    }
  }

  EvalResult res;
  res.samples = starts.size();
  res.pcc.metric = "pcc";
  res.tcc.metric = "tcc";
  res.pcc.run_id = res.tcc.run_id = opts.run_id;
  for (std::size_t t = 0; t < T; ++t) {
    res.pcc.lead_days.push_back(static_cast<int>(t + 1));
    res.tcc.lead_days.push_back(static_cast<int>(t + 1));
    res.excluded_pcc += pcc_excl[t];
    res.pcc.values.push_back(
        pcc_used[t] > 0 ? pcc_sum[t] / static_cast<double>(pcc_used[t])
                        : std::numeric_limits<double>::quiet_NaN());
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < d; ++i) {
      if (tcc_dp[t][i] > 0.0 && tcc_dt[t][i] > 0.0) {
        sum += w[i] * tcc_num[t][i] / std::sqrt(tcc_dp[t][i] * tcc_dt[t][i]);
        ++used;
      } else {
        ++res.excluded_tcc;
      }
    }
    res.tcc.values.push_back(used > 0 ? sum / static_cast<double>(used)
                                      : std::numeric_limits<double>::quiet_NaN());
  }
  return res;
}

MetricSeries cka_rollout_curve(const ModelParams& params, const AdapterBank* bank,
                               const TrainData& test, const EvalOptions& opts) {
  const Trajectory& traj = *test.traj;
  auto starts = eval_starts(traj.days(), opts.leads, opts.start_stride);
  std::size_t T = static_cast<std::size_t>(opts.leads);
  std::size_t n = starts.size();
  if (n < 2) throw DataError("cka_rollout_curve: needs at least 2 start days");

  // feature matrices per lead: rolled-input features vs true-input features
  std::vector<Tensor> feat_rolled(T), feat_true(T);
  std::size_t fdim = 0;

  for (std::size_t off = 0; off < n; off += static_cast<std::size_t>(opts.batch)) {
    std::size_t hi = std::min(n, off + static_cast<std::size_t>(opts.batch));
    std::vector<std::size_t> chunk(starts.begin() + off, starts.begin() + hi);
    std::size_t B = chunk.size();

    Graph g;
    BoundModel model = bind_model(g, params, bank);
    Var rolled = g.constant(batch_rows(traj, chunk));
    for (std::size_t t = 1; t <= T; ++t) {
      std::vector<AuxInput> aux(B);
      std::vector<std::size_t> prev_days(B);
      for (std::size_t b = 0; b < B; ++b) {
        aux[b] = AuxInput::encode(traj.day_of_year(chunk[b] + t), static_cast<int>(t));
        prev_days[b] = chunk[b] + t - 1;
      }
      Var aux_v = g.constant(pack_aux(aux, params.config.aux_width));
      int set = opts.use_adapters ? select_adapter(static_cast<int>(t)) : -1;

      Var f_roll;
      rolled = model_step_graph(g, model, rolled, aux_v, set, &f_roll);
      Var f_true;
      Var true_prev = g.constant(batch_rows(traj, prev_days));
      (void)model_step_graph(g, model, true_prev, aux_v, set, &f_true);

      const Tensor& fr = g.value(f_roll);
      const Tensor& ft = g.value(f_true);
      if (fdim == 0) {
        fdim = fr.shape()[1];
        for (std::size_t k = 0; k < T; ++k) {
          feat_rolled[k] = Tensor({n, fdim});
          feat_true[k] = Tensor({n, fdim});
        }
      }
      for (std::size_t b = 0; b < B; ++b) {
        std::copy(fr.vec().begin() + b * fdim, fr.vec().begin() + (b + 1) * fdim,
                  feat_rolled[t - 1].vec().begin() + (off + b) * fdim);
        std::copy(ft.vec().begin() + b * fdim, ft.vec().begin() + (b + 1) * fdim,
                  feat_true[t - 1].vec().begin() + (off + b) * fdim);
      }
    }
  }

  MetricSeries series;
  series.metric = "cka";
  series.run_id = opts.run_id;
  for (std::size_t t = 0; t < T; ++t) {
    series.lead_days.push_back(static_cast<int>(t + 1));
    series.values.push_back(linear_cka(feat_true[t], feat_rolled[t]));
  }
  return series;
}

}  // namespace rollcast
