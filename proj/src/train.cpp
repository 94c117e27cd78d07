#include "rollcast/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rollcast/checkpoint.hpp"
#include "rollcast/rng.hpp"

namespace rollcast {

void StagePlan::validate() const {
  if (stages.empty()) throw std::invalid_argument("StagePlan: no stages");
  for (std::size_t i = 1; i < stages.size(); ++i) {
    if (stages[i].T < stages[i - 1].T) {
      throw std::invalid_argument("StagePlan: rollout length must be non-decreasing");
    }
  }
}

long steps_per_epoch(std::size_t n_days, int T, int batch) {
  if (n_days < static_cast<std::size_t>(T) + 1) {
    throw DataError("not enough days for rollout length T=" + std::to_string(T));
  }
  long windows = static_cast<long>(n_days) - T;
  return (windows + batch - 1) / batch;
}

long plan_step_work(const StagePlan& plan, std::size_t n_days) {
  long work = 0;
  for (const StageConfig& s : plan.stages) {
    long steps = static_cast<long>(s.epochs) * steps_per_epoch(n_days, s.T, s.batch);
    if (s.max_steps > 0) steps = std::min(steps, s.max_steps);
    work += steps * s.T;
  }
  return work;
}

namespace {

Tensor flat_state(const Tensor& state) {
  return state.reshaped({state.size()});
}

// Rows of a batch matrix from per-day states.
Tensor gather_rows(const Trajectory& traj, const std::vector<std::size_t>& days) {
  std::size_t d = traj.grid.cells();
  Tensor out({days.size(), d});
  for (std::size_t r = 0; r < days.size(); ++r) {
    const Tensor& st = traj.states[days[r]];
    std::copy(st.vec().begin(), st.vec().end(), out.vec().begin() + r * d);
  }
  return out;
}

RolloutBatch make_batch(const TrainData& data, const std::vector<std::size_t>& starts,
                        int T) {
  const Trajectory& traj = *data.traj;
  std::size_t d = traj.grid.cells();
  std::size_t B = starts.size();
  RolloutBatch batch;
  batch.cell_weights = data.cell_weights;
  batch.x0 = gather_rows(traj, starts);
  batch.aux.reserve(T);
  batch.observed.reserve(T);
  batch.clim.reserve(T);
  for (int t = 1; t <= T; ++t) {
    std::vector<std::size_t> days(B);
    std::vector<AuxInput> aux(B);
    Tensor clim({B, d});
    for (std::size_t b = 0; b < B; ++b) {
      days[b] = starts[b] + static_cast<std::size_t>(t);
      int doy = traj.day_of_year(days[b]);
      aux[b] = AuxInput::encode(doy, t);
      const Tensor& c = data.clim->at_doy(doy);
      std::copy(c.vec().begin(), c.vec().end(), clim.vec().begin() + b * d);
    }
    batch.aux.push_back(pack_aux(aux, 3));
    batch.observed.push_back(gather_rows(traj, days));
    batch.clim.push_back(std::move(clim));
  }
  return batch;
}

std::set<std::string> mask_names(const StageConfig& cfg, const ModelParams& params,
                                 const AdapterBank* bank) {
  switch (cfg.mask) {
    case StageConfig::Mask::Backbone:
      return trainable_mask(std::min(cfg.index, 2), params, bank, false);
    case StageConfig::Mask::AdapterOnly:
      return trainable_mask(3, params, bank, false);
    case StageConfig::Mask::All:
      return trainable_mask(3, params, bank, true);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

TrainRecord train_stage(const StageConfig& cfg, const TrainData& data,
                        ModelParams& params, AdapterBank* bank,
                        std::uint64_t seed) {
  auto t_begin = std::chrono::steady_clock::now();
  TrainRecord rec;
  rec.stage = cfg.name;
  if (cfg.epochs < 0) throw std::invalid_argument("train_stage: epochs must be >= 0");
  if (cfg.epochs == 0) return rec;
  if (cfg.use_adapters && !bank) {
    throw std::invalid_argument("train_stage: adapters requested without a bank");
  }

  std::size_t n_days = data.traj->days();
  long per_epoch = steps_per_epoch(n_days, cfg.T, cfg.batch);
  long total_steps = static_cast<long>(cfg.epochs) * per_epoch;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

  LrSchedule lr = cfg.lr;
  if (lr.total_steps == 0) {
    lr.total_steps = total_steps;
    if (lr.kind == LrSchedule::Kind::Cosine && cfg.warmup_frac > 0) {
      lr.warmup_steps = static_cast<long>(std::lround(
          cfg.warmup_frac * static_cast<double>(total_steps)));
    }
  }

  // merged working set: backbone + adapters; only masked names get updates
  std::map<std::string, Tensor> work = params.tensors;
  if (bank) work.insert(bank->tensors.begin(), bank->tensors.end());
  std::set<std::string> trainable = mask_names(cfg, params, bank);

  AdamW opt(0.9, 0.99, 1e-8, cfg.weight_decay);
  std::vector<std::size_t> starts(n_days - static_cast<std::size_t>(cfg.T));
  for (std::size_t i = 0; i < starts.size(); ++i) starts[i] = i;

  long step = 0;
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    Rng rng(Rng::derive(seed, 0x57A6E0ULL + static_cast<std::uint64_t>(epoch)));
    // Fisher-Yates with the deterministic stream
    for (std::size_t i = starts.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(starts[i - 1], starts[j]);
    }
    for (std::size_t off = 0; off < starts.size() && !done; off += cfg.batch) {
      std::size_t hi = std::min(starts.size(), off + static_cast<std::size_t>(cfg.batch));
      std::vector<std::size_t> chunk(starts.begin() + off, starts.begin() + hi);

      Graph g;
      BoundModel model = bind_model(g, ModelParams{params.config, params.seed, work},
                                    nullptr);
      // bind_model copies from a params view over `work`; adapters are in
      // `work` too, so bind them through the same map
      RolloutBatch batch = make_batch(data, chunk, cfg.T);
      RolloutResult roll =
          rollout(g, model, batch, cfg.schedule, cfg.use_adapters, true);
      double loss_val = g.value(roll.total_loss).item();
      double rate = lr.at(step);
      rec.loss.push_back(loss_val);
      rec.lr_used.push_back(rate);
      rec.forced_fraction.push_back(roll.forced_fraction);
      if (!std::isfinite(loss_val)) {
        rec.grad_norm.push_back(std::numeric_limits<double>::quiet_NaN());
        rec.diverged = true;
        rec.diverged_step = step;
        break;
      }
      g.backward(roll.total_loss);
      std::map<std::string, Tensor> grads;
      double sq_norm = 0.0;
      for (const std::string& name : trainable) {
        Var leaf = g.leaf(name);
        if (!g.has_grad(leaf)) continue;  // e.g. adapter sets unused this T
        Tensor grad = g.grad(leaf);
        for (double v : grad.vec()) sq_norm += v * v;
        grads.emplace(name, std::move(grad));
      }
      double gnorm = std::sqrt(sq_norm);
      rec.grad_norm.push_back(gnorm);
      if (cfg.grad_clip > 0 && gnorm > cfg.grad_clip && std::isfinite(gnorm)) {
        double s = cfg.grad_clip / gnorm;
        for (auto& [name, grad] : grads) {
          for (double& v : grad.vec()) v *= s;
        }
      }
      try {
        opt.step(work, grads, rate);
      } catch (const DivergenceError&) {
        rec.diverged = true;
        rec.diverged_step = step;
        break;
      }
      ++step;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) done = true;
    }
    if (rec.diverged) break;
  }

  // write back: untouched names stay bitwise identical
  for (auto& [name, t] : params.tensors) t = work.at(name);
  if (bank) {
    for (auto& [name, t] : bank->tensors) t = work.at(name);
  }
  rec.wall_time_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t_begin)
                        .count();
  return rec;
}

MultistageResult run_multistage(const StagePlan& plan, const TrainData& data,
                                ModelParams params, AdapterBank bank,
                                const std::string& checkpoint_dir) {
  plan.validate();
  MultistageResult res;
  for (std::size_t i = 0; i < plan.stages.size(); ++i) {
    const StageConfig& cfg = plan.stages[i];
    std::uint64_t stage_seed = Rng::derive(plan.seed, 1000 + i);
    TrainRecord rec;
    try {
      rec = train_stage(cfg, data, params, &bank, stage_seed);
    } catch (const std::exception& e) {
      throw std::runtime_error("stage " + std::to_string(i + 1) + " (" + cfg.name +
                               "): " + e.what());
    }
    res.diverged |= rec.diverged;
    StageSnapshot snap{params, bank, std::move(rec)};
    if (!checkpoint_dir.empty()) {
      std::map<std::string, Tensor> all = params.tensors;
      all.insert(bank.tensors.begin(), bank.tensors.end());
      write_checkpoint(
          (std::filesystem::path(checkpoint_dir) / (cfg.name + ".ckpt")).string(), all);
    }
    res.stages.push_back(std::move(snap));
    if (res.diverged) break;
  }
  return res;
}

TrainRecord train_naive_baseline(const TrainData& data, ModelParams& params,
                                 const StageConfig& base_cfg, long budget_steps,
                                 std::uint64_t seed) {
  StageConfig cfg = base_cfg;
  cfg.name = base_cfg.name.empty() ? "naive42" : base_cfg.name;
  cfg.index = 1;  // full fine-tuning
  cfg.T = kMaxLead;
  cfg.schedule = TeacherForcingSchedule::segment();
  cfg.mask = StageConfig::Mask::Backbone;
  cfg.use_adapters = false;
  cfg.max_steps = budget_steps;
  // epochs generous enough to reach the step budget
  long per_epoch = steps_per_epoch(data.traj->days(), cfg.T, cfg.batch);
  cfg.epochs = static_cast<int>((budget_steps + per_epoch - 1) / per_epoch);
  return train_stage(cfg, data, params, nullptr, seed);
}

StagePlan default_plan(std::uint64_t seed) {
  StagePlan plan;
  plan.seed = seed;

  StageConfig s1;
  s1.name = "stage1";
  s1.index = 1;
  s1.T = 1;
  s1.lr = LrSchedule::constant(1e-4);
  s1.epochs = 16;
  s1.batch = 32;

  StageConfig s2;
  s2.name = "stage2";
  s2.index = 2;
  s2.T = 7;
  s2.lr = LrSchedule::cosine(2e-5, 2e-6, 0);
  s2.epochs = 6;
  s2.batch = 16;

  StageConfig s3;
  s3.name = "stage3";
  s3.index = 3;
  s3.T = kMaxLead;
  s3.mask = StageConfig::Mask::AdapterOnly;
  s3.use_adapters = true;
  s3.lr = LrSchedule::cosine(1e-4, 1e-5, 0);
  s3.epochs = 3;
  s3.batch = 8;

  plan.stages = {s1, s2, s3};
  return plan;
}

void write_train_record_csv(const std::string& path, const TrainRecord& rec) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FileFormatError("cannot open record for writing: " + path);
  os << "step,loss,grad_norm,lr,forced_fraction\n";
  os.precision(17);
  for (std::size_t i = 0; i < rec.loss.size(); ++i) {
    os << i << ',' << rec.loss[i] << ',' << rec.grad_norm[i] << ',' << rec.lr_used[i]
       << ',' << rec.forced_fraction[i] << '\n';
  }
}

TrainRecord read_train_record_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileFormatError("cannot open record: " + path);
  TrainRecord rec;
  std::string line;
  if (!std::getline(is, line)) throw FileFormatError("empty record file: " + path);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    if (vals.size() != 5) throw FileFormatError("malformed record line: " + line);
    rec.loss.push_back(vals[1]);
    rec.grad_norm.push_back(vals[2]);
    rec.lr_used.push_back(vals[3]);
    rec.forced_fraction.push_back(vals[4]);
  }
  return rec;
}

}  // namespace rollcast
