#include "rollcast/model.hpp"

#include <cmath>

#include "rollcast/rng.hpp"

namespace rollcast {

void BackboneConfig::validate() const {
  grid.validate();
  if (depth < 1) throw std::invalid_argument("BackboneConfig: depth must be >= 1");
  if (hidden < 1) throw std::invalid_argument("BackboneConfig: hidden must be >= 1");
  if (aux_width != 3) {
    throw std::invalid_argument("BackboneConfig: aux encoding is 3-wide (sin, cos, lead)");
  }
  if (kind == Kind::PatchTransformer) {
    if (patch == 0 || grid.H % patch != 0 || grid.W % patch != 0) {
      throw std::invalid_argument("BackboneConfig: grid must tile by patch size");
    }
    if (heads == 0 || hidden % heads != 0) {
      throw std::invalid_argument("BackboneConfig: hidden must divide by heads");
    }
  }
}

std::size_t param_count(const BackboneConfig& c) {
  c.validate();
  std::size_t D = c.state_dim(), A = c.aux_width, Hd = c.hidden;
  if (c.kind == BackboneConfig::Kind::Mlp) {
    std::size_t n = (D + A) * Hd + Hd;            // input layer
    n += (c.depth - 1) * (Hd * Hd + Hd);          // hidden layers
    n += Hd * D + D;                              // output head
    return n;
  }
  std::size_t tokin = c.patch * c.patch * c.grid.V;
  std::size_t N = (c.grid.H / c.patch) * (c.grid.W / c.patch);
  std::size_t E = Hd;
  std::size_t n = tokin * E + E;  // patch embed
  n += A * E + E;                 // aux embed
  n += N * E;                     // positional table
  std::size_t per_block = 2 * E                     // ln1
                          + 4 * (E * E + E)         // q,k,v,o projections
                          + 2 * E                   // ln2
                          + E * 4 * E + 4 * E       // mlp expand
                          + 4 * E * E + E;          // mlp contract
  n += c.depth * per_block;
  n += 2 * E;            // final ln
  n += E * tokin + tokin;  // token head
  return n;
}

namespace {

Tensor glorot(Rng& rng, std::size_t fan_in, std::size_t fan_out,
              std::vector<std::size_t> shape, double gain) {
  double bound = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ModelParams model_init(const BackboneConfig& c, std::uint64_t seed) {
  c.validate();
  ModelParams p;
  p.config = c;
  p.seed = seed;
  Rng rng(Rng::derive(seed, 0x4D0DE1ULL));
  std::size_t D = c.state_dim(), A = c.aux_width, Hd = c.hidden;
  auto put = [&](const std::string& name, Tensor t) {
    p.tensors.emplace(name, std::move(t));
  };
  if (c.kind == BackboneConfig::Kind::Mlp) {
    std::size_t in = D + A;
    for (std::size_t i = 0; i < c.depth; ++i) {
      std::string base = "mlp/layer" + std::to_string(i) + "/";
      put(base + "w", glorot(rng, in, Hd, {in, Hd}, c.init_gain));
      put(base + "b", Tensor({Hd}));
      in = Hd;
    }
    put("mlp/out/w", glorot(rng, Hd, D, {Hd, D}, c.init_gain));
    put("mlp/out/b", Tensor({D}));
    return p;
  }
  std::size_t tokin = c.patch * c.patch * c.grid.V;
  std::size_t N = (c.grid.H / c.patch) * (c.grid.W / c.patch);
  std::size_t E = Hd;
  put("pt/embed/w", glorot(rng, tokin, E, {tokin, E}, c.init_gain));
  put("pt/embed/b", Tensor({E}));
  put("pt/aux/w", glorot(rng, A, E, {A, E}, c.init_gain));
  put("pt/aux/b", Tensor({E}));
  {
    Tensor pos({N, E});
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = rng.uniform(-0.02, 0.02);
    put("pt/pos", std::move(pos));
  }
  for (std::size_t i = 0; i < c.depth; ++i) {
    std::string base = "pt/block" + std::to_string(i) + "/";
    put(base + "ln1/g", Tensor({E}, 1.0));
    put(base + "ln1/b", Tensor({E}));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      put(base + "attn/" + std::string(w), glorot(rng, E, E, {E, E}, c.init_gain));
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      put(base + "attn/" + std::string(b), Tensor({E}));
    }
    put(base + "ln2/g", Tensor({E}, 1.0));
    put(base + "ln2/b", Tensor({E}));
    put(base + "mlp/w1", glorot(rng, E, 4 * E, {E, 4 * E}, c.init_gain));
    put(base + "mlp/b1", Tensor({4 * E}));
    put(base + "mlp/w2", glorot(rng, 4 * E, E, {4 * E, E}, c.init_gain));
    put(base + "mlp/b2", Tensor({E}));
  }
  put("pt/final_ln/g", Tensor({E}, 1.0));
  put("pt/final_ln/b", Tensor({E}));
  put("pt/out/w", glorot(rng, E, tokin, {E, tokin}, c.init_gain));
  put("pt/out/b", Tensor({tokin}));
  return p;
}

AdapterBank adapter_bank_init(const BackboneConfig& c, std::uint64_t seed,
                              std::size_t sets, double target_ratio,
                              std::size_t bottleneck_override) {
  c.validate();
  if (sets == 0) throw std::invalid_argument("adapter_bank_init: sets must be >= 1");
  AdapterBank bank;
  bank.sets = sets;
  bank.blocks = c.depth;
  bank.width = c.hidden;
  std::size_t backbone = param_count(c);
  std::size_t w = bank.width;
  auto set_params = [&](std::size_t b) {
    return bank.blocks * (w * b + b + b * w + w);
  };
  if (bottleneck_override > 0) {
    bank.bottleneck = bottleneck_override;
  } else {
    // smallest |ratio - target|; per-block params are linear in b
    double target = target_ratio * static_cast<double>(backbone);
    double denom = static_cast<double>(bank.blocks * (2 * w + 1));
    double ideal = (target - static_cast<double>(bank.blocks * w)) / denom;
    std::size_t best = ideal < 1.0 ? 1 : static_cast<std::size_t>(std::llround(ideal));
    double best_err = 1e300;
    for (std::size_t cand = best > 2 ? best - 2 : 1; cand <= best + 2; ++cand) {
      double r = static_cast<double>(set_params(cand)) / static_cast<double>(backbone);
      if (std::abs(r - target_ratio) < best_err) {
        best_err = std::abs(r - target_ratio);
        bank.bottleneck = cand;
      }
    }
    if (best_err > 0.01) {
      throw std::invalid_argument(
          "adapter_bank_init: cannot hit parameter ratio " +
          std::to_string(target_ratio) + " within +-0.01 for this backbone");
    }
  }
  bank.ratio = static_cast<double>(set_params(bank.bottleneck)) /
               static_cast<double>(backbone);

  Rng rng(Rng::derive(seed, 0xADA97ULL));
  std::size_t b = bank.bottleneck;
  for (std::size_t s = 0; s < sets; ++s) {
    for (std::size_t blk = 0; blk < bank.blocks; ++blk) {
      std::string base =
          "adapter/" + std::to_string(s) + "/" + std::to_string(blk) + "/";
      bank.tensors.emplace(base + "down_w", glorot(rng, w, b, {w, b}, c.init_gain));
      bank.tensors.emplace(base + "down_b", Tensor({b}));
      bank.tensors.emplace(base + "up_w", Tensor({b, w}));  // zero-init
      bank.tensors.emplace(base + "up_b", Tensor({w}));
    }
  }
  return bank;
}

int select_adapter(int lead_day) {
  if (lead_day < 1 || lead_day > kMaxLead) {
    throw std::out_of_range("select_adapter: lead day " + std::to_string(lead_day) +
                            " outside [1, " + std::to_string(kMaxLead) + "]");
  }
  return (lead_day - 1) / kAdapterSpan;
}

AuxInput AuxInput::encode(int day_of_year, int lead_day) {
  if (lead_day < 1) throw std::out_of_range("AuxInput: lead day must be >= 1");
  AuxInput a;
  double phase = 2.0 * M_PI * static_cast<double>(day_of_year) /
                 static_cast<double>(kDaysPerYear);
  a.sin_doy = std::sin(phase);
  a.cos_doy = std::cos(phase);
  a.lead_scaled = std::min(1.0, static_cast<double>(lead_day) /
                                    static_cast<double>(kMaxLead));
  return a;
}

std::set<std::string> trainable_mask(int stage, const ModelParams& params,
                                     const AdapterBank* bank,
                                     bool full_ft_ablation) {
  if (stage < 1 || stage > 3) {
    throw std::invalid_argument("trainable_mask: stage must be 1, 2 or 3");
  }
  std::set<std::string> mask;
  bool backbone = stage != 3 || full_ft_ablation;
  bool adapters = stage == 3;
  if (backbone) {
    for (const auto& [name, t] : params.tensors) mask.insert(name);
  }
  if (adapters && bank) {
    for (const auto& [name, t] : bank->tensors) mask.insert(name);
  }
  return mask;
}

Tensor pack_aux(const std::vector<AuxInput>& aux, std::size_t aux_width) {
  Tensor t({aux.size(), aux_width});
  for (std::size_t i = 0; i < aux.size(); ++i) {
    t[i * aux_width + 0] = aux[i].sin_doy;
    t[i * aux_width + 1] = aux[i].cos_doy;
    t[i * aux_width + 2] = aux[i].lead_scaled;
  }
  return t;
}

BoundModel bind_model(Graph& g, const ModelParams& params, const AdapterBank* bank) {
  BoundModel m;
  m.config = &params.config;
  for (const auto& [name, t] : params.tensors) m.vars[name] = g.param(name, t);
  if (bank) {
    for (const auto& [name, t] : bank->tensors) m.vars[name] = g.param(name, t);
  }
  return m;
}

namespace {

Var apply_adapter(Graph& g, const BoundModel& m, std::size_t block, int set, Var h) {
  std::string base =
      "adapter/" + std::to_string(set) + "/" + std::to_string(block) + "/";
  auto var = [&](const std::string& role) {
    auto it = m.vars.find(base + role);
    if (it == m.vars.end()) {
      throw std::logic_error("model_step: adapter requested but bank not bound (" +
                             base + role + ")");
    }
    return it->second;
  };
  Var d = g.gelu(g.add_rowvec(g.matmul(h, var("down_w")), var("down_b")));
  Var u = g.add_rowvec(g.matmul(d, var("up_w")), var("up_b"));
  return g.add(h, u);
}

Var mlp_step(Graph& g, const BoundModel& m, Var x, Var aux, int adapter_set,
             Var* features_out) {
  Var h = g.concat_cols(x, aux);
  for (std::size_t i = 0; i < m.config->depth; ++i) {
    std::string base = "mlp/layer" + std::to_string(i) + "/";
    h = g.gelu(g.add_rowvec(g.matmul(h, m.vars.at(base + "w")), m.vars.at(base + "b")));
    if (adapter_set >= 0) h = apply_adapter(g, m, i, adapter_set, h);
  }
  if (features_out) *features_out = h;
  Var delta = g.add_rowvec(g.matmul(h, m.vars.at("mlp/out/w")), m.vars.at("mlp/out/b"));
  return g.add(x, delta);
}

// token layout: token n = (row-patch, col-patch); within token v, dy, dx
std::vector<std::uint32_t> patch_index(const BackboneConfig& c) {
  std::size_t P = c.patch, H = c.grid.H, W = c.grid.W, V = c.grid.V;
  std::vector<std::uint32_t> idx;
  idx.reserve(c.state_dim());
  for (std::size_t ph = 0; ph < H / P; ++ph)
    for (std::size_t pw = 0; pw < W / P; ++pw)
      for (std::size_t v = 0; v < V; ++v)
        for (std::size_t dy = 0; dy < P; ++dy)
          for (std::size_t dx = 0; dx < P; ++dx)
            idx.push_back(static_cast<std::uint32_t>(
                v * H * W + (ph * P + dy) * W + (pw * P + dx)));
  return idx;
}

std::vector<std::uint32_t> inverse_index(const std::vector<std::uint32_t>& idx) {
  std::vector<std::uint32_t> inv(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) inv[idx[i]] = static_cast<std::uint32_t>(i);
  return inv;
}

Var pt_step(Graph& g, const BoundModel& m, Var x, Var aux, int adapter_set,
            Var* features_out) {
  const BackboneConfig& c = *m.config;
  std::size_t D = c.state_dim();
  std::size_t tokin = c.patch * c.patch * c.grid.V;
  std::size_t N = (c.grid.H / c.patch) * (c.grid.W / c.patch);
  std::size_t E = c.hidden, Eh = E / c.heads;
  std::size_t B = g.value(x).shape()[0];
  auto fwd = patch_index(c);
  auto inv = inverse_index(fwd);

  Var delta, features;
  for (std::size_t bi = 0; bi < B; ++bi) {
    Var row = g.slice_rows(x, bi, bi + 1);
    Var tokens = g.reshape(g.gather(g.reshape(row, {D}), fwd), {N, tokin});
    Var h = g.add_rowvec(g.matmul(tokens, m.vars.at("pt/embed/w")),
                         m.vars.at("pt/embed/b"));
    Var auxrow = g.slice_rows(aux, bi, bi + 1);
    Var auxv = g.reshape(g.add_rowvec(g.matmul(auxrow, m.vars.at("pt/aux/w")),
                                      m.vars.at("pt/aux/b")),
                         {E});
    h = g.add_rowvec(h, auxv);
    h = g.add(h, m.vars.at("pt/pos"));
    for (std::size_t blk = 0; blk < c.depth; ++blk) {
      std::string base = "pt/block" + std::to_string(blk) + "/";
      Var t1 = g.layernorm_rows(h, m.vars.at(base + "ln1/g"), m.vars.at(base + "ln1/b"));
      Var q = g.add_rowvec(g.matmul(t1, m.vars.at(base + "attn/wq")),
                           m.vars.at(base + "attn/bq"));
      Var k = g.add_rowvec(g.matmul(t1, m.vars.at(base + "attn/wk")),
                           m.vars.at(base + "attn/bk"));
      Var v = g.add_rowvec(g.matmul(t1, m.vars.at(base + "attn/wv")),
                           m.vars.at(base + "attn/bv"));
      Var heads_out;
      for (std::size_t hh = 0; hh < c.heads; ++hh) {
        Var qh = g.slice_cols(q, hh * Eh, (hh + 1) * Eh);
        Var kh = g.slice_cols(k, hh * Eh, (hh + 1) * Eh);
        Var vh = g.slice_cols(v, hh * Eh, (hh + 1) * Eh);
        Var scores = g.scale(g.matmul(qh, g.transpose(kh)),
                             1.0 / std::sqrt(static_cast<double>(Eh)));
        Var oh = g.matmul(g.softmax_rows(scores), vh);
        heads_out = hh == 0 ? oh : g.concat_cols(heads_out, oh);
      }
      h = g.add(h, g.add_rowvec(g.matmul(heads_out, m.vars.at(base + "attn/wo")),
                                m.vars.at(base + "attn/bo")));
      Var t2 = g.layernorm_rows(h, m.vars.at(base + "ln2/g"), m.vars.at(base + "ln2/b"));
      Var mid = g.gelu(g.add_rowvec(g.matmul(t2, m.vars.at(base + "mlp/w1")),
                                    m.vars.at(base + "mlp/b1")));
      Var out = g.add_rowvec(g.matmul(mid, m.vars.at(base + "mlp/w2")),
                             m.vars.at(base + "mlp/b2"));
      h = g.add(h, out);
      if (adapter_set >= 0) h = apply_adapter(g, m, blk, adapter_set, h);
    }
    Var hf = g.layernorm_rows(h, m.vars.at("pt/final_ln/g"), m.vars.at("pt/final_ln/b"));
    if (features_out) {
      Var frow = g.reshape(hf, {1, N * E});
      features = bi == 0 ? frow : g.concat_rows(features, frow);
    }
    Var outtok = g.add_rowvec(g.matmul(hf, m.vars.at("pt/out/w")),
                              m.vars.at("pt/out/b"));
    Var drow = g.reshape(g.gather(g.reshape(outtok, {N * tokin}), inv), {1, D});
    delta = bi == 0 ? drow : g.concat_rows(delta, drow);
  }
  if (features_out) *features_out = features;
  return g.add(x, delta);
}

}  // namespace

Var model_step_graph(Graph& g, const BoundModel& m, Var x, Var aux,
                     int adapter_set, Var* features_out) {
  const Tensor& tx = g.value(x);
  const Tensor& ta = g.value(aux);
  if (tx.rank() != 2 || tx.shape()[1] != m.config->state_dim()) {
    throw ShapeError("model_step: state must be [B," +
                     std::to_string(m.config->state_dim()) + "], got " + shape_str(tx));
  }
  if (ta.rank() != 2 || ta.shape()[0] != tx.shape()[0] ||
      ta.shape()[1] != m.config->aux_width) {
    throw ShapeError("model_step: aux must be [B," +
                     std::to_string(m.config->aux_width) + "], got " + shape_str(ta));
  }
  if (adapter_set >= static_cast<int>(kAdapterSets)) {
    throw std::out_of_range("model_step: adapter set out of range");
  }
  if (m.config->kind == BackboneConfig::Kind::Mlp) {
    return mlp_step(g, m, x, aux, adapter_set, features_out);
  }
  return pt_step(g, m, x, aux, adapter_set, features_out);
}

Tensor model_step(const ModelParams& params, const Tensor& x,
                  const std::vector<AuxInput>& aux, const AdapterBank* bank,
                  int adapter_set) {
  Graph g;
  Tensor xin = x.rank() == 1 ? x.reshaped({1, x.size()}) : x;
  BoundModel m = bind_model(g, params, bank);
  Var xv = g.constant(xin);
  Var av = g.constant(pack_aux(aux, params.config.aux_width));
  Var out = model_step_graph(g, m, xv, av, adapter_set);
  Tensor res = g.value(out);
  return x.rank() == 1 ? res.reshaped({res.size()}) : res;
}

}  // namespace rollcast
