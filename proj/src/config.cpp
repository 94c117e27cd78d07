#include "rollcast/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "rollcast/io_util.hpp"
#include "rollcast/rng.hpp"

namespace rollcast {

std::uint64_t RunConfig::seed_for(const char* role) const {
  std::string r(role);
  if (r == "data") return data_seed ? data_seed : Rng::derive(run_seed, 11);
  if (r == "model") return model_seed ? model_seed : Rng::derive(run_seed, 12);
  if (r == "train") return train_seed ? train_seed : Rng::derive(run_seed, 13);
  throw std::logic_error("unknown seed role: " + r);
}

namespace {

struct Field {
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

template <typename T>
T parse_value(const std::string& raw, const std::string& key);

template <>
double parse_value<double>(const std::string& raw, const std::string& key) {
  try {
    std::size_t pos = 0;
    double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config: bad float for '" + key + "': " + raw);
  }
}

template <>
long parse_value<long>(const std::string& raw, const std::string& key) {
  try {
    std::size_t pos = 0;
    long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config: bad integer for '" + key + "': " + raw);
  }
}

template <>
int parse_value<int>(const std::string& raw, const std::string& key) {
  return static_cast<int>(parse_value<long>(raw, key));
}

template <>
std::size_t parse_value<std::size_t>(const std::string& raw, const std::string& key) {
  long v = parse_value<long>(raw, key);
  if (v < 0) throw ConfigError("config: '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& raw, const std::string& key) {
  try {
    std::size_t pos = 0;
    unsigned long long v = std::stoull(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (...) {
    throw ConfigError("config: bad integer for '" + key + "': " + raw);
  }
}

template <>
bool parse_value<bool>(const std::string& raw, const std::string& key) {
  if (raw == "true" || raw == "1") return true;
  if (raw == "false" || raw == "0") return false;
  throw ConfigError("config: bad boolean for '" + key + "': " + raw);
}

template <>
std::string parse_value<std::string>(const std::string& raw, const std::string&) {
  return raw;
}

std::string fmt_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

using Registry = std::map<std::string, Field>;

template <typename T>
void reg(Registry& r, const std::string& key, T RunConfig::* member) {
  r[key] = Field{
      [member, key](RunConfig& c, const std::string& raw) {
        c.*member = parse_value<T>(raw, key);
      },
      [member](const RunConfig& c) {
        if constexpr (std::is_same_v<T, double>) {
          return fmt_double(c.*member);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return c.*member;
        } else {
          return std::to_string(c.*member);
        }
      }};
}

template <typename T>
void reg_stage(Registry& r, const std::string& prefix, StageKnobs RunConfig::* stage,
               const std::string& name, T StageKnobs::* member) {
  std::string key = prefix + "." + name;
  r[key] = Field{
      [stage, member, key](RunConfig& c, const std::string& raw) {
        (c.*stage).*member = parse_value<T>(raw, key);
      },
      [stage, member](const RunConfig& c) {
        if constexpr (std::is_same_v<T, double>) {
          return fmt_double((c.*stage).*member);
        } else if constexpr (std::is_same_v<T, std::string>) {
          return (c.*stage).*member;
        } else if constexpr (std::is_same_v<T, bool>) {
          return std::string((c.*stage).*member ? "true" : "false");
        } else {
          return std::to_string((c.*stage).*member);
        }
      }};
}

void reg_stage_block(Registry& r, const std::string& prefix,
                     StageKnobs RunConfig::* stage) {
  reg_stage(r, prefix, stage, "t", &StageKnobs::T);
  reg_stage(r, prefix, stage, "epochs", &StageKnobs::epochs);
  reg_stage(r, prefix, stage, "batch", &StageKnobs::batch);
  reg_stage(r, prefix, stage, "lr_kind", &StageKnobs::lr_kind);
  reg_stage(r, prefix, stage, "lr_peak", &StageKnobs::lr_peak);
  reg_stage(r, prefix, stage, "lr_min", &StageKnobs::lr_min);
  reg_stage(r, prefix, stage, "warmup_frac", &StageKnobs::warmup_frac);
  reg_stage(r, prefix, stage, "weight_decay", &StageKnobs::weight_decay);
  reg_stage(r, prefix, stage, "grad_clip", &StageKnobs::grad_clip);
  reg_stage(r, prefix, stage, "mode", &StageKnobs::mode);
  reg_stage(r, prefix, stage, "period", &StageKnobs::period);
  reg_stage(r, prefix, stage, "full_ft", &StageKnobs::full_ft);
}

const Registry& registry() {
  static Registry r = [] {
    Registry reg_;
    reg(reg_, "run.seed", &RunConfig::run_seed);
    reg(reg_, "data.system", &RunConfig::data_system);
    reg(reg_, "data.grid_h", &RunConfig::grid_h);
    reg(reg_, "data.grid_w", &RunConfig::grid_w);
    reg(reg_, "data.variables", &RunConfig::grid_v);
    reg(reg_, "data.train_years", &RunConfig::train_years);
    reg(reg_, "data.test_years", &RunConfig::test_years);
    reg(reg_, "data.spinup_years", &RunConfig::spinup_years);
    reg(reg_, "data.seed", &RunConfig::data_seed);
    reg(reg_, "data.f0", &RunConfig::f0);
    reg(reg_, "data.season_amp", &RunConfig::season_amp);
    reg(reg_, "data.dt", &RunConfig::dt);
    reg(reg_, "data.time_per_day", &RunConfig::time_per_day);
    reg(reg_, "data.clim_window", &RunConfig::clim_window);
    reg(reg_, "model.kind", &RunConfig::model_kind);
    reg(reg_, "model.hidden", &RunConfig::hidden);
    reg(reg_, "model.depth", &RunConfig::depth);
    reg(reg_, "model.patch", &RunConfig::patch);
    reg(reg_, "model.heads", &RunConfig::heads);
    reg(reg_, "model.init_gain", &RunConfig::init_gain);
    reg(reg_, "model.seed", &RunConfig::model_seed);
    reg(reg_, "adapter.sets", &RunConfig::adapter_sets);
    reg(reg_, "adapter.ratio", &RunConfig::adapter_ratio);
    reg(reg_, "train.seed", &RunConfig::train_seed);
    reg_stage_block(reg_, "stage1", &RunConfig::stage1);
    reg_stage_block(reg_, "stage2", &RunConfig::stage2);
    reg_stage_block(reg_, "stage3", &RunConfig::stage3);
    reg_stage_block(reg_, "naive", &RunConfig::naive);
    reg(reg_, "eval.stride", &RunConfig::eval_stride);
    reg(reg_, "eval.batch", &RunConfig::eval_batch);
    reg(reg_, "eval.cka_stride", &RunConfig::cka_stride);
    reg(reg_, "eval.metrics", &RunConfig::eval_metrics);
    reg(reg_, "lab.d", &RunConfig::lab_d);
    reg(reg_, "lab.depths", &RunConfig::lab_depths);
    reg(reg_, "lab.initial_losses", &RunConfig::lab_initial_losses);
    reg(reg_, "lab.base_iters", &RunConfig::lab_base_iters);
    reg(reg_, "lab.eta_slack", &RunConfig::lab_eta_slack);
    reg(reg_, "lab.seed", &RunConfig::lab_seed);
    reg(reg_, "lab.trace_depth", &RunConfig::lab_trace_depth);
    reg(reg_, "lab.trace_loss0", &RunConfig::lab_trace_loss0);
    return reg_;
  }();
  return r;
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& raw_line) {
  std::string line = raw_line;
  std::size_t hash = line.find('#');
  if (hash != std::string::npos) line = line.substr(0, hash);
  line = trim(line);
  if (line.empty()) return;
  std::size_t eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("config: expected 'section.key = value', got: " + raw_line);
  }
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.rfind("manifest.", 0) == 0) return;  // provenance keys replay as no-ops
  auto it = registry().find(key);
  if (it == registry().end()) {
    throw ConfigError("config: unknown key '" + key + "'");
  }
  it->second.set(cfg, value);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) apply_config_line(cfg, line);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, field] : registry()) {
    os << key << " = " << field.get(cfg) << "\n";
  }
  return os.str();
}

void write_manifest(const std::string& path, const RunConfig& cfg,
                    const std::string& command,
                    const std::map<std::string, std::string>& extra) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FileFormatError("cannot open manifest for writing: " + path);
  os << "# run manifest; replayable as a config file\n";
  os << "manifest.version = 1\n";
  os << "manifest.command = " << command << "\n";
  for (const auto& [k, v] : extra) os << "manifest." << k << " = " << v << "\n";
  os << dump_config(cfg);
  if (!os) throw FileFormatError("write failure for manifest: " + path);
}

std::string file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FileFormatError("cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    std::streamsize n = is.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  std::ostringstream ss;
  ss << std::hex;
  ss.width(16);
  ss.fill('0');
  ss << h;
  return ss.str();
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_value<double>(item, "list"));
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_value<std::size_t>(item, "list"));
  }
  return out;
}

}  // namespace rollcast
