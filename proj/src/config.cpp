// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/config.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>

#include "drdt3/errors.hpp"

namespace drdt3 {

std::string_view to_string(LossNorm n) { return n == LossNorm::kL1 ? "l1" : "l2"; }
std::string_view to_string(EvalMode m) { return m == EvalMode::kDrdt3 ? "drdt3" : "dt3-only"; }

LossNorm parse_loss_norm(std::string_view s) {
  if (s == "l1" || s == "L1") return LossNorm::kL1;
  if (s == "l2" || s == "L2") return LossNorm::kL2;
  throw ConfigError("expected l1 or l2, got '" + std::string(s) + "'");
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "drdt3") return EvalMode::kDrdt3;
  if (s == "dt3-only" || s == "dt3_only") return EvalMode::kDt3Only;
  throw ConfigError("expected drdt3 or dt3-only, got '" + std::string(s) + "'");
}

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed is parsed as a size_t field");

using FieldRef = std::variant<std::size_t*, double*, bool*, LossNorm*,
                              diffusion::NoiseVariant*, EvalMode*>;

struct Field {
  const char* key;
  FieldRef ref;
};

std::vector<Field> fields(TrainConfig& c) {
  return {
      {"context_len", &c.context_len},
      {"batch_size", &c.batch_size},
      {"learning_rate", &c.learning_rate},
      {"epochs", &c.epochs},
      {"updates_per_epoch", &c.updates_per_epoch},
      {"zeta", &c.zeta},
      {"dt3_loss_norm", &c.dt3_loss_norm},
      {"weight_decay", &c.weight_decay},
      {"grad_clip", &c.grad_clip},
      {"adam_beta1", &c.adam_beta1},
      {"adam_beta2", &c.adam_beta2},
      {"adam_eps", &c.adam_eps},
      {"seed", &c.seed},
      {"embed_dim", &c.embed_dim},
      {"n_heads", &c.n_heads},
      {"n_blocks", &c.n_blocks},
      {"inner_lr", &c.inner_lr},
      {"ttt_proj_rank", &c.ttt_proj_rank},
      {"include_action_tokens", &c.include_action_tokens},
      {"dt_mode", &c.dt_mode},
      {"init_std", &c.init_std},
      {"diffusion_steps", &c.diffusion_steps},
      {"beta_min", &c.beta_min},
      {"beta_max", &c.beta_max},
      {"noise_approx_variant", &c.noise_approx_variant},
      {"mlp_expansion", &c.mlp_expansion},
      {"time_embed_dim", &c.time_embed_dim},
      {"noise_hidden_dim", &c.noise_hidden_dim},
      {"sqrt_beta_noise", &c.sqrt_beta_noise},
      {"use_diffusion_loss", &c.use_diffusion_loss},
      {"condition_on_rtg", &c.condition_on_rtg},
      {"eval_episodes", &c.eval_episodes},
      {"rtg_scale", &c.rtg_scale},
      {"eval_mode", &c.eval_mode},
  };
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
T parse_unsigned(std::string_view s) {
  T out{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return out;
}

double parse_double(std::string_view s) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(out)) {
    throw ConfigError("expected a finite number, got '" + std::string(s) + "'");
  }
  return out;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(s) + "'");
}

std::string value_string(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<T, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_integral_v<T>) {
          return std::to_string(*p);
        } else {
          return std::string(to_string(*p));
        }
      },
      ref);
}

void assign(const FieldRef& ref, std::string_view text) {
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, double>) {
          *p = parse_double(text);
        } else if constexpr (std::is_same_v<T, bool>) {
          *p = parse_bool(text);
        } else if constexpr (std::is_integral_v<T>) {
          *p = parse_unsigned<T>(text);
        } else if constexpr (std::is_same_v<T, LossNorm>) {
          *p = parse_loss_norm(text);
        } else if constexpr (std::is_same_v<T, EvalMode>) {
          *p = parse_eval_mode(text);
        } else {
          *p = diffusion::parse_noise_variant(text);
        }
      },
      ref);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw ConfigError(std::string("field '") + field + "': " + what);
}

}  // namespace

void TrainConfig::validate() const {
  require(context_len >= 1, "context_len", "must be >= 1");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(learning_rate > 0.0, "learning_rate", "must be > 0");
  require(epochs >= 1, "epochs", "must be >= 1");
  require(updates_per_epoch >= 1, "updates_per_epoch", "must be >= 1");
  require(zeta >= 0.0, "zeta", "must be >= 0");
  require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
  require(grad_clip >= 0.0, "grad_clip", "must be >= 0 (0 disables clipping)");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
  require(adam_eps > 0.0, "adam_eps", "must be > 0");
  require(embed_dim >= 1, "embed_dim", "must be >= 1");
  require(n_heads >= 1 && embed_dim % n_heads == 0, "n_heads", "must divide embed_dim");
  require(n_blocks >= 1, "n_blocks", "must be >= 1");
  require(inner_lr >= 0.0, "inner_lr", "must be >= 0");
  require(ttt_proj_rank <= embed_dim, "ttt_proj_rank", "must not exceed embed_dim");
  require(init_std > 0.0, "init_std", "must be > 0");
  require(diffusion_steps >= 1, "diffusion_steps", "must be >= 1");
  require(beta_min > 0.0, "beta_min", "must be > 0");
  require(beta_max >= beta_min, "beta_max", "must be >= beta_min");
  require(mlp_expansion >= 1, "mlp_expansion", "must be >= 1");
  require(time_embed_dim >= 2 && time_embed_dim % 2 == 0, "time_embed_dim",
          "must be a positive even number");
  require(noise_hidden_dim >= 1, "noise_hidden_dim", "must be >= 1");
  require(rtg_scale > 0.0, "rtg_scale", "must be > 0");
}

dt3::ModelConfig TrainConfig::model_config(std::size_t state_dim, std::size_t action_dim,
                                           std::size_t max_episode_len) const {
  dt3::ModelConfig m;
  m.state_dim = state_dim;
  m.action_dim = action_dim;
  m.embed_dim = embed_dim;
  m.max_episode_len = max_episode_len;
  m.n_heads = n_heads;
  m.n_blocks = n_blocks;
  m.inner_lr = inner_lr;
  m.ttt_proj_rank = ttt_proj_rank;
  m.include_action_tokens = include_action_tokens;
  m.dt_mode = dt_mode;
  m.init_std = init_std;
  return m;
}

diffusion::NoiseConfig TrainConfig::noise_config(std::size_t action_dim) const {
  diffusion::NoiseConfig n;
  n.action_dim = action_dim;
  n.time_embed_dim = time_embed_dim;
  n.hidden_dim = noise_hidden_dim;
  n.expansion = mlp_expansion;
  n.variant = noise_approx_variant;
  return n;
}

std::vector<std::string> config_keys() {
  TrainConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.emplace_back(f.key);
  return keys;
}

std::string serialize_config(const TrainConfig& config) {
  TrainConfig c = config;
  std::string out;
  for (const auto& f : fields(c)) out += std::string(f.key) + " = " + value_string(f.ref) + "\n";
  return out;
}

void set_config_value(TrainConfig& config, std::string_view key, std::string_view value) {
  for (const auto& f : fields(config)) {
    if (key == f.key) {
      try {
        assign(f.ref, value);
      } catch (const ConfigError& e) {
        throw ConfigError("field '" + std::string(key) + "': " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown key '" + std::string(key) + "'");
}

TrainConfig parse_config(std::string_view text, std::string_view source) {
  TrainConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key before '='");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    }
    try {
      set_config_value(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string config_hash(const TrainConfig& config) {
  const std::string text = serialize_config(config);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw EvaluationError("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace drdt3
