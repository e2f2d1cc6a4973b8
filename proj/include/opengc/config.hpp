// Copyright 2026 The OpenGC Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat key=value run configuration. Blank lines and '#' comments are
// ignored; unknown keys are rejected.

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "opengc/error.hpp"
#include "opengc/evaluation.hpp"

namespace opengc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  EvaluationConfig eval;
  std::string dataset;
  std::string output;
  bool symmetrize = true;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" +
                      std::string(key) + "'");
  }
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for key '" +
                    std::string(key) + "'");
}

}  // namespace detail

inline OpensetMode parse_openset_mode(std::string_view text) {
  if (text == "softmax") return OpensetMode::kSoftmax;
  if (text == "openmax") return OpensetMode::kOpenmax;
  throw ConfigError("open-set mode must be softmax or openmax, got '" + std::string(text) + "'");
}

/// Applies one key=value pair to `cfg`.
inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  using detail::parse_number;
  auto& c = cfg.eval.condense;
  auto& e = c.env;
  auto& o = cfg.eval.openset;
  auto& ds = cfg.eval.downstream;
  if (key == "lambda") c.lambda = parse_number<double>(key, value);
  else if (key == "K") c.layers = parse_number<int>(key, value);
  else if (key == "b") c.hidden = parse_number<std::size_t>(key, value);
  else if (key == "alpha") c.alpha = parse_number<double>(key, value);
  else if (key == "gamma") c.gamma = parse_number<double>(key, value);
  else if (key == "eta") e.eta = parse_number<double>(key, value);
  else if (key == "c") e.c = parse_number<double>(key, value);
  else if (key == "env_count") e.env_count = parse_number<int>(key, value);
  else if (key == "beta_mode") {
    if (value == "literal") e.mode = BetaMode::kLiteral;
    else if (value == "intent") e.mode = BetaMode::kIntent;
    else throw ConfigError("beta_mode must be literal or intent");
  } else if (key == "drop_edge_rate") e.drop_edge_rate = parse_number<double>(key, value);
  else if (key == "drop_feature_rate") e.drop_feature_rate = parse_number<double>(key, value);
  else if (key == "fallback_scope") {
    if (value == "no_history") e.fallback_scope = FallbackScope::kNoHistory;
    else if (value == "global") e.fallback_scope = FallbackScope::kGlobal;
    else throw ConfigError("fallback_scope must be no_history or global");
  } else if (key == "lr") c.lr = parse_number<double>(key, value);
  else if (key == "max_iters") c.max_iters = parse_number<int>(key, value);
  else if (key == "patience") c.patience = parse_number<int>(key, value);
  else if (key == "eval_every") c.eval_every = parse_number<int>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "ratio") c.ratio = parse_number<double>(key, value);
  else if (key == "init_noise") c.init_noise = parse_number<double>(key, value);
  else if (key == "threads") c.threads = parse_number<int>(key, value);
  else if (key == "openset") o.mode = parse_openset_mode(value);
  else if (key == "quantile") o.quantile = parse_number<double>(key, value);
  else if (key == "tail_size") o.tail_size = parse_number<std::size_t>(key, value);
  else if (key == "alpha_rank") o.alpha_rank = parse_number<int>(key, value);
  else if (key == "downstream_lr") ds.lr = parse_number<double>(key, value);
  else if (key == "downstream_weight_decay") ds.weight_decay = parse_number<double>(key, value);
  else if (key == "downstream_max_steps") ds.max_steps = parse_number<int>(key, value);
  else if (key == "from_task") cfg.eval.first_task = parse_number<int>(key, value);
  else if (key == "dataset") cfg.dataset = std::string(value);
  else if (key == "output") cfg.output = std::string(value);
  else if (key == "symmetrize") {
    cfg.symmetrize = detail::parse_bool(key, value);
    if (!cfg.symmetrize) throw ConfigError("symmetrize=false is not supported; graphs are undirected");
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

/// Checks the invariants of a parsed configuration.
inline void validate(const RunConfig& cfg) {
  const auto& c = cfg.eval.condense;
  auto check = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  check(c.lambda > 0, "lambda must be positive");
  check(c.layers >= 0, "K must be non-negative");
  check(c.hidden >= 1, "b must be positive");
  check(c.alpha >= 0 && c.gamma >= 0, "alpha and gamma must be non-negative");
  check(c.env.eta >= 0 && c.env.c > 0, "eta must be >= 0 and c > 0");
  check(c.env.env_count >= 1, "env_count must be >= 1");
  check(c.env.drop_edge_rate >= 0 && c.env.drop_edge_rate < 1 &&
            c.env.drop_feature_rate >= 0 && c.env.drop_feature_rate < 1,
        "drop rates must lie in [0, 1)");
  check(c.lr > 0, "lr must be positive");
  check(c.max_iters >= 0 && c.patience >= 1 && c.eval_every >= 0,
        "max_iters/patience/eval_every out of range");
  check(c.ratio > 0 && c.ratio <= 1, "ratio must lie in (0, 1]");
  check(c.threads >= 1, "threads must be >= 1");
  check(cfg.eval.openset.quantile > 0 && cfg.eval.openset.quantile < 1,
        "quantile must lie in (0, 1)");
  check(cfg.eval.openset.tail_size >= 2, "tail_size must be >= 2");
  check(cfg.eval.first_task >= 1, "from_task must be >= 1");
}

inline void parse_config_text(RunConfig& cfg, std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(cfg, detail::trim(view.substr(0, eq)), detail::trim(view.substr(eq + 1)));
  }
}

inline void parse_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  parse_config_text(cfg, text.str());
}

}  // namespace opengc
