// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The tempseg Authors

#include "tempseg/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>

#include "tempseg/error.hpp"

namespace tempseg::config {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* what) {
  throw InvalidArgument("config: " + std::string(key) + "=" + std::string(value) + ": expected " + what);
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<double> to_double_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    out.push_back(to_double(key, trim(v.substr(0, comma))));
    v = comma == std::string_view::npos ? std::string_view{} : v.substr(comma + 1);
  }
  return out;
}

std::string fmt_double_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                              \
  Field {                                                                                     \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_size(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.member); }                           \
  }
#define DOUBLE_FIELD(name, member)                                                              \
  Field {                                                                                       \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_double(k, v); }, \
        [](const RunConfig& c) { return fmt_double(c.member); }                                 \
  }
#define BOOL_FIELD(name, member)                                                              \
  Field {                                                                                     \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.member = to_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }           \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      SIZE_FIELD("input_dim", model.input_dim),
      SIZE_FIELD("model_dim", model.model_dim),
      SIZE_FIELD("n_blocks", model.n_blocks),
      SIZE_FIELD("n_levels", model.n_levels),
      SIZE_FIELD("window_size", model.window_size),
      SIZE_FIELD("n_heads", model.n_heads),
      DOUBLE_FIELD("theta", model.theta),
      SIZE_FIELD("downsample_stride", model.downsample_stride),
      SIZE_FIELD("M_max", model.max_len),
      DOUBLE_FIELD("lr0", train.lr0),
      DOUBLE_FIELD("weight_decay", train.weight_decay),
      SIZE_FIELD("warmup_epochs", train.warmup_epochs),
      SIZE_FIELD("epochs", train.epochs),
      SIZE_FIELD("batch_size", train.batch_size),
      Field{"seed",
            [](RunConfig& c, std::string_view k, std::string_view v) { c.train.seed = to_u64(k, v); },
            [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      Field{"modality",
            [](RunConfig& c, std::string_view, std::string_view v) { c.train.modality = std::string(v); },
            [](const RunConfig& c) { return c.train.modality; }},
      BOOL_FIELD("deterministic", train.deterministic),
      SIZE_FIELD("workers", train.workers),
      Field{"regression_ranges",
            [](RunConfig& c, std::string_view k, std::string_view v) {
              c.train.regression_boundaries = to_double_list(k, v);
            },
            [](const RunConfig& c) { return fmt_double_list(c.train.regression_boundaries); }},
      DOUBLE_FIELD("lambda", loss.lambda),
      DOUBLE_FIELD("focal_focusing", loss.focal_focusing),
      DOUBLE_FIELD("focal_balance", loss.focal_balance),
      BOOL_FIELD("paper_literal_focal", loss.paper_literal_focal),
      DOUBLE_FIELD("pre_nms_threshold", infer.pre_nms_threshold),
      SIZE_FIELD("pre_nms_topk", infer.pre_nms_topk),
      DOUBLE_FIELD("nms_iou", infer.nms_iou),
      SIZE_FIELD("max_outputs", infer.max_outputs),
  };
  return f;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
  loss.validate();
  infer.validate();
  if (!train.regression_boundaries.empty() &&
      train.regression_boundaries.size() + 1 != model.n_levels) {
    throw InvalidArgument("config: regression_ranges needs n_levels - 1 = " +
                          std::to_string(model.n_levels - 1) + " boundaries");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  std::string msg = "config: unknown key '" + std::string(key) + "'; valid keys:";
  for (const auto& k : config_keys()) msg += " " + k;
  throw InvalidArgument(msg);
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    set_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open config " + path.string());
  const std::string text{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return parse_config(text);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace tempseg::config
