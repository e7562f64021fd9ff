// Copyright 2026 GTR-Mamba Contributors
// SPDX-License-Identifier: Apache-2.0

#include "gtr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gtr/error.hpp"

namespace gtr {

std::string Ablations::label() const {
  std::string s;
  auto append = [&s](bool flag, const char* name) {
    if (!flag) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  append(ssm, "ssm");
  append(pretrained, "pretrained-init");
  append(hyperbolic, "hyperbolic-mode");
  append(stc, "st-channel");
  append(attention, "attention");
  append(context, "context-drive");
  return s.empty() ? "none" : s;
}

void apply_ablation(Ablations& a, const std::string& name) {
  if (name == "ssm") {
    a.ssm = true;
  } else if (name == "pretrained-init") {
    a.pretrained = true;
  } else if (name == "hyperbolic-mode") {
    a.hyperbolic = true;
  } else if (name == "st-channel") {
    a.stc = true;
  } else if (name == "attention") {
    a.attention = true;
  } else if (name == "context-drive") {
    a.context = true;
  } else {
    throw ConfigError("unknown ablation: " + name +
                      " (expected ssm|pretrained-init|hyperbolic-mode|st-channel|attention|"
                      "context-drive)");
  }
}

namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

int to_int(const std::string& s) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("expected an integer, got '" + s + "'");
  return v;
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw ConfigError("expected a boolean (0/1/true/false), got '" + s + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

#define INT_KEY(field) \
  Key{[](RunConfig& c, const std::string& v) { c.field = to_int(v); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }}
#define DBL_KEY(field) \
  Key{[](RunConfig& c, const std::string& v) { c.field = to_double(v); }, \
      [](const RunConfig& c) { return fmt(c.field); }}
#define STR_KEY(field) \
  Key{[](RunConfig& c, const std::string& v) { c.field = v; }, \
      [](const RunConfig& c) { return c.field; }}
#define BOOL_KEY(field) \
  Key{[](RunConfig& c, const std::string& v) { c.field = to_bool(v); }, \
      [](const RunConfig& c) { return c.field ? "1" : "0"; }}

const std::map<std::string, Key>& registry() {
  static const std::map<std::string, Key> keys = {
      {"data.path", STR_KEY(data_path)},
      {"data.delimiter",
       Key{[](RunConfig& c, const std::string& v) {
             if (v == "tab") {
               c.cols.delimiter = '\t';
             } else if (v == "comma") {
               c.cols.delimiter = ',';
             } else {
               throw ConfigError("data.delimiter must be tab or comma");
             }
           },
           [](const RunConfig& c) { return c.cols.delimiter == '\t' ? "tab" : "comma"; }}},
      {"data.time_format", STR_KEY(cols.time_format)},
      {"data.use_local_offset", BOOL_KEY(cols.use_local_offset)},
      {"cols.user", INT_KEY(cols.user)},
      {"cols.poi", INT_KEY(cols.poi)},
      {"cols.category", INT_KEY(cols.category)},
      {"cols.lat", INT_KEY(cols.lat)},
      {"cols.lon", INT_KEY(cols.lon)},
      {"cols.time", INT_KEY(cols.time)},
      {"cols.tz_offset", INT_KEY(cols.tz_offset)},
      {"filter.min_poi_checkins", INT_KEY(min_poi_checkins)},
      {"segment.gap_hours", DBL_KEY(gap_hours)},
      {"segment.min_len", INT_KEY(min_len)},
      {"segment.max_len", INT_KEY(max_len)},
      {"regions.count", INT_KEY(regions)},
      {"regions.kmeans_iters", INT_KEY(kmeans_iters)},
      {"model.dim", INT_KEY(dim)},
      {"model.d_geo", INT_KEY(d_geo)},
      {"model.d_time", INT_KEY(d_time)},
      {"model.heads", INT_KEY(heads)},
      {"model.layers", INT_KEY(layers)},
      {"model.curvature", DBL_KEY(curvature)},
      {"geo.anchors", INT_KEY(anchors)},
      {"geo.top_k", INT_KEY(top_k)},
      {"geo.rff_scales", INT_KEY(rff_scales)},
      {"geo.rff_freqs", INT_KEY(rff_freqs)},
      {"time.freqs", INT_KEY(time_freqs)},
      {"fusion.alpha_u", DBL_KEY(fusion.alpha_u)},
      {"fusion.alpha_p", DBL_KEY(fusion.alpha_p)},
      {"fusion.alpha_c", DBL_KEY(fusion.alpha_c)},
      {"fusion.alpha_r", DBL_KEY(fusion.alpha_r)},
      {"pretrain.epochs", INT_KEY(pretrain_epochs)},
      {"pretrain.lr", DBL_KEY(pretrain_lr)},
      {"pretrain.negatives", INT_KEY(negatives)},
      {"pretrain.init_std", DBL_KEY(init_std)},
      {"train.batch", INT_KEY(batch)},
      {"train.lr", DBL_KEY(lr)},
      {"train.epochs", INT_KEY(epochs)},
      {"train.clip", DBL_KEY(clip)},
      {"train.threads", INT_KEY(threads)},
      {"loss.w_poi", DBL_KEY(w_poi)},
      {"loss.w_cat", DBL_KEY(w_cat)},
      {"loss.w_reg", DBL_KEY(w_reg)},
      {"seed",
       Key{[](RunConfig& c, const std::string& v) {
             c.seed = static_cast<std::uint64_t>(std::stoull(v));
           },
           [](const RunConfig& c) { return std::to_string(c.seed); }}},
      {"out.dir", STR_KEY(out_dir)},
      {"ablate",
       Key{[](RunConfig& c, const std::string& v) {
             std::stringstream ss(v);
             std::string name;
             while (std::getline(ss, name, ',')) {
               if (!name.empty() && name != "none") apply_ablation(c.ablate, name);
             }
           },
           [](const RunConfig& c) { return c.ablate.label(); }}},
  };
  return keys;
}

#undef INT_KEY
#undef DBL_KEY
#undef STR_KEY
#undef BOOL_KEY

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(dim, "model.dim");
  positive(d_geo, "model.d_geo");
  positive(d_time, "model.d_time");
  positive(heads, "model.heads");
  positive(layers, "model.layers");
  positive(curvature, "model.curvature");
  positive(batch, "train.batch");
  positive(lr, "train.lr");
  positive(pretrain_lr, "pretrain.lr");
  positive(anchors, "geo.anchors");
  positive(top_k, "geo.top_k");
  positive(rff_scales, "geo.rff_scales");
  positive(rff_freqs, "geo.rff_freqs");
  positive(time_freqs, "time.freqs");
  positive(min_len, "segment.min_len");
  positive(gap_hours, "segment.gap_hours");
  positive(regions, "regions.count");
  if (epochs < 0 || pretrain_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (negatives < 1) throw ConfigError("pretrain.negatives must be >= 1");
  if (max_len < min_len) throw ConfigError("segment.max_len must be >= segment.min_len");
  if (dim % heads != 0) throw ConfigError("model.heads must divide model.dim");
  if (dim % 2 != 0) throw ConfigError("model.dim must be even (rotation blocks)");
  if (threads < 0) throw ConfigError("train.threads must be >= 0");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
  const std::string key = strip(assignment.substr(0, eq));
  const std::string value = strip(assignment.substr(eq + 1));
  const auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown config key: " + key);
  it->second.set(cfg, value);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_config_text(ss.str());
  cfg.validate();
  return cfg;
}

std::string config_echo(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, key] : registry()) {
    out += name;
    out += " = ";
    out += key.get(cfg);
    out += '\n';
  }
  return out;
}

}  // namespace gtr
