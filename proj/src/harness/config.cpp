// SPDX-License-Identifier: Apache-2.0
#include "galore/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "galore/errors.hpp"

namespace galore {
namespace {

std::string quoted(std::string_view v) { return "'" + std::string(v) + "'"; }

std::string trim(std::string_view v) {
  const auto first = v.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = v.find_last_not_of(" \t\r\n");
  return std::string(v.substr(first, last - first + 1));
}

std::uint64_t parse_uint(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  std::uint64_t out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || end != v.data() + v.size())
    throw ConfigError(std::string(key) + ": expected a non-negative integer, got " + quoted(raw));
  return out;
}

std::size_t parse_size(std::string_view key, std::string_view raw) {
  return static_cast<std::size_t>(parse_uint(key, raw));
}

double parse_double(std::string_view key, std::string_view raw) {
  const std::string v = trim(raw);
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
    throw ConfigError(std::string(key) + ": expected a finite number, got " + quoted(raw));
  return out;
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::optional<std::string>(const RunConfig&)> get;
};

#define SIZE_FIELD(sec, name, member)                                                     \
  Field{sec, name, [](RunConfig& c, std::string_view v) { c.member = parse_size(name, v); }, \
        [](const RunConfig& c) -> std::optional<std::string> { return std::to_string(c.member); }}
#define DOUBLE_FIELD(sec, name, member)                                                      \
  Field{sec, name, [](RunConfig& c, std::string_view v) { c.member = parse_double(name, v); }, \
        [](const RunConfig& c) -> std::optional<std::string> { return fmt_double(c.member); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"run", "method",
            [](RunConfig& c, std::string_view v) { c.method = parse_method(trim(v)); },
            [](const RunConfig& c) -> std::optional<std::string> {
              if (!c.method) return std::nullopt;
              return std::string(to_string(*c.method));
            }},
      SIZE_FIELD("run", "steps", steps),
      Field{"run", "seed", [](RunConfig& c, std::string_view v) { c.seed = parse_uint("seed", v); },
            [](const RunConfig& c) -> std::optional<std::string> { return std::to_string(c.seed); }},
      Field{"run", "out", [](RunConfig& c, std::string_view v) { c.output_dir = trim(v); },
            [](const RunConfig& c) -> std::optional<std::string> { return c.output_dir; }},

      DOUBLE_FIELD("optimizer", "lr", optimizer.lr),
      DOUBLE_FIELD("optimizer", "beta1", optimizer.beta1),
      DOUBLE_FIELD("optimizer", "beta2", optimizer.beta2),
      DOUBLE_FIELD("optimizer", "eps", optimizer.eps),
      DOUBLE_FIELD("optimizer", "weight_decay", optimizer.weight_decay),
      DOUBLE_FIELD("optimizer", "alpha", optimizer.alpha),
      SIZE_FIELD("optimizer", "rank", optimizer.rank),
      SIZE_FIELD("optimizer", "interval", optimizer.interval),

      SIZE_FIELD("rsvd", "oversample", oversample),
      SIZE_FIELD("rsvd", "power_iters", power_iters),

      DOUBLE_FIELD("residual", "ratio", residual.ratio),
      Field{"residual", "warmup",
            [](RunConfig& c, std::string_view v) { c.warmup = parse_size("warmup", v); },
            [](const RunConfig& c) -> std::optional<std::string> {
              if (!c.warmup) return std::nullopt;
              return std::to_string(*c.warmup);
            }},
      DOUBLE_FIELD("residual", "alpha_res", residual.alpha_res),
      Field{"residual", "clamp",
            [](RunConfig& c, std::string_view v) {
              const std::string name = trim(v);
              if (name == "skip") c.residual.clamp = ClampPolicy::skip;
              else if (name == "floor") c.residual.clamp = ClampPolicy::floor;
              else throw ConfigError("clamp: expected skip or floor, got " + quoted(v));
            },
            [](const RunConfig& c) -> std::optional<std::string> {
              return std::string(c.residual.clamp == ClampPolicy::skip ? "skip" : "floor");
            }},

      Field{"projection", "fixed_head",
            [](RunConfig& c, std::string_view v) { c.fixed_head = parse_size("fixed_head", v); },
            [](const RunConfig& c) -> std::optional<std::string> {
              if (!c.fixed_head) return std::nullopt;
              return std::to_string(*c.fixed_head);
            }},

      SIZE_FIELD("model", "heads", model.layout.heads),
      SIZE_FIELD("model", "d_model", model.layout.d_model),
      SIZE_FIELD("model", "d_k", model.layout.d_k),
      SIZE_FIELD("model", "d_v", model.layout.d_v),
      SIZE_FIELD("model", "out_dim", model.out_dim),
      Field{"model", "teacher_seed",
            [](RunConfig& c, std::string_view v) { c.task.teacher_seed = parse_uint("teacher_seed", v); },
            [](const RunConfig& c) -> std::optional<std::string> {
              return std::to_string(c.task.teacher_seed);
            }},
      DOUBLE_FIELD("model", "noise_std", task.noise_std),
      SIZE_FIELD("model", "batch_size", task.batch_size),
      SIZE_FIELD("model", "seq_len", task.seq_len),
      SIZE_FIELD("model", "input_rank", task.input_rank),
      DOUBLE_FIELD("model", "input_decay", task.input_decay),
      DOUBLE_FIELD("model", "input_noise", task.input_noise),
      DOUBLE_FIELD("model", "head_perturbation", task.head_perturbation),
  };
  return table;
}

#undef SIZE_FIELD
#undef DOUBLE_FIELD

const Field* find_field(std::string_view key) {
  for (const Field& f : fields())
    if (key == f.key) return &f;
  return nullptr;
}

bool known_section(std::string_view name) {
  for (const Field& f : fields())
    if (name == f.section) return true;
  return false;
}

}  // namespace

const char* to_string(Method method) noexcept {
  switch (method) {
    case Method::dense_adamw: return "dense-adamw";
    case Method::galore_exact: return "galore-exact";
    case Method::galore_rsvd: return "galore-rsvd";
    case Method::galore_plus: return "galore-plus";
    case Method::galore_plus_nores: return "galore-plus-nores";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::dense_adamw, Method::galore_exact, Method::galore_rsvd,
                   Method::galore_plus, Method::galore_plus_nores})
    if (name == to_string(m)) return m;
  throw ConfigError("method: unknown method " + quoted(name));
}

ResidualConfig RunConfig::resolved_residual() const {
  ResidualConfig r = residual;
  r.warmup_k = warmup_k();
  return r;
}

void RunConfig::validate() const {
  if (!method) throw ConfigError("method: required");
  if (steps < 1) throw ConfigError("steps: must be >= 1");
  if (output_dir.empty()) throw ConfigError("out: must not be empty");
  try {
    optimizer.validate();
    resolved_residual().validate();
    model.validate();
    task.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (task.input_rank > model.layout.d_model) throw ConfigError("input_rank: exceeds d_model");
  if (fixed_head && *fixed_head >= model.layout.heads)
    throw ConfigError("fixed_head: must be < heads");
}

bool RunConfig::operator==(const RunConfig& o) const {
  for (const Field& f : fields())
    if (f.get(*this) != f.get(o)) return false;
  return true;
}

void set_field(RunConfig& cfg, std::string_view key, std::string_view value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key " + quoted(key));
  f->set(cfg, value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

RunConfig read_config_text(const std::string& text, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(source + ":" + std::to_string(e.line()) + ": " + e.message());
  }

  RunConfig cfg;
  auto apply = [&](const std::string& section, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f || (!section.empty() && section != f->section)) {
      const std::string where = section.empty() ? key : section + "." + key;
      throw ConfigError(source + ": unknown key " + quoted(where));
    }
    f->set(cfg, value);
  };
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      if (known_section(name) && !find_field(name)) continue;  // empty section
      apply("", name, node.data());
      continue;
    }
    if (!known_section(name)) throw ConfigError(source + ": unknown section " + quoted(name));
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError(source + ": nested key " + quoted(name + "." + key));
      apply(name, key, leaf.data());
    }
  }
  return cfg;
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg = read_config_text(text, source);
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return read_config_text(text.str(), path);
}

RunConfig parse_config(const std::string& path) {
  RunConfig cfg = read_config(path);
  cfg.validate();
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    const std::optional<std::string> value = f.get(cfg);
    if (!value) continue;
    if (section != f.section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << *value << '\n';
  }
  return out.str();
}

}  // namespace galore
