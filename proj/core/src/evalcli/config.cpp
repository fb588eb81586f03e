// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/evalcli/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>

#include "unipde/common.hpp"

namespace unipde::eval {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_f64(const std::string& key, const std::string& v) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
    throw ConfigError("'" + key + "' expects a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string l = v;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_same_v<T, std::string>) {
      out += x;
    } else {
      out += fmt(static_cast<std::uint64_t>(x));
    }
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define UNIPDE_SIZE_FIELD(KEY, MEMBER)                                                                    \
  Field {                                                                                                 \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = static_cast<std::size_t>(to_u64(KEY, v)); }, \
        [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.MEMBER)); }               \
  }
#define UNIPDE_REAL_FIELD(KEY, MEMBER)                                                       \
  Field {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_f64(KEY, v); },      \
        [](const ExperimentConfig& c) { return fmt(c.MEMBER); }                              \
  }
#define UNIPDE_BOOL_FIELD(KEY, MEMBER)                                                       \
  Field {                                                                                    \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); },     \
        [](const ExperimentConfig& c) { return fmt(c.MEMBER); }                              \
  }
#define UNIPDE_FAMILIES_FIELD(KEY, MEMBER)                                                     \
  Field {                                                                                      \
    KEY, [](ExperimentConfig& c, const std::string& v) { c.MEMBER = parse_family_list(v); },  \
        [](const ExperimentConfig& c) { return family_list_text(c.MEMBER); }                   \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"out_dir", [](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
       [](const ExperimentConfig& c) { return c.out_dir.string(); }},
      {"data_seed", [](ExperimentConfig& c, const std::string& v) { c.data_seed = to_u64("data_seed", v); },
       [](const ExperimentConfig& c) { return fmt(c.data_seed); }},
      {"seeds",
       [](ExperimentConfig& c, const std::string& v) {
         c.seeds.clear();
         for (const auto& s : split(v, ',')) c.seeds.push_back(to_u64("seeds", s));
       },
       [](const ExperimentConfig& c) { return join(c.seeds); }},
      UNIPDE_SIZE_FIELD("n", n),
      UNIPDE_SIZE_FIELD("timesteps", timesteps),
      UNIPDE_REAL_FIELD("t_final", t_final),
      UNIPDE_SIZE_FIELD("train_traj", train_traj),
      UNIPDE_SIZE_FIELD("test_traj", test_traj),
      UNIPDE_SIZE_FIELD("heldout_traj", heldout_traj),
      UNIPDE_FAMILIES_FIELD("train_families", train_families),
      UNIPDE_FAMILIES_FIELD("heldout_families", heldout_families),
      UNIPDE_FAMILIES_FIELD("unseen_families", unseen_families),
      {"settings", [](ExperimentConfig& c, const std::string& v) { c.settings = split(v, ','); },
       [](const ExperimentConfig& c) { return join(c.settings); }},
      {"transfer_settings", [](ExperimentConfig& c, const std::string& v) { c.transfer_settings = split(v, ','); },
       [](const ExperimentConfig& c) { return join(c.transfer_settings); }},
      {"fewshot_k",
       [](ExperimentConfig& c, const std::string& v) {
         c.fewshot_k.clear();
         for (const auto& s : split(v, ',')) c.fewshot_k.push_back(static_cast<std::size_t>(to_u64("fewshot_k", s)));
       },
       [](const ExperimentConfig& c) { return join(c.fewshot_k); }},
      {"superres_m",
       [](ExperimentConfig& c, const std::string& v) {
         c.superres_m.clear();
         for (const auto& s : split(v, ',')) c.superres_m.push_back(static_cast<std::size_t>(to_u64("superres_m", s)));
       },
       [](const ExperimentConfig& c) { return join(c.superres_m); }},
      UNIPDE_FAMILIES_FIELD("superres_families", superres_families),
      UNIPDE_SIZE_FIELD("rollout_steps", rollout_steps),
      UNIPDE_BOOL_FIELD("baseline", baseline),
      UNIPDE_SIZE_FIELD("eval_every", eval_every),
      UNIPDE_SIZE_FIELD("eval_batch", eval_batch),
      {"corpus", [](ExperimentConfig& c, const std::string& v) { c.corpus = v; },
       [](const ExperimentConfig& c) { return c.corpus.string(); }},
      UNIPDE_SIZE_FIELD("corpus_lines", corpus_lines),
      {"threads",
       [](ExperimentConfig& c, const std::string& v) { c.threads = static_cast<int>(to_u64("threads", v)); },
       [](const ExperimentConfig& c) { return fmt(static_cast<std::uint64_t>(c.threads)); }},
      UNIPDE_SIZE_FIELD("model.channels", model.channels),
      UNIPDE_SIZE_FIELD("model.modes", model.modes),
      UNIPDE_SIZE_FIELD("model.fno_depth", model.fno_depth),
      UNIPDE_SIZE_FIELD("model.embed", model.embed),
      UNIPDE_SIZE_FIELD("model.body_depth", model.body_depth),
      UNIPDE_SIZE_FIELD("model.heads", model.heads),
      UNIPDE_BOOL_FIELD("model.use_coords", model.use_coords),
      UNIPDE_BOOL_FIELD("model.use_metadata", model.use_metadata),
      UNIPDE_SIZE_FIELD("model.max_meta_len", model.max_meta_len),
      UNIPDE_SIZE_FIELD("model.mlp_ratio", model.mlp_ratio),
      UNIPDE_SIZE_FIELD("train.batch_size", train.batch_size),
      UNIPDE_REAL_FIELD("train.lr", train.lr),
      UNIPDE_REAL_FIELD("train.weight_decay", train.weight_decay),
      UNIPDE_REAL_FIELD("train.grad_clip", train.grad_clip),
      UNIPDE_REAL_FIELD("train.dropout", train.dropout),
      UNIPDE_SIZE_FIELD("train.stage1_epochs", train.stage1_epochs),
      UNIPDE_SIZE_FIELD("train.stage2_epochs", train.stage2_epochs),
      UNIPDE_REAL_FIELD("train.fewshot_lr", train.fewshot_lr),
      UNIPDE_SIZE_FIELD("train.fewshot_epochs", train.fewshot_epochs),
      UNIPDE_BOOL_FIELD("train.mmd_median", train.mmd_median),
      UNIPDE_REAL_FIELD("train.mmd_sigma", train.mmd_sigma),
      UNIPDE_REAL_FIELD("train.align_weight", train.align_weight),
      UNIPDE_REAL_FIELD("train.task_weight", train.task_weight),
      {"train.stage1_trainable",
       [](ExperimentConfig& c, const std::string& v) { c.train.stage1_trainable = train::parse_stage1_trainable(v); },
       [](const ExperimentConfig& c) { return train::stage1_trainable_name(c.train.stage1_trainable); }},
      UNIPDE_SIZE_FIELD("train.align_reference_size", train.align_reference_size),
      UNIPDE_SIZE_FIELD("train.checkpoint_every", train.checkpoint_every),
  };
  return table;
}

#undef UNIPDE_SIZE_FIELD
#undef UNIPDE_REAL_FIELD
#undef UNIPDE_BOOL_FIELD
#undef UNIPDE_FAMILIES_FIELD

}  // namespace

KeyValues KeyValues::parse(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    kv.values_[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void KeyValues::set(const std::string& key, const std::string& value) { values_[trim(key)] = trim(value); }

void KeyValues::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

void KeyValues::merge(const KeyValues& overrides) {
  for (const auto& [k, v] : overrides.values_) values_[k] = v;
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string FamilyEntry::text() const {
  std::string out = pde::family_name(family);
  for (const auto& [k, v] : coefficients) out += " " + k + "=" + fmt(v);
  return out;
}

std::vector<FamilyEntry> parse_family_list(const std::string& text) {
  std::vector<FamilyEntry> out;
  for (const auto& item : split(text, ';')) {
    if (item.empty()) throw ConfigError("empty entry in family list '" + text + "'");
    std::istringstream in(item);
    std::string word;
    in >> word;
    FamilyEntry e;
    e.family = pde::parse_family(word);
    if (e.family == pde::Family::kExternal) throw ConfigError("external data cannot be listed as a generated family");
    const auto defaults = pde::default_coefficients(e.family);
    e.coefficients = defaults;
    while (in >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos) throw ConfigError("expected coefficient=value in '" + item + "'");
      const std::string key = word.substr(0, eq);
      if (!defaults.count(key)) {
        throw ConfigError("family " + pde::family_name(e.family) + " has no coefficient '" + key + "'");
      }
      e.coefficients[key] = to_f64(key, word.substr(eq + 1));
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string family_list_text(const std::vector<FamilyEntry>& entries) {
  std::string out;
  for (const auto& e : entries) out += (out.empty() ? "" : "; ") + e.text();
  return out;
}

ExperimentConfig ExperimentConfig::desk_preset() {
  ExperimentConfig c;
  c.train_families = parse_family_list("advection beta=0.4; burgers nu=0.001; diffusion_sorption; shallow_water");
  c.heldout_families = parse_family_list("reaction_diffusion_1d; reaction_diffusion_2d");
  c.unseen_families = parse_family_list("burgers nu=1.0");
  c.superres_families = parse_family_list("advection beta=0.4");
  return c;
}

ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
  ExperimentConfig c = desk_preset();
  for (const auto& [key, value] : kv.entries()) {
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(c, value);
  }
  c.validate();
  return c;
}

KeyValues ExperimentConfig::to_key_values() const {
  KeyValues kv;
  for (const auto& f : fields()) kv.set(f.key, f.get(*this));
  return kv;
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("experiment config: " + m); };
  if (seeds.empty()) fail("seeds must list at least one seed");
  if (!is_pow2(n) || n < 4) fail("n must be a power of two >= 4");
  if (timesteps == 1) fail("timesteps must be 0 (family default) or >= 2");
  if (t_final < 0.0) fail("t_final must be >= 0");
  if (train_traj < 1 || test_traj < 1) fail("train_traj and test_traj must be >= 1");
  if (train_families.empty()) fail("train_families must not be empty");
  if (settings.empty()) fail("settings must not be empty");
  std::vector<std::string> names;
  for (const auto* list : {&train_families, &heldout_families, &unseen_families}) {
    for (const auto& e : *list) names.push_back(e.text());
  }
  auto sorted = names;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("a family appears in more than one list");
  for (const auto& s : settings) setting_plan(*this, s);
  for (const auto& s : transfer_settings) {
    if (std::find(settings.begin(), settings.end(), s) == settings.end()) {
      log_warn("transfer setting '" + s + "' is not in settings and will not run");
    }
  }
  for (std::size_t m : superres_m) {
    if (!is_pow2(m) || m < n) fail("superres_m entries must be powers of two >= n");
  }
  for (const auto& e : superres_families) {
    if (std::find(train_families.begin(), train_families.end(), e) == train_families.end()) {
      fail("superres family '" + e.text() + "' is not a training family");
    }
  }
  if (rollout_steps < 1) fail("rollout_steps must be >= 1");
  if (eval_batch < 1) fail("eval_batch must be >= 1");
  if (threads < 1) fail("threads must be >= 1");
  if (corpus.empty() && corpus_lines < 2) fail("corpus_lines must be >= 2");
  train.validate();
}

std::string ExperimentConfig::hash() const {
  KeyValues kv = to_key_values();
  kv.set("out_dir", "");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(kv.to_text())));
  return buf;
}

SettingPlan setting_plan(const ExperimentConfig& cfg, const std::string& setting) {
  SettingPlan p;
  p.name = setting;
  p.model = cfg.model;
  p.model.n = cfg.n;
  p.model.quantities = rep::kNumQuantities;
  p.train = cfg.train;
  if (setting == "full") {
  } else if (setting == "no_stage1") {
    p.stage1 = false;
  } else if (setting == "no_align") {
    p.train.align_weight = 0.0;
  } else if (setting == "no_task") {
    p.train.task_weight = 0.0;
  } else if (setting == "no_metadata") {
    p.model.use_metadata = false;
  } else if (setting.size() > 1 && setting[0] == 'l' &&
             std::all_of(setting.begin() + 1, setting.end(), [](unsigned char ch) { return std::isdigit(ch); })) {
    p.model.channels = static_cast<std::size_t>(to_u64("setting", setting.substr(1)));
  } else {
    throw ConfigError("unknown setting '" + setting + "' (full, no_stage1, no_align, no_task, no_metadata, l<channels>)");
  }
  if (p.train.stage1_epochs == 0) p.stage1 = false;
  p.model.validate();
  p.train.validate();
  return p;
}

}  // namespace unipde::eval
