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

#include "vitdiag/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "vitdiag/errors.hpp"

namespace vitdiag {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] void fail(int line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

// Drops a trailing comment that is not inside a string.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

TomlValue parse_value(const std::string& raw, int line) {
  if (raw == "true") return true;
  if (raw == "false") return false;
  if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
    std::string out;
    for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
      if (raw[i] == '\\' && i + 2 < raw.size()) {
        const char e = raw[++i];
        out += e == 'n' ? '\n' : e == 't' ? '\t' : e;
      } else {
        out += raw[i];
      }
    }
    return out;
  }
  if (raw.empty() || raw.front() == '[' || raw.front() == '{') fail(line, "unsupported value '" + raw + "'");
  std::string num;
  for (char c : raw)
    if (c != '_') num += c;
  const bool is_float = num.find_first_of(".eE") != std::string::npos || num == "inf" || num == "nan";
  if (!is_float) {
    std::int64_t v = 0;
    const char* first = num.data() + (num[0] == '+' ? 1 : 0);
    auto [p, ec] = std::from_chars(first, num.data() + num.size(), v);
    if (ec == std::errc() && p == num.data() + num.size()) return v;
  } else {
    std::istringstream is(num);
    is.imbue(std::locale::classic());
    double v = 0;
    is >> v;
    if (is && is.peek() == std::char_traits<char>::eof()) return v;
  }
  fail(line, "cannot parse value '" + raw + "'");
}

class Reader {
 public:
  explicit Reader(const TomlTable& t) : table_(t) {}

  template <typename F>
  void section(const std::string& name, F&& body) {
    auto it = table_.find(name);
    if (it == table_.end()) return;
    seen_sections_.insert(name);
    current_ = &it->second;
    name_ = name;
    used_.clear();
    body();
    for (const auto& [k, v] : *current_)
      if (!used_.count(k)) throw ConfigError("unknown key '" + k + "' in [" + name + "]");
    current_ = nullptr;
  }

  void get(const std::string& key, bool& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<bool>(*v)) bad(key, "a boolean");
      out = std::get<bool>(*v);
    }
  }
  void get(const std::string& key, double& out) {
    if (auto* v = find(key)) {
      if (auto* i = std::get_if<std::int64_t>(v)) out = static_cast<double>(*i);
      else if (auto* d = std::get_if<double>(v)) out = *d;
      else bad(key, "a number");
    }
  }
  void get(const std::string& key, int& out) {
    if (auto* v = find(key)) {
      auto* i = std::get_if<std::int64_t>(v);
      if (!i || *i < INT32_MIN || *i > INT32_MAX) bad(key, "an integer");
      out = static_cast<int>(*i);
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (auto* v = find(key)) {
      auto* i = std::get_if<std::int64_t>(v);
      if (!i || *i < 0) bad(key, "a non-negative integer");
      out = static_cast<std::uint64_t>(*i);
    }
  }
  void get(const std::string& key, std::string& out) {
    if (auto* v = find(key)) {
      if (!std::holds_alternative<std::string>(*v)) bad(key, "a string");
      out = std::get<std::string>(*v);
    }
  }
  void get(const std::string& key, std::optional<int>& out) {
    int v = 0;
    if (find(key)) {
      get(key, v);
      out = v;
    }
  }

  void reject_unknown_sections(std::initializer_list<const char*> known) const {
    for (const auto& [name, keys] : table_) {
      bool ok = false;
      for (const char* k : known) ok = ok || name == k;
      if (!ok) throw ConfigError("unknown config section [" + name + "]");
    }
  }

 private:
  const TomlValue* find(const std::string& key) {
    auto it = current_->find(key);
    if (it == current_->end()) return nullptr;
    used_.insert(key);
    return &it->second;
  }
  [[noreturn]] void bad(const std::string& key, const char* what) {
    throw ConfigError("[" + name_ + "] " + key + " must be " + what);
  }

  const TomlTable& table_;
  const std::map<std::string, TomlValue>* current_ = nullptr;
  std::string name_;
  std::set<std::string> used_;
  std::set<std::string> seen_sections_;
};

void read_probe(Reader& r, ProbeConfig& p) {
  r.get("learning_rate", p.learning_rate);
  r.get("weight_decay", p.weight_decay);
  r.get("batch_size", p.batch_size);
  r.get("patience", p.patience);
  r.get("max_epochs", p.max_epochs);
  r.get("seed", p.seed);
  std::string monitor = to_string(p.monitor);
  r.get("monitor", monitor);
  p.monitor = monitor_from_string(monitor);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable t;
  std::string section;
  t[section];
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3 || s[1] == '[') fail(line, "bad section header");
      section = trim(s.substr(1, s.size() - 2));
      if (!valid_key(section)) fail(line, "bad section name");
      if (t.count(section) && !t[section].empty()) fail(line, "duplicate section [" + section + "]");
      t[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(line, "expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) fail(line, "bad key '" + key + "'");
    auto& slot = t[section];
    if (slot.count(key)) fail(line, "duplicate key '" + key + "'");
    slot[key] = parse_value(trim(s.substr(eq + 1)), line);
  }
  if (t[""].empty()) t.erase("");
  return t;
}

void AnalysisConfig::check() const {
  split.check();
  probe.check();
  decoder.check();
  nc_classifier.check();
  if (similarity.n_boot < 1) throw ConfigError("[similarity] n_boot must be >= 1");
  if (!(similarity.ci_level > 0 && similarity.ci_level < 1)) throw ConfigError("[similarity] ci_level must be in (0, 1)");
  if (phase.climb_rise < 0) throw ConfigError("[phase] climb_rise must be non-negative");
  if (pivot_drop_min < 0) throw ConfigError("[pivot] drop_min must be non-negative");
  if (!(regime.escalate_ratio > 0 && regime.final_over_median > 0 && regime.collapse_ratio > 0))
    throw ConfigError("[regime] ratios must be positive");
  if (!(attention.tol > 0) || attention.max_iters < 1) throw ConfigError("[attention] tol and max_iters must be positive");
  if (neural_collapse.chunk_rows < 0) throw ConfigError("[neural_collapse] chunk_rows must be >= 0");
  if (runtime.workers < 0) throw ConfigError("[runtime] workers must be >= 0");
}

AnalysisConfig config_from_toml(const std::string& text) {
  const TomlTable t = parse_toml(text);
  Reader r(t);
  r.reject_unknown_sections({"families", "similarity", "phase", "pivot", "regime", "split", "probe", "decoder",
                             "nc_classifier", "neural_collapse", "attention", "controls", "runtime"});
  AnalysisConfig c;
  bool seed_split = false, seed_probe = false, seed_decoder = false, seed_nc = false;
  r.section("families", [&] {
    r.get("similarity", c.families.similarity);
    r.get("phase", c.families.phase);
    r.get("neural_collapse", c.families.neural_collapse);
    r.get("info_plane", c.families.info_plane);
    r.get("attention", c.families.attention);
    r.get("controls", c.families.controls);
  });
  r.section("similarity", [&] {
    r.get("n_boot", c.similarity.n_boot);
    r.get("ci_level", c.similarity.ci_level);
    r.get("include_cls", c.similarity.include_cls);
  });
  r.section("phase", [&] {
    r.get("threshold", c.phase.threshold);
    r.get("climb_rise", c.phase.climb_rise);
    r.get("reference_plateau_length", c.phase.reference_plateau_length);
  });
  r.section("pivot", [&] { r.get("drop_min", c.pivot_drop_min); });
  r.section("regime", [&] {
    r.get("escalate_ratio", c.regime.escalate_ratio);
    r.get("final_over_median", c.regime.final_over_median);
    r.get("collapse_ratio", c.regime.collapse_ratio);
  });
  r.section("split", [&] {
    r.get("train", c.split.train);
    r.get("val", c.split.val);
    r.get("test", c.split.test);
    r.get("stratified", c.split.stratified);
    seed_split = t.at("split").count("seed") > 0;
    r.get("seed", c.split.seed);
  });
  r.section("probe", [&] {
    seed_probe = t.at("probe").count("seed") > 0;
    read_probe(r, c.probe);
  });
  r.section("decoder", [&] {
    seed_decoder = t.at("decoder").count("seed") > 0;
    read_probe(r, c.decoder);
    r.get("bias", c.decoder_options.bias);
  });
  r.section("nc_classifier", [&] {
    seed_nc = t.at("nc_classifier").count("seed") > 0;
    read_probe(r, c.nc_classifier);
  });
  r.section("neural_collapse", [&] { r.get("chunk_rows", c.neural_collapse.chunk_rows); });
  r.section("attention", [&] {
    r.get("per_image_chains", c.attention.per_image_chains);
    r.get("tol", c.attention.tol);
    r.get("max_iters", c.attention.max_iters);
  });
  r.section("controls", [&] {
    r.get("layer", c.controls.layer);
    std::string kind = to_string(c.controls.decoder_kind);
    r.get("decoder_kind", kind);
    c.controls.decoder_kind = decoder_kind_from_string(kind);
  });
  r.section("runtime", [&] {
    r.get("workers", c.runtime.workers);
    r.get("seed", c.runtime.seed);
  });
  // Component seeds follow the runtime seed unless set explicitly.
  if (!seed_split) c.split.seed = derive_seed(c.runtime.seed, 1);
  if (!seed_probe) c.probe.seed = derive_seed(c.runtime.seed, 2);
  if (!seed_decoder) c.decoder.seed = derive_seed(c.runtime.seed, 3);
  if (!seed_nc) c.nc_classifier.seed = derive_seed(c.runtime.seed, 4);
  c.check();
  return c;
}

AnalysisConfig load_config(const std::filesystem::path& path) { return config_from_toml(read_file(path)); }

namespace {

nlohmann::json probe_json(const ProbeConfig& p) {
  return {{"learning_rate", p.learning_rate}, {"weight_decay", p.weight_decay}, {"batch_size", p.batch_size},
          {"patience", p.patience},           {"max_epochs", p.max_epochs},     {"seed", p.seed},
          {"monitor", to_string(p.monitor)}};
}

}  // namespace

nlohmann::json config_to_json(const AnalysisConfig& c) {
  nlohmann::json j;
  j["families"] = {{"similarity", c.families.similarity}, {"phase", c.families.phase},
                   {"neural_collapse", c.families.neural_collapse}, {"info_plane", c.families.info_plane},
                   {"attention", c.families.attention}, {"controls", c.families.controls}};
  j["similarity"] = {{"n_boot", c.similarity.n_boot}, {"ci_level", c.similarity.ci_level},
                     {"include_cls", c.similarity.include_cls}};
  j["phase"] = {{"threshold", c.phase.threshold}, {"climb_rise", c.phase.climb_rise}};
  if (c.phase.reference_plateau_length) j["phase"]["reference_plateau_length"] = *c.phase.reference_plateau_length;
  j["pivot"] = {{"drop_min", c.pivot_drop_min}};
  j["regime"] = {{"escalate_ratio", c.regime.escalate_ratio}, {"final_over_median", c.regime.final_over_median},
                 {"collapse_ratio", c.regime.collapse_ratio}};
  j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test},
                {"stratified", c.split.stratified}, {"seed", c.split.seed}};
  j["probe"] = probe_json(c.probe);
  j["decoder"] = probe_json(c.decoder);
  j["decoder"]["bias"] = c.decoder_options.bias;
  j["nc_classifier"] = probe_json(c.nc_classifier);
  j["neural_collapse"] = {{"chunk_rows", c.neural_collapse.chunk_rows}};
  j["attention"] = {{"per_image_chains", c.attention.per_image_chains}, {"tol", c.attention.tol},
                    {"max_iters", c.attention.max_iters}};
  j["controls"] = {{"layer", c.controls.layer}, {"decoder_kind", to_string(c.controls.decoder_kind)}};
  j["runtime"] = {{"seed", c.runtime.seed}};
  return j;
}

SynthSpec synth_spec_from_toml(const std::string& text, Scenario scenario) {
  const TomlTable t = parse_toml(text);
  Reader r(t);
  r.reject_unknown_sections({"synth"});
  SynthSpec s = SynthSpec::defaults(scenario);
  r.section("synth", [&] {
    r.get("B", s.B);
    r.get("L", s.L);
    r.get("P", s.P);
    r.get("D", s.D);
    r.get("C", s.C);
    r.get("H", s.H);
    r.get("noise_sigma", s.noise_sigma);
    r.get("seed", s.seed);
  });
  return s;
}

}  // namespace vitdiag
