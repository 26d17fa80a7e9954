#pragma once

// Run configuration. The file format is a small TOML subset:
//
//   # comment
//   key = value              value: "string" | integer | float | true | false | [v, ...]
//   [table]                  following keys go into this table
//   [[task]]                 appends a table to the "task" array
//
// Arrays may nest and may span lines. Keys are bare words [A-Za-z0-9_-].
// Parsing yields a JSON tree; validate_config turns that into a RunConfig and
// reports every violation it finds, not just the first.

#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skill/accounting.hpp"
#include "skill/agent.hpp"
#include "skill/backbone_bb.hpp"
#include "skill/binio.hpp"
#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/head.hpp"
#include "skill/network.hpp"

namespace skill {

using json = nlohmann::json;

namespace detail {

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (!eof()) {
      skip_ws_and_comments(true);
      if (eof()) break;
      const std::size_t line = line_;
      if (peek() == '[') {
        const bool array = text_.substr(pos_, 2) == "[[";
        pos_ += array ? 2 : 1;
        skip_ws_and_comments(false);
        const std::string name = key();
        skip_ws_and_comments(false);
        expect(array ? "]]" : "]");
        if (array) {
          json& arr = root[name];
          if (arr.is_null()) arr = json::array();
          if (!arr.is_array()) error(line, "'" + name + "' is both a table and an array of tables");
          arr.push_back(json::object());
          table = &arr.back();
        } else {
          if (root.contains(name)) error(line, "table [" + name + "] defined twice");
          root[name] = json::object();
          table = &root[name];
        }
      } else {
        const std::string k = key();
        skip_ws_and_comments(false);
        expect("=");
        skip_ws_and_comments(false);
        json v = value();
        if (table->contains(k)) error(line, "duplicate key '" + k + "'");
        (*table)[k] = std::move(v);
      }
      skip_ws_and_comments(false);
      if (!eof() && peek() != '\n') error(line_, "unexpected text after value");
    }
    return root;
  }

 private:
  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  [[noreturn]] void error(std::size_t line, const std::string& msg) const {
    fail(ErrorCode::ConfigInvalid, "line " + std::to_string(line) + ": " + msg);
  }

  void skip_ws_and_comments(bool newlines) {
    while (!eof()) {
      const char c = peek();
      if (c == '#') {
        while (!eof() && peek() != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++pos_;
      } else if (c == '\n' && newlines) {
        ++pos_;
        ++line_;
      } else {
        break;
      }
    }
  }

  void expect(std::string_view s) {
    if (text_.substr(pos_, s.size()) != s) error(line_, "expected '" + std::string(s) + "'");
    pos_ += s.size();
  }

  std::string key() {
    const std::size_t start = pos_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-')) ++pos_;
    if (pos_ == start) error(line_, "expected a key");
    return std::string(text_.substr(start, pos_ - start));
  }

  json value() {
    if (eof()) error(line_, "missing value");
    const char c = peek();
    if (c == '"') return string_value();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      while (true) {
        skip_ws_and_comments(true);
        if (eof()) error(line_, "unterminated array");
        if (peek() == ']') {
          ++pos_;
          return arr;
        }
        arr.push_back(value());
        skip_ws_and_comments(true);
        if (!eof() && peek() == ',') {
          ++pos_;
        } else if (eof() || peek() != ']') {
          error(line_, "expected ',' or ']' in array");
        }
      }
    }
    const std::size_t start = pos_;
    while (!eof() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' && peek() != ']' &&
           peek() != '#')
      ++pos_;
    const std::string tok(text_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) error(line_, "missing value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos && tok.find_first_of("xX") == std::string::npos;
    std::size_t used = 0;
    try {
      if (is_float) {
        const double d = std::stod(tok, &used);
        if (used == tok.size()) return d;
      } else {
        const long long i = std::stoll(tok, &used);
        if (used == tok.size()) return i;
      }
    } catch (const std::exception&) {
    }
    error(line_, "cannot parse value '" + tok + "'");
  }

  json string_value() {
    ++pos_;
    std::string out;
    while (true) {
      if (eof() || peek() == '\n') error(line_, "unterminated string");
      char c = text_[pos_++];
      if (c == '"') return out;
      if (c == '\\') {
        if (eof()) error(line_, "unterminated escape");
        const char e = text_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: error(line_, std::string("unknown escape \\") + e);
        }
      }
      out.push_back(c);
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace detail

inline json parse_toml(std::string_view text) { return detail::TomlParser(text).parse(); }

// ---------------------------------------------------------------------------

struct TaskSource {
  std::uint32_t task_id = 0;
  std::optional<std::filesystem::path> manifest;
  std::optional<SynthSpec> synth;
  std::string name;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t agents = 1;
  std::vector<std::vector<std::uint32_t>> assignment;  // per agent, in learning order
  AgentConfig agent;
  std::vector<double> thetas{0.90, 0.95};
  double alpha = kDefaultAlpha;
  ByteMode byte_mode = ByteMode::Paper;
  std::filesystem::path output = "skill_run";
  std::size_t workers = 1;
  std::optional<std::filesystem::path> labels;
  std::optional<ToyBackboneSpec> backbone;
  std::uint64_t backbone_seed = 0;
  std::vector<TaskSource> tasks;

  std::size_t task_count() const noexcept { return tasks.size(); }
};

// Contiguous blocks: agent a learns tasks [a·T/N, (a+1)·T/N).
inline std::vector<std::vector<std::uint32_t>> block_assignment(const std::vector<TaskSource>& tasks, std::size_t agents) {
  std::vector<std::vector<std::uint32_t>> out(agents);
  for (std::size_t i = 0; i < tasks.size(); ++i) out[i * agents / tasks.size()].push_back(tasks[i].task_id);
  return out;
}

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const json& root, std::filesystem::path base) : root_(root), base_(std::move(base)) {}

  RunConfig read() {
    RunConfig cfg;
    static const std::set<std::string> top_keys{"seed",   "agents",  "mapper",       "bb",      "h2t",
                                                "h2t_fraction", "byte_mode", "alpha", "k",  "m",
                                                "gmm_max_iter", "gmm_tol", "theta", "output", "workers",
                                                "labels", "assignment", "train", "h2t_train", "backbone",
                                                "synth",  "task"};
    for (const auto& [k, v] : root_.items())
      if (!top_keys.count(k)) errors_.push_back("unknown key '" + k + "'");

    get(root_, "seed", cfg.seed);
    get(root_, "agents", cfg.agents);
    if (cfg.agents < 1) errors_.push_back("agents must be >= 1");
    if (std::string s; get(root_, "mapper", s)) try_set([&] { cfg.agent.mapper = parse_mapper_mode(s); });
    get(root_, "bb", cfg.agent.bb);
    get(root_, "h2t", cfg.agent.h2t);
    get(root_, "h2t_fraction", cfg.agent.h2t_fraction);
    if (std::string s; get(root_, "byte_mode", s)) try_set([&] { cfg.byte_mode = parse_byte_mode(s); });
    get(root_, "alpha", cfg.alpha);
    if (cfg.alpha < 0.0) errors_.push_back("alpha must be >= 0");
    get(root_, "k", cfg.agent.gmm_k);
    get(root_, "m", cfg.agent.exemplars_per_class);
    get(root_, "gmm_max_iter", cfg.agent.gmm_max_iter);
    get(root_, "gmm_tol", cfg.agent.gmm_tol);
    if (root_.contains("theta")) {
      cfg.thetas.clear();
      const json& t = root_["theta"];
      if (t.is_number()) {
        cfg.thetas.push_back(t.get<double>());
      } else if (t.is_array() && std::all_of(t.begin(), t.end(), [](const json& x) { return x.is_number(); })) {
        for (const auto& x : t) cfg.thetas.push_back(x.get<double>());
      } else {
        errors_.push_back("theta must be a number or an array of numbers");
      }
      for (double th : cfg.thetas)
        if (th < 0.0 || th > 1.0) errors_.push_back("theta values must be in [0, 1]");
    }
    if (std::string s; get(root_, "output", s)) cfg.output = resolve(s);
    get(root_, "workers", cfg.workers);
    if (cfg.workers < 1) errors_.push_back("workers must be >= 1");
    if (std::string s; get(root_, "labels", s)) {
      cfg.labels = resolve(s);
      if (!std::filesystem::exists(*cfg.labels)) errors_.push_back("labels file not found: " + s);
    }

    read_train(root_, "train", cfg.agent.head);
    read_train(root_, "h2t_train", cfg.agent.h2t_train);
    cfg.agent.seed = cfg.seed;

    if (root_.contains("backbone")) {
      const json& b = root_["backbone"];
      if (!b.is_object()) {
        errors_.push_back("[backbone] must be a table");
      } else {
        ToyBackboneSpec spec;
        get(b, "channels", spec.in_channels);
        get(b, "height", spec.height);
        get(b, "width", spec.width);
        get(b, "conv", spec.conv_channels);
        get(b, "fc", spec.fc_widths);
        cfg.backbone_seed = cfg.seed;
        get(b, "seed", cfg.backbone_seed);
        if (spec.fc_widths.empty()) errors_.push_back("[backbone] fc must list at least one layer");
        if (spec.height < 3 + 2 * spec.conv_channels.size() || spec.width < 3 + 2 * spec.conv_channels.size())
          errors_.push_back("[backbone] input too small for its conv layers");
        cfg.backbone = spec;
      }
    }
    if (cfg.agent.bb && !cfg.backbone) errors_.push_back("bb = true needs a [backbone] table");
    if (cfg.agent.h2t && !cfg.agent.bb) errors_.push_back("h2t = true needs bb = true");

    read_tasks(cfg);
    read_assignment(cfg);
    return cfg;
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  std::filesystem::path resolve(const std::string& p) const {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_ / path;
  }

  template <typename F>
  void try_set(F&& f) {
    try {
      f();
    } catch (const Error& e) {
      errors_.push_back(e.what());
    }
  }

  template <typename T>
  bool get(const json& obj, const char* key, T& out) {
    if (!obj.contains(key)) return false;
    const json& v = obj[key];
    bool ok = false;
    if constexpr (std::is_same_v<T, bool>) {
      ok = v.is_boolean();
    } else if constexpr (std::is_same_v<T, std::string>) {
      ok = v.is_string();
    } else if constexpr (std::is_floating_point_v<T>) {
      ok = v.is_number();
    } else if constexpr (std::is_integral_v<T>) {
      ok = v.is_number_integer() && v.get<long long>() >= 0;
    } else {
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) {
             return x.is_number_integer() && x.get<long long>() >= 0;
           });
    }
    if (!ok) {
      errors_.push_back(std::string("'") + key + "' has the wrong type");
      return false;
    }
    out = v.get<T>();
    return true;
  }

  void read_train(const json& root, const char* name, TrainConfig& tc) {
    if (!root.contains(name)) return;
    const json& t = root[name];
    if (!t.is_object()) {
      errors_.push_back(std::string("[") + name + "] must be a table");
      return;
    }
    get(t, "epochs", tc.epochs);
    get(t, "lr", tc.lr);
    get(t, "batch_size", tc.batch_size);
    get(t, "momentum", tc.momentum);
    get(t, "l2", tc.l2);
    get(t, "normalized", tc.normalized);
    if (std::string s; get(t, "optimizer", s)) {
      if (s == "sgd")
        tc.optimizer = Optimizer::SgdMomentum;
      else if (s == "adam")
        tc.optimizer = Optimizer::Adam;
      else
        errors_.push_back(std::string("[") + name + "] optimizer must be sgd or adam");
    }
    try_set([&] { tc.validate(); });
  }

  void read_tasks(RunConfig& cfg) {
    std::set<std::uint32_t> ids;
    if (root_.contains("synth")) {
      const json& s = root_["synth"];
      if (!s.is_object()) {
        errors_.push_back("[synth] must be a table");
      } else {
        SynthSpec spec;
        std::size_t count = 1;
        std::uint64_t seed = cfg.seed;
        get(s, "count", count);
        get(s, "classes", spec.num_classes);
        get(s, "dim", spec.dim);
        get(s, "train_per_class", spec.train_per_class);
        get(s, "val_per_class", spec.val_per_class);
        get(s, "test_per_class", spec.test_per_class);
        get(s, "separation", spec.separation);
        get(s, "stddev", spec.stddev);
        get(s, "seed", seed);
        try_set([&] { spec.validate(); });
        if (spec.num_classes < 2) errors_.push_back("[synth] classes must be >= 2");
        for (std::size_t i = 0; i < count; ++i) {
          TaskSource t;
          t.task_id = static_cast<std::uint32_t>(i);
          t.name = "synth" + std::to_string(i);
          SynthSpec si = spec;
          si.seed = RngStream::derive(seed, i).next_u64();
          t.synth = si;
          ids.insert(t.task_id);
          cfg.tasks.push_back(std::move(t));
        }
      }
    }
    if (root_.contains("task")) {
      const json& arr = root_["task"];
      if (!arr.is_array()) errors_.push_back("'task' must be declared with [[task]]");
      for (std::size_t i = 0; arr.is_array() && i < arr.size(); ++i) {
        std::string m;
        if (!get(arr[i], "manifest", m)) {
          errors_.push_back("[[task]] #" + std::to_string(i + 1) + " needs a manifest");
          continue;
        }
        TaskSource t;
        t.manifest = resolve(m);
        if (!std::filesystem::exists(*t.manifest)) {
          errors_.push_back("manifest not found: " + m);
          continue;
        }
        try {
          const json man = json::parse(read_text(*t.manifest));
          t.task_id = man.value("task_id", 0u);
          t.name = man.value("name", std::string("task"));
        } catch (const std::exception& e) {
          errors_.push_back("cannot read manifest " + m + ": " + e.what());
          continue;
        }
        if (!ids.insert(t.task_id).second) {
          errors_.push_back("task_id " + std::to_string(t.task_id) + " used twice");
          continue;
        }
        cfg.tasks.push_back(std::move(t));
      }
    }
    if (cfg.tasks.empty()) errors_.push_back("no tasks: add a [synth] table or [[task]] entries");
    if (cfg.backbone) {
      const std::size_t in = cfg.backbone->in_channels * cfg.backbone->height * cfg.backbone->width;
      for (const auto& t : cfg.tasks)
        if (t.synth && t.synth->dim != in) {
          errors_.push_back("[synth] dim " + std::to_string(t.synth->dim) + " != backbone input size " +
                            std::to_string(in));
          break;
        }
    }
  }

  void read_assignment(RunConfig& cfg) {
    if (!root_.contains("assignment")) {
      if (!cfg.tasks.empty() && cfg.agents > cfg.tasks.size())
        errors_.push_back("more agents (" + std::to_string(cfg.agents) + ") than tasks (" +
                          std::to_string(cfg.tasks.size()) + ")");
      else if (!cfg.tasks.empty())
        cfg.assignment = block_assignment(cfg.tasks, cfg.agents);
      return;
    }
    const json& a = root_["assignment"];
    bool ok = a.is_array();
    for (std::size_t i = 0; ok && i < a.size(); ++i)
      ok = a[i].is_array() && std::all_of(a[i].begin(), a[i].end(), [](const json& x) {
             return x.is_number_integer() && x.get<long long>() >= 0;
           });
    if (!ok) {
      errors_.push_back("assignment must be an array of arrays of task ids");
      return;
    }
    cfg.assignment = a.get<std::vector<std::vector<std::uint32_t>>>();
    if (cfg.assignment.size() != cfg.agents)
      errors_.push_back("assignment lists " + std::to_string(cfg.assignment.size()) + " agents, config has " +
                        std::to_string(cfg.agents));
    std::map<std::uint32_t, int> seen;
    for (const auto& list : cfg.assignment)
      for (std::uint32_t t : list) ++seen[t];
    std::set<std::uint32_t> known;
    for (const auto& t : cfg.tasks) known.insert(t.task_id);
    for (const auto& [t, n] : seen) {
      if (n > 1) errors_.push_back("task " + std::to_string(t) + " assigned to more than one agent");
      if (!known.count(t)) errors_.push_back("assignment names unknown task " + std::to_string(t));
    }
    for (std::uint32_t t : known)
      if (!seen.count(t)) errors_.push_back("task " + std::to_string(t) + " is not assigned");
    for (std::size_t i = 0; i < cfg.assignment.size(); ++i)
      if (cfg.assignment[i].empty()) errors_.push_back("agent " + std::to_string(i) + " has no tasks");
  }

  const json& root_;
  std::filesystem::path base_;
  std::vector<std::string> errors_;
};

}  // namespace detail

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;
};

// Command-line overrides, applied to the parsed document before validation.
// Overriding the agent count drops any explicit assignment in favor of the
// block default.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> agents;
  std::optional<std::string> mapper;
  std::optional<bool> bb;
  std::optional<bool> h2t;
  std::optional<double> alpha;
  std::optional<std::string> byte_mode;

  void apply(json& root) const {
    if (seed) root["seed"] = *seed;
    if (agents) {
      root["agents"] = *agents;
      root.erase("assignment");
    }
    if (mapper) root["mapper"] = *mapper;
    if (bb) root["bb"] = *bb;
    if (h2t) root["h2t"] = *h2t;
    if (alpha) root["alpha"] = *alpha;
    if (byte_mode) root["byte_mode"] = *byte_mode;
  }
};

// Relative paths in the document resolve against base_dir.
inline ConfigResult validate_config_text(std::string_view text, const std::filesystem::path& base_dir = ".",
                                         const ConfigOverrides& overrides = {}) {
  ConfigResult out;
  json root;
  try {
    root = parse_toml(text);
  } catch (const Error& e) {
    out.errors.push_back(e.what());
    return out;
  }
  overrides.apply(root);
  detail::ConfigReader reader(root, base_dir);
  RunConfig cfg = reader.read();
  out.errors = std::move(reader.errors());
  if (out.errors.empty()) out.config = std::move(cfg);
  return out;
}

inline ConfigResult validate_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {}) {
  if (!std::filesystem::exists(path)) return {std::nullopt, {"config file not found: " + path.string()}};
  return validate_config_text(read_text(path), path.parent_path(), overrides);
}

inline RunConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {}) {
  ConfigResult r = validate_config(path, overrides);
  if (!r.config) {
    std::string msg;
    for (const auto& e : r.errors) msg += "\n  " + e;
    fail(ErrorCode::ConfigInvalid, path.string() + ":" + msg);
  }
  return std::move(*r.config);
}

}  // namespace skill
