#pragma once

#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedtan/fl/scheme.hpp"
#include "fedtan/metrics/csv.hpp"

namespace fedtan::cli {

inline constexpr const char* kDataRootEnv = "FEDTAN_DATA_ROOT";

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::invalid_argument(key + ": " + what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class DatasetKind { Mnist, Synthetic };
enum class PartitionKind { Iid, LabelShard };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::Mnist;
  std::string root;          // directory holding the four IDX files
  long long subset = 6000;   // class-balanced training subset; 0 = all
  long long test_subset = 0;  // 0 = whole test set
  int classes = 10;           // synthetic
  long long per_class = 200;
  long long test_per_class = 100;
  long long input_dim = 20;
  double center_scale = 3.0;
  double noise = 1.0;

  bool operator==(const DatasetConfig&) const = default;
};

struct PartitionConfig {
  PartitionKind kind = PartitionKind::LabelShard;
  int clients = 5;
  int classes_per_client = 2;

  bool operator==(const PartitionConfig&) const = default;
};

struct ModelConfig {
  std::vector<long long> hidden{30};
  bool batch_norm = true;
  double epsilon = 1e-5;

  bool operator==(const ModelConfig&) const = default;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  ModelConfig model;
  fl::SchemeConfig scheme;
  std::string output = "history.csv";
  bool timing = false;

  bool operator==(const ExperimentConfig& o) const {
    const auto& a = scheme;
    const auto& b = o.scheme;
    return dataset == o.dataset && partition == o.partition && model == o.model &&
           output == o.output && timing == o.timing && a.scheme == b.scheme &&
           a.local_steps == b.local_steps && a.iterations == b.iterations &&
           a.switch_iteration == b.switch_iteration && a.lr == b.lr &&
           a.lr_after_switch == b.lr_after_switch && a.lr_drop_at == b.lr_drop_at &&
           a.batch_size == b.batch_size && a.momentum == b.momentum && a.seed == b.seed &&
           a.parallel == b.parallel && a.eval_every == b.eval_every;
  }
};

inline std::string default_data_root() {
  if (const char* env = std::getenv(kDataRootEnv); env && *env) return env;
  return "data/mnist";
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

inline double to_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

inline std::vector<long long> to_int_list(const std::string& key, const std::string& v) {
  std::vector<long long> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_int(key, item));
  }
  return out;
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  if (d.kind == DatasetKind::Mnist) {
    if (d.root.empty()) throw ConfigError("dataset.root", "must not be empty");
    if (d.subset < 0) throw ConfigError("dataset.subset", "must be >= 0");
    if (d.subset % 10 != 0) throw ConfigError("dataset.subset", "must be a multiple of 10");
    if (d.test_subset < 0) throw ConfigError("dataset.test_subset", "must be >= 0");
  } else {
    if (d.classes < 1) throw ConfigError("dataset.classes", "must be >= 1");
    if (d.per_class < 1) throw ConfigError("dataset.per_class", "must be >= 1");
    if (d.test_per_class < 1) throw ConfigError("dataset.test_per_class", "must be >= 1");
    if (d.input_dim < 1) throw ConfigError("dataset.input_dim", "must be >= 1");
    if (!(d.center_scale >= 0)) throw ConfigError("dataset.center_scale", "must be >= 0");
    if (!(d.noise >= 0)) throw ConfigError("dataset.noise", "must be >= 0");
  }
  if (c.partition.clients < 1) throw ConfigError("partition.clients", "must be >= 1");
  if (c.partition.kind == PartitionKind::LabelShard && c.partition.classes_per_client < 1)
    throw ConfigError("partition.classes_per_client", "must be >= 1");
  for (long long h : c.model.hidden)
    if (h < 1) throw ConfigError("model.hidden", "widths must be >= 1");
  if (!(c.model.epsilon > 0)) throw ConfigError("scheme.epsilon", "must be > 0");

  const auto& s = c.scheme;
  if (s.local_steps < 1) throw ConfigError("scheme.local_steps", "must be >= 1");
  if (s.iterations < 0) throw ConfigError("scheme.iterations", "must be >= 0");
  if (!(s.lr >= 0)) throw ConfigError("scheme.lr", "must be >= 0");
  if (!(s.lr_after_switch >= 0)) throw ConfigError("scheme.lr_after_switch", "must be >= 0");
  if (s.lr_drop_at < 0) throw ConfigError("scheme.lr_drop_at", "must be >= 0");
  if (s.batch_size < 0) throw ConfigError("scheme.batch_size", "must be >= 0 or 'full'");
  if (!(s.momentum > 0 && s.momentum <= 1)) throw ConfigError("scheme.momentum", "must lie in (0, 1]");
  if (s.eval_every < 1) throw ConfigError("run.eval_every", "must be >= 1");
  if (s.scheme == fl::Scheme::FedTANII && !(s.switch_iteration >= 0 && s.switch_iteration < s.iterations))
    throw ConfigError("scheme.switch_iteration", "fedtan2 requires 0 <= switch_iteration < iterations");
  if (c.output.empty()) throw ConfigError("run.output", "must not be empty");
}

// Flat INI-style text: [section] headers, `key = value` lines, `#` comments.
inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  c.dataset.root = default_data_root();
  std::string section;
  std::set<std::string> seen;
  bool scheme_given = false;
  bool dataset_given = false;

  std::stringstream in(text);
  std::size_t lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    std::string line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section != "dataset" && section != "partition" && section != "model" && section != "scheme" &&
          section != "run")
        throw ConfigError(section, "unknown section");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno), "key outside any section");
    const std::string name = detail::trim(line.substr(0, eq));
    const std::string v = detail::trim(line.substr(eq + 1));
    const std::string key = section + "." + name;
    if (!seen.insert(key).second) throw ConfigError(key, "given more than once");

    auto& d = c.dataset;
    auto& p = c.partition;
    auto& s = c.scheme;
    if (key == "dataset.kind") {
      dataset_given = true;
      if (v == "mnist") d.kind = DatasetKind::Mnist;
      else if (v == "synthetic") d.kind = DatasetKind::Synthetic;
      else throw ConfigError(key, "expected mnist or synthetic, got '" + v + "'");
    } else if (key == "dataset.root") d.root = v;
    else if (key == "dataset.subset") d.subset = detail::to_int(key, v);
    else if (key == "dataset.test_subset") d.test_subset = detail::to_int(key, v);
    else if (key == "dataset.classes") d.classes = static_cast<int>(detail::to_int(key, v));
    else if (key == "dataset.per_class") d.per_class = detail::to_int(key, v);
    else if (key == "dataset.test_per_class") d.test_per_class = detail::to_int(key, v);
    else if (key == "dataset.input_dim") d.input_dim = detail::to_int(key, v);
    else if (key == "dataset.center_scale") d.center_scale = detail::to_real(key, v);
    else if (key == "dataset.noise") d.noise = detail::to_real(key, v);
    else if (key == "partition.kind") {
      if (v == "iid") p.kind = PartitionKind::Iid;
      else if (v == "label_shard") p.kind = PartitionKind::LabelShard;
      else throw ConfigError(key, "expected iid or label_shard, got '" + v + "'");
    } else if (key == "partition.clients") p.clients = static_cast<int>(detail::to_int(key, v));
    else if (key == "partition.classes_per_client") p.classes_per_client = static_cast<int>(detail::to_int(key, v));
    else if (key == "model.hidden") c.model.hidden = detail::to_int_list(key, v);
    else if (key == "model.batch_norm") c.model.batch_norm = detail::to_bool(key, v);
    else if (key == "scheme.name") {
      scheme_given = true;
      if (v.empty()) throw ConfigError("scheme", "must not be empty");
      const auto parsed = fl::parse_scheme(v);
      if (!parsed) throw ConfigError("scheme", "unknown scheme '" + v + "'");
      s.scheme = *parsed;
    } else if (key == "scheme.local_steps") s.local_steps = static_cast<int>(detail::to_int(key, v));
    else if (key == "scheme.iterations") s.iterations = static_cast<int>(detail::to_int(key, v));
    else if (key == "scheme.switch_iteration") s.switch_iteration = static_cast<int>(detail::to_int(key, v));
    else if (key == "scheme.lr") s.lr = detail::to_real(key, v);
    else if (key == "scheme.lr_after_switch") s.lr_after_switch = detail::to_real(key, v);
    else if (key == "scheme.lr_drop_at") s.lr_drop_at = static_cast<int>(detail::to_int(key, v));
    else if (key == "scheme.batch_size") s.batch_size = v == "full" ? 0 : static_cast<int>(detail::to_int(key, v));
    else if (key == "scheme.momentum") s.momentum = detail::to_real(key, v);
    else if (key == "scheme.epsilon") c.model.epsilon = detail::to_real(key, v);
    else if (key == "run.seed") s.seed = static_cast<std::uint64_t>(detail::to_int(key, v));
    else if (key == "run.output") c.output = v;
    else if (key == "run.eval_every") s.eval_every = static_cast<int>(detail::to_int(key, v));
    else if (key == "run.parallel") s.parallel = detail::to_bool(key, v);
    else if (key == "run.timing") c.timing = detail::to_bool(key, v);
    else throw ConfigError(key, "unknown key");
  }
  if (!scheme_given) throw ConfigError("scheme", "missing [scheme] name");
  if (!dataset_given) throw ConfigError("dataset", "missing [dataset] kind");
  validate(c);
  return c;
}

inline std::string serialize_config(const ExperimentConfig& c) {
  using metrics::format_double;
  std::ostringstream o;
  const auto& d = c.dataset;
  o << "[dataset]\n";
  o << "kind = " << (d.kind == DatasetKind::Mnist ? "mnist" : "synthetic") << '\n';
  o << "root = " << d.root << '\n';
  o << "subset = " << d.subset << '\n';
  o << "test_subset = " << d.test_subset << '\n';
  o << "classes = " << d.classes << '\n';
  o << "per_class = " << d.per_class << '\n';
  o << "test_per_class = " << d.test_per_class << '\n';
  o << "input_dim = " << d.input_dim << '\n';
  o << "center_scale = " << format_double(d.center_scale) << '\n';
  o << "noise = " << format_double(d.noise) << '\n';
  o << "\n[partition]\n";
  o << "kind = " << (c.partition.kind == PartitionKind::Iid ? "iid" : "label_shard") << '\n';
  o << "clients = " << c.partition.clients << '\n';
  o << "classes_per_client = " << c.partition.classes_per_client << '\n';
  o << "\n[model]\nhidden = ";
  for (std::size_t i = 0; i < c.model.hidden.size(); ++i) o << (i ? "," : "") << c.model.hidden[i];
  o << "\nbatch_norm = " << (c.model.batch_norm ? "true" : "false") << '\n';
  const auto& s = c.scheme;
  o << "\n[scheme]\n";
  o << "name = " << fl::to_string(s.scheme) << '\n';
  o << "local_steps = " << s.local_steps << '\n';
  o << "iterations = " << s.iterations << '\n';
  o << "switch_iteration = " << s.switch_iteration << '\n';
  o << "lr = " << format_double(s.lr) << '\n';
  o << "lr_after_switch = " << format_double(s.lr_after_switch) << '\n';
  o << "lr_drop_at = " << s.lr_drop_at << '\n';
  o << "batch_size = " << (s.batch_size == 0 ? std::string("full") : std::to_string(s.batch_size)) << '\n';
  o << "momentum = " << format_double(s.momentum) << '\n';
  o << "epsilon = " << format_double(c.model.epsilon) << '\n';
  o << "\n[run]\n";
  o << "seed = " << s.seed << '\n';
  o << "output = " << c.output << '\n';
  o << "eval_every = " << s.eval_every << '\n';
  o << "parallel = " << (s.parallel ? "true" : "false") << '\n';
  o << "timing = " << (c.timing ? "true" : "false") << '\n';
  return o.str();
}

}  // namespace fedtan::cli
