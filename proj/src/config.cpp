#include "anyshot/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "anyshot/errors.hpp"

extern char** environ;

namespace anyshot {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    values[key] = trim(t.substr(eq + 1));
  }
  return KeyValueConfig(std::move(values));
}

void KeyValueConfig::apply_env_overrides(const char* prefix) {
  const std::string pre(prefix);
  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.compare(0, pre.size(), pre) != 0) continue;
    std::string key = entry.substr(pre.size(), eq - pre.size());
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (key.empty()) continue;
    values_[key] = entry.substr(eq + 1);
  }
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: " + it->second);
  }
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    const long long v = std::stoll(it->second);
    if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
  }
}

std::vector<double> KeyValueConfig::get_doubles(
    const std::string& key, const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' has a bad entry: " + item);
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

std::vector<std::uint64_t> KeyValueConfig::get_u64s(
    const std::string& key, const std::vector<std::uint64_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' has a bad entry: " + item);
    }
  }
  if (out.empty()) throw ConfigError("config key '" + key + "' is an empty list");
  return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  cfg.world.seen = kv.get_size("classes_seen", cfg.world.seen);
  cfg.world.few_shot = kv.get_size("classes_few", cfg.world.few_shot);
  cfg.world.unseen = kv.get_size("classes_unseen", cfg.world.unseen);
  cfg.world.semantic_dim = kv.get_size("embed_dim", cfg.world.semantic_dim);
  cfg.world.feature_dim = kv.get_size("feature_dim", cfg.world.feature_dim);
  cfg.world.noise_sigma = kv.get_double("noise_sigma", cfg.world.noise_sigma);
  cfg.world.grid = kv.get_size("grid", cfg.world.grid);
  cfg.world.seed = kv.get_u64("seed", cfg.world.seed);

  cfg.splits.train_scenes = kv.get_size("scenes_train", cfg.splits.train_scenes);
  cfg.splits.finetune_scenes = kv.get_size("scenes_finetune", cfg.splits.finetune_scenes);
  cfg.splits.test_scenes = kv.get_size("scenes_test", cfg.splits.test_scenes);
  cfg.splits.objects_per_scene =
      kv.get_size("objects_per_scene", cfg.splits.objects_per_scene);
  cfg.shots = kv.get_size("shots", cfg.shots);

  cfg.train.loss = LossConfig::from_kv(kv.values());
  cfg.train.epochs_base = kv.get_size("epochs_base", cfg.train.epochs_base);
  cfg.train.epochs_ft = kv.get_size("epochs_ft", cfg.train.epochs_ft);
  cfg.train.learning_rate = kv.get_double("learning_rate", cfg.train.learning_rate);
  cfg.train.adam_beta1 = kv.get_double("adam_beta1", cfg.train.adam_beta1);
  cfg.train.adam_beta2 = kv.get_double("adam_beta2", cfg.train.adam_beta2);
  cfg.train.adam_eps = kv.get_double("adam_eps", cfg.train.adam_eps);
  cfg.train.batch_scenes = kv.get_size("batch_scenes", cfg.train.batch_scenes);
  cfg.train.seed = kv.get_u64("seed", cfg.train.seed);
  const std::string agg = kv.get_string("ft_aggregation", "group");
  if (agg == "group") cfg.train.ft_aggregation = FinetuneAggregation::kGroupMix;
  else if (agg == "pooled") cfg.train.ft_aggregation = FinetuneAggregation::kPooledFocal;
  else throw ConfigError("ft_aggregation must be 'group' or 'pooled'");

  cfg.thresholds.iou = kv.get_double("eval_iou", cfg.thresholds.iou);
  cfg.thresholds.score = kv.get_double("score_threshold", cfg.thresholds.score);
  cfg.thresholds.nms_iou = kv.get_double("nms_iou", cfg.thresholds.nms_iou);
  cfg.thresholds.recall_k = kv.get_size("recall_k", cfg.thresholds.recall_k);

  cfg.semantics_mode =
      semantics_mode_from_string(kv.get_string("semantics_mode", "trainable"));
  cfg.vocab_size = kv.get_size("vocab_size", cfg.vocab_size);
  cfg.out_dir = kv.get_string("out", cfg.out_dir);
  cfg.seeds = kv.get_u64s("seeds", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds list must be non-empty");
  cfg.sweep_betas = kv.get_doubles("sweep_betas", cfg.sweep_betas);
  cfg.sweep_lambdas = kv.get_doubles("sweep_lambdas", cfg.sweep_lambdas);
  cfg.class_list_path = kv.get_string("class_list", "");
  cfg.word_vectors_path = kv.get_string("word_vectors", "");
  cfg.vocab_path = kv.get_string("vocab_file", "");

  cfg.train.validate();
  return cfg;
}

std::string ExperimentConfig::to_flat_text() const {
  std::ostringstream os;
  char buf[64];
  auto num = [&buf](double x) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  };
  os << "classes_seen=" << world.seen << "\n";
  os << "classes_few=" << world.few_shot << "\n";
  os << "classes_unseen=" << world.unseen << "\n";
  os << "embed_dim=" << world.semantic_dim << "\n";
  os << "feature_dim=" << world.feature_dim << "\n";
  os << "noise_sigma=" << num(world.noise_sigma) << "\n";
  os << "grid=" << world.grid << "\n";
  os << "seed=" << world.seed << "\n";
  os << "scenes_train=" << splits.train_scenes << "\n";
  os << "scenes_finetune=" << splits.finetune_scenes << "\n";
  os << "scenes_test=" << splits.test_scenes << "\n";
  os << "objects_per_scene=" << splits.objects_per_scene << "\n";
  os << "shots=" << shots << "\n";
  for (const auto& [k, v] : train.loss.to_kv()) os << k << "=" << v << "\n";
  os << "epochs_base=" << train.epochs_base << "\n";
  os << "epochs_ft=" << train.epochs_ft << "\n";
  os << "learning_rate=" << num(train.learning_rate) << "\n";
  os << "adam_beta1=" << num(train.adam_beta1) << "\n";
  os << "adam_beta2=" << num(train.adam_beta2) << "\n";
  os << "adam_eps=" << num(train.adam_eps) << "\n";
  os << "batch_scenes=" << train.batch_scenes << "\n";
  os << "ft_aggregation="
     << (train.ft_aggregation == FinetuneAggregation::kGroupMix ? "group" : "pooled")
     << "\n";
  os << "eval_iou=" << num(thresholds.iou) << "\n";
  os << "score_threshold=" << num(thresholds.score) << "\n";
  os << "nms_iou=" << num(thresholds.nms_iou) << "\n";
  os << "recall_k=" << thresholds.recall_k << "\n";
  os << "semantics_mode=" << to_string(semantics_mode) << "\n";
  os << "vocab_size=" << vocab_size << "\n";
  os << "out=" << out_dir << "\n";
  os << "seeds=";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << "\n";
  return os.str();
}

}  // namespace anyshot
