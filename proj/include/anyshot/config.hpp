#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "anyshot/eval.hpp"
#include "anyshot/loss.hpp"
#include "anyshot/synthdata.hpp"
#include "anyshot/trainer.hpp"

namespace anyshot {

// Flat key-value store: `key=value` lines, '#' comments, later keys win.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  explicit KeyValueConfig(std::map<std::string, std::string> values)
      : values_(std::move(values)) {}

  static KeyValueConfig load(const std::string& path);
  // Environment overrides: ANYSHOT_<KEY> (uppercased, '.'->'_').
  void apply_env_overrides(const char* prefix = "ANYSHOT_");
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<std::uint64_t> get_u64s(const std::string& key,
                                      const std::vector<std::uint64_t>& fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Everything one experiment needs; all knobs resolvable from one flat file.
struct ExperimentConfig {
  WorldSpec world;
  SplitSizes splits;
  std::size_t shots = 5;
  TrainConfig train;
  EvalThresholds thresholds;
  SemanticsMode semantics_mode = SemanticsMode::kTrainable;
  std::size_t vocab_size = 64;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {7};
  std::vector<double> sweep_betas = {0.5, 1.0, 2.0, 5.0};
  std::vector<double> sweep_lambdas = {0.1, 0.5, 1.0};
  std::string class_list_path;    // optional: load instead of sampling
  std::string word_vectors_path;  // optional
  std::string vocab_path;         // optional

  static ExperimentConfig from_kv(const KeyValueConfig& kv);
  std::string to_flat_text() const;
};

}  // namespace anyshot
