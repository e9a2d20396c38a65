#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dpvqa/model.hpp"
#include "dpvqa/tensor.hpp"

namespace dpvqa {

// Everything a run depends on. The text form is one `key=value` per line
// with keys equal to the field names below.
struct RunConfig {
  Variant variant = Variant::crn_mac;
  std::size_t clips = 5;
  std::size_t clip_len = 8;
  std::size_t max_order = 0;  // 0 selects max(2, clips - 1)
  std::size_t dim = 512;
  std::size_t steps = 12;
  std::size_t embed_dim = 300;
  std::size_t max_subsets = 32;
  double lr = 1e-4;
  double count_lr = 5e-5;  // repetition-count batches
  std::size_t batch_size = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  Precision precision = Precision::f32;
  std::string corpus = "corpus";
  std::string out = "runs/default";
  std::size_t reader_workers = 1;
  double grad_clip = 0;     // global-norm clipping; 0 disables
  double weight_decay = 0;  // L2 coefficient; 0 disables
  double dropout = 0;

  /// Throws ContractError on values no run can use.
  void validate() const;
  ModelConfig model_config(std::size_t in_channels) const;
  std::string to_text() const;
};

/// Sets one field from its text form; FormatError on unknown keys or bad values.
void set_field(RunConfig& config, const std::string& key, const std::string& value);

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& config);

/// Applies DPVQA_<KEY> variables (key upper-cased) from `env`.
void apply_overrides(RunConfig& config, const std::map<std::string, std::string>& env);
/// Same, reading the process environment.
void apply_env_overrides(RunConfig& config);

/// Hash of the fields that determine parameter shapes plus the vocabulary.
std::uint64_t config_hash(const RunConfig& config, const Vocabulary& vocab);

}  // namespace dpvqa
