#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpvqa/config.hpp"
#include "dpvqa/model.hpp"

namespace dpvqa {

template <class T>
class Adam {
 public:
  explicit Adam(ParamStore<T>& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One update from the accumulated gradients, which are then zeroed.
  void step(double lr, double grad_clip = 0, double weight_decay = 0);
  std::size_t steps() const { return t_; }

 private:
  ParamStore<T>& store_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;
  std::size_t items = 0;
  double loss = 0;
  double accuracy = 0;           // over every item
  double temporal_accuracy = 0;  // action-order and repetition-count items
  std::map<std::string, double> task_accuracy;
  std::optional<double> count_mse;  // repetition-count items only
  double wall_clock = 0;            // seconds since the run started

  std::string to_json() const;
  /// Same fields minus the wall clock, for reproducibility comparisons.
  std::string deterministic_json() const;
  static MetricsRecord from_json(const std::string& line);
};

/// Scores predicted labels (counts as decimal strings) against the stored
/// answers of `items`; ContractError when `items` is empty.
MetricsRecord score_predictions(const Corpus& corpus, const std::vector<std::size_t>& items,
                                const std::vector<std::string>& predictions,
                                const std::string& split, double loss = 0);

/// Header "DPVQ", u32 version, u64 config hash, u32 count, then per parameter:
/// u32 name length, name, u32 rank, u64 extents, float32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store, std::uint64_t hash);
/// FormatError on a bad header, a hash mismatch, or a missing or misshapen parameter.
template <class T>
void load_checkpoint(const std::string& path, ParamStore<T>& store, std::uint64_t hash);

struct TrainResult {
  std::size_t best_epoch = 0;
  MetricsRecord best_val;
  MetricsRecord test;
  std::vector<MetricsRecord> records;  // as streamed to metrics.jsonl
  double seconds = 0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

/// Trains `config.variant` on the corpus, selecting the epoch with the best
/// validation accuracy (earlier epoch on ties). Writes config.txt,
/// metrics.jsonl and checkpoint.bin under config.out when it is non-empty.
TrainResult train(const RunConfig& config, const Corpus& corpus, const MetricsSink& sink = {});

/// Evaluates a model on one split without touching disk.
template <class T>
MetricsRecord evaluate_model(const VqaModel<T>& model, const Corpus& corpus,
                             const Vocabulary& vocab, Split split, std::size_t reader_workers = 1);

/// Loads checkpoint + sibling config.txt and evaluates on `split`.
MetricsRecord evaluate(const std::string& checkpoint, const Corpus& corpus, Split split);

// A model bundle for step-level control (tests, regression baselines).
template <class T>
struct Trainer {
  Trainer(const RunConfig& config, const Corpus& corpus);

  /// Averaged loss of `batch` before the update; throws NumericError on NaN.
  double step(const std::vector<std::size_t>& batch);

  RunConfig config;
  const Corpus& corpus;
  Vocabulary vocab;
  VqaModel<T> model;
  Adam<T> optimizer;
};

struct AblationRow {
  Variant variant;
  TrainResult result;
};

/// Trains every variant with the shared seed and corpus.
std::vector<AblationRow> ablate(const RunConfig& base, const Corpus& corpus,
                                std::ostream* progress = nullptr);

/// Markdown table keyed by variant.
std::string ablation_table(const std::vector<AblationRow>& rows);

extern template class Adam<float>;
extern template class Adam<double>;
extern template struct Trainer<float>;
extern template struct Trainer<double>;

}  // namespace dpvqa
