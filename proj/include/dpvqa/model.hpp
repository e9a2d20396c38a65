#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dpvqa/crn.hpp"
#include "dpvqa/decoders.hpp"
#include "dpvqa/language.hpp"
#include "dpvqa/mac.hpp"
#include "dpvqa/synthetic.hpp"

namespace dpvqa {

enum class Variant {
  linguistic_only,
  ling_sframe,
  sframe_mac,
  avgpool_mac,
  trn_mac,
  crn_mlp,
  crn_mac,
};

inline constexpr std::array<Variant, 7> kVariants{
    Variant::linguistic_only, Variant::ling_sframe, Variant::sframe_mac, Variant::avgpool_mac,
    Variant::trn_mac,         Variant::crn_mlp,     Variant::crn_mac};

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

// Frames sampled by the frame-level variants (avgpool_mac, trn_mac).
inline constexpr std::size_t kSampledFrames = 8;

struct ModelConfig {
  Variant variant = Variant::crn_mac;
  CrnConfig crn;               // clips, clip_len, max_order, in_channels, dim
  std::size_t steps = 12;      // MAC cells
  std::size_t embed_dim = 300;
  std::size_t max_question = 64;
  double dropout = 0.0;
};

// One QA item ready for the model.
template <class T>
struct Example {
  std::size_t item = 0;  // index into the corpus
  std::vector<std::size_t> tokens;
  Tensor<T> volume;      // [N, W, H, D]
  Task task = Task::exist;
  std::size_t label = 0;     // answer index; unused for repetition counts
  double count_target = 0;   // repetition counts only
  std::uint64_t sampling_seed = 0;
};

template <class T>
struct ModelOutput {
  bool is_count = false;
  Tensor<T> logits;       // [answers] for open-ended items
  Tensor<T> count_score;  // [1] for repetition counts
  AttentionTrace trace;   // empty for variants without a reasoner
};

// Question encoder, one of the seven visual/reasoning pipelines, and the
// open-ended and repetition-count heads.
template <class T>
class VqaModel {
 public:
  VqaModel(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed);

  VqaModel(const VqaModel&) = delete;
  VqaModel& operator=(const VqaModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// `dropout_seed` only matters when training with dropout.
  ModelOutput<T> forward(const Example<T>& ex, bool training = false,
                         std::uint64_t dropout_seed = 0) const;

  /// Cross-entropy for open-ended items, squared error for repetition counts.
  Tensor<T> loss(const ModelOutput<T>& out, const Example<T>& ex) const;

  /// Answer label, or the clamped rounded count.
  std::string predict(const ModelOutput<T>& out) const;

  /// Visual memory fed to the heads (exposed for the equivalence tests).
  Tensor<T> memory(const Example<T>& ex, const EncodedQuestion<T>& question,
                   AttentionTrace* trace = nullptr) const;

  const LanguageEncoder<T>& language() const { return *language_; }
  const ClipRelationNetwork<T>* crn() const { return crn_ ? &*crn_ : nullptr; }
  const MacReasoner<T>* mac() const { return mac_ ? &*mac_ : nullptr; }

 private:
  Tensor<T> project_frames(const Tensor<T>& frames) const;

  ModelConfig config_;
  Vocabulary vocab_;
  ParamStore<T> store_;
  std::optional<LanguageEncoder<T>> language_;
  std::optional<ClipRelationNetwork<T>> crn_;
  std::optional<MacReasoner<T>> mac_;
  std::optional<OpenEndedHead<T>> open_;
  std::optional<CountHead<T>> count_;
  Tensor<T> frame_w_, frame_b_;  // frame projection for the non-relational variants
  Tensor<T> mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

/// Vocabulary over every question token and every non-count answer of the corpus.
Vocabulary corpus_vocabulary(const Corpus& corpus);

template <class T>
Example<T> make_example(const Corpus& corpus, const Vocabulary& vocab, std::size_t item);

extern template class VqaModel<float>;
extern template class VqaModel<double>;

}  // namespace dpvqa
