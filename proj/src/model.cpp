#include "dpvqa/model.hpp"

#include <set>

#include "dpvqa/ops.hpp"

namespace dpvqa {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::linguistic_only: return "linguistic_only";
    case Variant::ling_sframe: return "ling_sframe";
    case Variant::sframe_mac: return "sframe_mac";
    case Variant::avgpool_mac: return "avgpool_mac";
    case Variant::trn_mac: return "trn_mac";
    case Variant::crn_mlp: return "crn_mlp";
    case Variant::crn_mac: return "crn_mac";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : kVariants) {
    if (to_string(v) == s) return v;
  }
  throw FormatError("unknown model variant '" + s + "'");
}

namespace {

bool uses_crn(Variant v) {
  return v == Variant::trn_mac || v == Variant::crn_mlp || v == Variant::crn_mac;
}

bool uses_mac(Variant v) {
  return v == Variant::sframe_mac || v == Variant::avgpool_mac || v == Variant::trn_mac ||
         v == Variant::crn_mac;
}

}  // namespace

template <class T>
VqaModel<T>::VqaModel(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed)
    : config_(config), vocab_(vocab), store_(seed) {
  const std::size_t d = config.crn.dim;
  LanguageConfig lc;
  lc.vocab_size = vocab.size();
  lc.embed_dim = config.embed_dim;
  lc.dim = d;
  lc.max_length = config.max_question;
  language_.emplace(store_, lc);

  const Variant v = config.variant;
  if (uses_crn(v)) {
    CrnConfig cc = config.crn;
    if (v == Variant::trn_mac) cc = trn_config(config.crn, kSampledFrames);
    crn_.emplace(store_, cc);
  } else if (v != Variant::linguistic_only) {
    frame_w_ = store_.add("frame.proj.w", {d, config.crn.in_channels}, Init::fan_in_uniform);
    frame_b_ = store_.add("frame.proj.b", {d}, Init::zeros);
  }
  if (v == Variant::crn_mlp) {
    mlp_w1_ = store_.add("mlp.w1", {d, 2 * d}, Init::fan_in_uniform);
    mlp_b1_ = store_.add("mlp.b1", {d}, Init::zeros);
    mlp_w2_ = store_.add("mlp.w2", {d, d}, Init::fan_in_uniform);
    mlp_b2_ = store_.add("mlp.b2", {d}, Init::zeros);
  }
  if (uses_mac(v)) mac_.emplace(store_, MacConfig{d, config.steps});
  open_.emplace(store_, d, vocab.answer_count());
  count_.emplace(store_, d);
}

template <class T>
Tensor<T> VqaModel<T>::project_frames(const Tensor<T>& frames) const {
  return linear(frames, frame_w_, frame_b_);
}

template <class T>
Tensor<T> VqaModel<T>::memory(const Example<T>& ex, const EncodedQuestion<T>& q,
                              AttentionTrace* trace) const {
  const std::size_t d = config_.crn.dim;
  const auto& vs = ex.volume.shape();
  if (config_.variant != Variant::linguistic_only &&
      (vs.size() != 4 || vs[3] != config_.crn.in_channels)) {
    throw DimensionError("model: volume " + shape_str(vs) + " does not have " +
                         std::to_string(config_.crn.in_channels) + " channels");
  }
  auto single_frame = [&]() {
    std::size_t mid = vs[0] / 2;
    return project_frames(select(ex.volume, mid));  // [W, H, d]
  };
  auto reason = [&](const Tensor<T>& grid) {
    auto result = mac_->run(q, KnowledgeBase<T>{grid});
    if (trace) *trace = result.trace;
    return result.memory;
  };
  switch (config_.variant) {
    case Variant::linguistic_only: return Tensor<T>::zeros({d});
    case Variant::ling_sframe: {
      auto grid = single_frame();
      return mean(reshape(grid, {vs[1] * vs[2], d}), 0);
    }
    case Variant::sframe_mac: return reason(single_frame());
    case Variant::avgpool_mac: {
      std::vector<std::size_t> idx;
      for (const auto& clip : clip_frame_indices(vs[0], kSampledFrames, 1)) idx.push_back(clip[0]);
      auto frames = project_frames(index_select(ex.volume, std::span<const std::size_t>(idx)));
      return reason(mean(frames, 0));
    }
    case Variant::trn_mac:
    case Variant::crn_mac: {
      auto kb = crn_->forward(FeatureVolume<T>{ex.volume}, q.question, ex.sampling_seed);
      return reason(kb.grid);
    }
    case Variant::crn_mlp: {
      auto kb = crn_->forward(FeatureVolume<T>{ex.volume}, q.question, ex.sampling_seed);
      auto pooled = mean(reshape(kb.grid, {vs[1] * vs[2], d}), 0);
      auto hidden = elu(linear(concat<T>({pooled, q.question}, 0), mlp_w1_, mlp_b1_));
      return linear(hidden, mlp_w2_, mlp_b2_);
    }
  }
  return Tensor<T>::zeros({d});
}

template <class T>
ModelOutput<T> VqaModel<T>::forward(const Example<T>& ex, bool training,
                                    std::uint64_t dropout_seed) const {
  ModelOutput<T> out;
  auto q = language_->encode(std::span<const std::size_t>(ex.tokens));
  auto m = memory(ex, q, &out.trace);
  auto question = q.question;
  if (training && config_.dropout > 0) {
    m = dropout(m, config_.dropout, hash_string("memory", dropout_seed));
    question = dropout(question, config_.dropout, hash_string("question", dropout_seed));
  }
  out.is_count = ex.task == Task::repetition_count;
  if (out.is_count) {
    out.count_score = count_->score(m, question);
  } else {
    out.logits = open_->logits(m, question);
  }
  return out;
}

template <class T>
Tensor<T> VqaModel<T>::loss(const ModelOutput<T>& out, const Example<T>& ex) const {
  if (out.is_count) return squared_error(out.count_score, static_cast<T>(ex.count_target));
  return cross_entropy(out.logits, ex.label);
}

template <class T>
std::string VqaModel<T>::predict(const ModelOutput<T>& out) const {
  if (out.is_count) return std::to_string(count_prediction(out.count_score.item()));
  auto v = out.logits.data();
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return vocab_.answer(best);
}

Vocabulary corpus_vocabulary(const Corpus& corpus) {
  std::vector<std::vector<std::string>> questions;
  std::set<std::string> answers;
  for (const auto& it : corpus.items) {
    questions.push_back(it.tokens);
    if (it.task != Task::repetition_count) answers.insert(it.answer);
  }
  return Vocabulary::build(questions, {answers.begin(), answers.end()});
}

template <class T>
Example<T> make_example(const Corpus& corpus, const Vocabulary& vocab, std::size_t item) {
  const QAItem& qa = corpus.items.at(item);
  Example<T> ex;
  ex.item = item;
  ex.tokens = vocab.encode(qa.tokens);
  ex.volume = volume_tensor<T>(corpus.volumes.at(qa.scene_id));
  ex.task = qa.task;
  if (qa.task == Task::repetition_count) {
    ex.count_target = std::stod(qa.answer);
  } else {
    ex.label = vocab.answer_index(qa.answer);
  }
  ex.sampling_seed = hash_string("scene" + std::to_string(qa.scene_id));
  return ex;
}

template class VqaModel<float>;
template class VqaModel<double>;
template Example<float> make_example(const Corpus&, const Vocabulary&, std::size_t);
template Example<double> make_example(const Corpus&, const Vocabulary&, std::size_t);

}  // namespace dpvqa
