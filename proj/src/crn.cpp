#include "dpvqa/crn.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <set>

#include "dpvqa/ops.hpp"

namespace dpvqa {

std::vector<std::vector<std::size_t>> clip_frame_indices(std::size_t frames, std::size_t clips,
                                                         std::size_t clip_len) {
  if (frames == 0) throw ContractError("segment_clips: video has no frames");
  if (clips == 0 || clip_len == 0) throw ContractError("segment_clips: L and T must be positive");
  const std::size_t padded = std::max(frames, clips * clip_len);
  std::vector<std::vector<std::size_t>> out(clips);
  for (std::size_t l = 0; l < clips; ++l) {
    // floor(center − T/2) with center = (2l+1)·N / 2L, in integers.
    std::size_t start = ((2 * l + 1) * padded - clips * clip_len) / (2 * clips);
    start = std::min(start, padded - clip_len);
    for (std::size_t t = 0; t < clip_len; ++t) out[l].push_back(std::min(start + t, frames - 1));
  }
  return out;
}

template <class T>
FeatureVolume<T> pad_frames(const FeatureVolume<T>& volume, std::size_t target) {
  const std::size_t n = volume.frame_count();
  if (n >= target) return volume;
  std::vector<std::size_t> idx(target);
  for (std::size_t i = 0; i < target; ++i) idx[i] = std::min(i, n - 1);
  return {index_select(volume.frames, std::span<const std::size_t>(idx))};
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // r·(n−k+i)/i stays integral at every step.
    if (r > std::numeric_limits<std::uint64_t>::max() / (n - k + i)) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    r = r * (n - k + i) / i;
  }
  return r;
}

std::vector<Subset> enumerate_subsets(std::size_t clips, std::size_t order) {
  std::vector<Subset> out;
  if (order == 0 || order > clips) return out;
  Subset cur(order);
  std::iota(cur.begin(), cur.end(), 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = order;
    while (i > 0 && cur[i - 1] == clips - order + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < order; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

std::vector<Subset> select_subsets(std::size_t clips, std::size_t order,
                                   const SubsetPolicy& policy) {
  if (order > clips) {
    throw ContractError("k-order relation: order " + std::to_string(order) + " exceeds " +
                        std::to_string(clips) + " clips");
  }
  if (order == 0 || policy.max_subsets == 0) {
    throw ContractError("k-order relation: empty subset selection");
  }
  if (binomial(clips, order) <= policy.max_subsets) return enumerate_subsets(clips, order);

  std::mt19937_64 rng(policy.seed);
  std::set<Subset> chosen;
  std::vector<std::size_t> pool(clips);
  while (chosen.size() < policy.max_subsets) {
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < order; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, clips - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    Subset s(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(order));
    std::sort(s.begin(), s.end());
    chosen.insert(std::move(s));
  }
  return {chosen.begin(), chosen.end()};
}

template <class T>
Tensor<T> crn_k_order(const Tensor<T>& pooled, std::size_t order, std::span<const Subset> subsets,
                      const RelationFns<T>& fns) {
  const std::size_t clips = pooled.extent(0);
  if (order < 2 || order > clips) {
    throw ContractError("k-order relation: need 2 <= k <= L, got k=" + std::to_string(order) +
                        ", L=" + std::to_string(clips));
  }
  if (subsets.empty()) throw ContractError("k-order relation: empty subset selection");
  std::vector<Tensor<T>> slots(order);
  std::vector<std::size_t> idx(subsets.size());
  for (std::size_t j = 0; j < order; ++j) {
    for (std::size_t s = 0; s < subsets.size(); ++s) {
      const auto& sub = subsets[s];
      if (sub.size() != order) throw ContractError("k-order relation: subset of wrong arity");
      if (j > 0 && sub[j] <= sub[j - 1]) {
        throw ContractError("k-order relation: subset indices must be strictly increasing");
      }
      idx[s] = sub[j];
    }
    slots[j] = index_select(pooled, std::span<const std::size_t>(idx));
  }
  auto relations = fns.g(std::span<const Tensor<T>>(slots));
  return fns.h(reduce_sum(relations, 0));
}

std::size_t CrnConfig::resolved_max_order() const {
  if (max_order != 0) return max_order;
  return std::min(clips, std::max<std::size_t>(2, clips > 0 ? clips - 1 : 0));
}

CrnConfig trn_config(const CrnConfig& base, std::size_t frames) {
  CrnConfig c = base;
  c.clips = frames;
  c.clip_len = 1;
  c.max_order = std::min(base.resolved_max_order(), frames);
  return c;
}

template <class T>
ClipRelationNetwork<T>::ClipRelationNetwork(ParamStore<T>& store, const CrnConfig& config,
                                            const std::string& prefix)
    : config_(config) {
  const std::size_t d = config.dim;
  const std::size_t max_k = config.resolved_max_order();
  if (config.clips == 0 || config.clip_len == 0 || d == 0 || config.in_channels == 0) {
    throw ContractError("crn: L, T, d and D must be positive");
  }
  auto get_or_add = [&](const std::string& name, Shape shape, Init init) -> Tensor<T> {
    if (store.contains(name)) {
      if (store.get(name).shape() != shape) {
        throw DimensionError("crn: parameter '" + name + "' exists with shape " +
                             shape_str(store.get(name).shape()));
      }
      return store.get(name);
    }
    return store.add(name, std::move(shape), init);
  };
  proj_w = get_or_add(prefix + ".proj.w", {d, config.in_channels}, Init::fan_in_uniform);
  proj_b = get_or_add(prefix + ".proj.b", {d}, Init::zeros);
  att_wq = get_or_add(prefix + ".attn.wq", {d, d}, Init::fan_in_uniform);
  att_bq = get_or_add(prefix + ".attn.bq", {d}, Init::zeros);
  att_wv = get_or_add(prefix + ".attn.wv", {d, d}, Init::fan_in_uniform);
  att_bv = get_or_add(prefix + ".attn.bv", {d}, Init::zeros);
  att_score = get_or_add(prefix + ".attn.score", {1, d}, Init::fan_in_uniform);
  h_w = get_or_add(prefix + ".h.w", {d, d}, Init::fan_in_uniform);
  h_b = get_or_add(prefix + ".h.b", {d}, Init::zeros);
  for (std::size_t k = 2; k <= max_k; ++k) {
    std::string p = prefix + ".g" + std::to_string(k);
    orders_.push_back({get_or_add(p + ".w1", {d, k * d}, Init::fan_in_uniform),
                       get_or_add(p + ".b1", {d}, Init::zeros),
                       get_or_add(p + ".w2", {d, d}, Init::fan_in_uniform),
                       get_or_add(p + ".b2", {d}, Init::zeros)});
  }
}

template <class T>
const typename ClipRelationNetwork<T>::OrderParams& ClipRelationNetwork<T>::order_params(
    std::size_t order) const {
  if (order < 2 || order - 2 >= orders_.size()) {
    throw ContractError("crn: no relation module for order " + std::to_string(order));
  }
  return orders_[order - 2];
}

template <class T>
Tensor<T> ClipRelationNetwork<T>::project(const Tensor<T>& frames) const {
  return linear(frames, proj_w, proj_b);
}

template <class T>
ClipSet<T> ClipRelationNetwork<T>::segment_clips(const FeatureVolume<T>& volume) const {
  const auto& s = volume.frames.shape();
  if (s.size() != 4 || s[3] != config_.in_channels) {
    throw DimensionError("segment_clips: expected frames [N, W, H, " +
                         std::to_string(config_.in_channels) + "], got " + shape_str(s));
  }
  auto groups = clip_frame_indices(s[0], config_.clips, config_.clip_len);
  std::vector<std::size_t> flat;
  for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());
  auto selected = index_select(volume.frames, std::span<const std::size_t>(flat));
  auto projected = project(selected);
  return {reshape(projected, {config_.clips, config_.clip_len, s[1], s[2], config_.dim})};
}

template <class T>
PooledClips<T> ClipRelationNetwork<T>::temporal_attention_pool(const ClipSet<T>& clips,
                                                               const Tensor<T>& question) const {
  const auto& s = clips.clips.shape();
  const std::size_t d = config_.dim;
  if (s.size() != 5 || s[4] != d) {
    throw DimensionError("temporal_attention_pool: clips " + shape_str(s) + " do not have d=" +
                         std::to_string(d));
  }
  if (question.numel() != d) {
    throw DimensionError("temporal_attention_pool: question " + shape_str(question.shape()) +
                         " does not match clip dimension " + std::to_string(d));
  }
  const std::size_t L = s[0], Tn = s[1], W = s[2], H = s[3];
  auto frames = reshape(clips.clips, {L * Tn, W * H, d});
  auto frame_pool = mean(frames, 1);                            // [L·T, d]
  auto q_proj = linear(question, att_wq, att_bq);               // [d]
  auto v_proj = linear(frame_pool, att_wv, att_bv);             // [L·T, d]
  auto scores = linear(mul(v_proj, q_proj), att_score);         // [L·T, 1]
  auto weights = softmax(reshape(scores, {L, Tn}));             // [L, T]
  auto pooled = weighted_sum(weights, clips.clips);             // [L, W, H, d]
  return {pooled, weights};
}

template <class T>
RelationFns<T> ClipRelationNetwork<T>::relation_fns(std::size_t order) const {
  const OrderParams& p = order_params(order);
  RelationFns<T> fns;
  fns.g = [&p](std::span<const Tensor<T>> slots) {
    auto joined = concat(slots, slots[0].rank() - 1);
    auto hidden = elu(linear(joined, p.w1, p.b1));
    return elu(linear(hidden, p.w2, p.b2));
  };
  fns.h = [this](const Tensor<T>& summed) { return linear(summed, h_w, h_b); };
  return fns;
}

template <class T>
Tensor<T> ClipRelationNetwork<T>::k_order(const Tensor<T>& pooled, std::size_t order,
                                          const SubsetPolicy& policy) const {
  auto subsets = select_subsets(pooled.extent(0), order, policy);
  return crn_k_order(pooled, order, std::span<const Subset>(subsets), relation_fns(order));
}

template <class T>
KnowledgeBase<T> ClipRelationNetwork<T>::build_knowledge_base(const Tensor<T>& pooled,
                                                              std::size_t max_order,
                                                              std::uint64_t sampling_seed) const {
  if (max_order < 2) throw ContractError("knowledge base: K must be at least 2");
  if (max_order > pooled.extent(0)) {
    throw ContractError("knowledge base: K=" + std::to_string(max_order) + " exceeds L=" +
                        std::to_string(pooled.extent(0)));
  }
  std::vector<Tensor<T>> relations;
  for (std::size_t k = 2; k <= max_order; ++k) {
    SubsetPolicy policy{config_.max_subsets, hash_string(std::to_string(k), sampling_seed)};
    relations.push_back(k_order(pooled, k, policy));
  }
  if (relations.size() == 1) return {relations[0]};
  return {add_n(std::span<const Tensor<T>>(relations))};
}

template <class T>
KnowledgeBase<T> ClipRelationNetwork<T>::forward(const FeatureVolume<T>& volume,
                                                 const Tensor<T>& question,
                                                 std::uint64_t sampling_seed,
                                                 PooledClips<T>* pooled_out) const {
  auto clips = segment_clips(volume);
  auto pooled = temporal_attention_pool(clips, question);
  auto kb = build_knowledge_base(pooled.features, config_.resolved_max_order(), sampling_seed);
  if (pooled_out) *pooled_out = pooled;
  return kb;
}

template <class T>
KnowledgeBase<T> trn_mode(const ClipRelationNetwork<T>& trn, const FeatureVolume<T>& volume,
                          const Tensor<T>& question, std::uint64_t sampling_seed) {
  if (trn.config().clip_len != 1) {
    throw ContractError("trn_mode: network must be configured with T = 1");
  }
  return trn.forward(volume, question, sampling_seed);
}

template class ClipRelationNetwork<float>;
template class ClipRelationNetwork<double>;
template FeatureVolume<float> pad_frames(const FeatureVolume<float>&, std::size_t);
template FeatureVolume<double> pad_frames(const FeatureVolume<double>&, std::size_t);
template Tensor<float> crn_k_order(const Tensor<float>&, std::size_t, std::span<const Subset>,
                                   const RelationFns<float>&);
template Tensor<double> crn_k_order(const Tensor<double>&, std::size_t, std::span<const Subset>,
                                    const RelationFns<double>&);
template KnowledgeBase<float> trn_mode(const ClipRelationNetwork<float>&,
                                       const FeatureVolume<float>&, const Tensor<float>&,
                                       std::uint64_t);
template KnowledgeBase<double> trn_mode(const ClipRelationNetwork<double>&,
                                        const FeatureVolume<double>&, const Tensor<double>&,
                                        std::uint64_t);

}  // namespace dpvqa
