#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dpvqa/param_store.hpp"

namespace dpvqa {

// Raw frame features, [N, W, H, D].
template <class T>
struct FeatureVolume {
  Tensor<T> frames;

  std::size_t frame_count() const { return frames.extent(0); }
};

// Projected clips, [L, T, W, H, d].
template <class T>
struct ClipSet {
  Tensor<T> clips;

  std::size_t clip_count() const { return clips.extent(0); }
  std::size_t clip_length() const { return clips.extent(1); }
};

template <class T>
struct PooledClips {
  Tensor<T> features;           // [L, W, H, d] attention-pooled clip features
  Tensor<T> attention_weights;  // [L, T], each row a softmax over frames
};

// Spatial grid the reasoner reads from, [W, H, d].
template <class T>
struct KnowledgeBase {
  Tensor<T> grid;
};

using Subset = std::vector<std::size_t>;

/// Frame indices of each clip after edge-replication padding to L·T frames:
/// clip centers are spaced evenly over the (padded) video and each clip takes
/// `clip_len` consecutive frames around its center. Indices refer to the
/// unpadded video; padded positions repeat the last frame.
std::vector<std::vector<std::size_t>> clip_frame_indices(std::size_t frames, std::size_t clips,
                                                         std::size_t clip_len);

/// Edge-replicates the last frame until the volume holds `target` frames.
template <class T>
FeatureVolume<T> pad_frames(const FeatureVolume<T>& volume, std::size_t target);

std::uint64_t binomial(std::size_t n, std::size_t k);

/// All strictly increasing k-subsets of {0..L-1} in lexicographic order.
std::vector<Subset> enumerate_subsets(std::size_t clips, std::size_t order);

// Exhaustive when C(L,k) ≤ max_subsets, otherwise `max_subsets` distinct
// subsets drawn uniformly from `seed`; each subset keeps temporal order.
struct SubsetPolicy {
  std::size_t max_subsets = 32;
  std::uint64_t seed = 0;
};

std::vector<Subset> select_subsets(std::size_t clips, std::size_t order, const SubsetPolicy& policy);

// g_θ maps k slot tensors [n, W, H, d] (slot j holds the j-th clip of every
// selected subset) to [n, W, H, d]; h_Φ maps [W, H, d] to [W, H, d].
template <class T>
struct RelationFns {
  std::function<Tensor<T>(std::span<const Tensor<T>> slots)> g;
  std::function<Tensor<T>(const Tensor<T>& summed)> h;
};

/// R^(k) = h(Σ_subsets g(Ĉ_l1, …, Ĉ_lk)), position-wise over the grid.
template <class T>
Tensor<T> crn_k_order(const Tensor<T>& pooled, std::size_t order, std::span<const Subset> subsets,
                      const RelationFns<T>& fns);

struct CrnConfig {
  std::size_t clips = 5;        // L
  std::size_t clip_len = 8;     // T
  std::size_t max_order = 0;    // K; 0 selects max(2, L-1)
  std::size_t in_channels = 16; // D
  std::size_t dim = 64;         // d
  std::size_t max_subsets = 32;

  std::size_t resolved_max_order() const;
};

// Clip-based relation network: projection, question-conditioned temporal
// attention pooling, and k-order clip relations summed into a knowledge base.
template <class T>
class ClipRelationNetwork {
 public:
  ClipRelationNetwork(ParamStore<T>& store, const CrnConfig& config,
                      const std::string& prefix = "crn");

  const CrnConfig& config() const { return config_; }

  /// Projects raw frames [..., D] to [..., d] position-wise.
  Tensor<T> project(const Tensor<T>& frames) const;

  ClipSet<T> segment_clips(const FeatureVolume<T>& volume) const;
  PooledClips<T> temporal_attention_pool(const ClipSet<T>& clips, const Tensor<T>& question) const;
  Tensor<T> k_order(const Tensor<T>& pooled, std::size_t order, const SubsetPolicy& policy) const;
  KnowledgeBase<T> build_knowledge_base(const Tensor<T>& pooled, std::size_t max_order,
                                        std::uint64_t sampling_seed) const;

  /// Whole pipeline; `sampling_seed` selects subsets where sampling applies.
  KnowledgeBase<T> forward(const FeatureVolume<T>& volume, const Tensor<T>& question,
                           std::uint64_t sampling_seed = 0,
                           PooledClips<T>* pooled_out = nullptr) const;

  RelationFns<T> relation_fns(std::size_t order) const;

  struct OrderParams {
    Tensor<T> w1, b1, w2, b2;
  };
  const OrderParams& order_params(std::size_t order) const;
  Tensor<T> proj_w, proj_b;
  Tensor<T> att_wq, att_bq, att_wv, att_bv, att_score;
  Tensor<T> h_w, h_b;

 private:
  CrnConfig config_;
  std::vector<OrderParams> orders_;  // index k-2
};

/// Configuration of the frame-level special case: `frames` single-frame clips.
CrnConfig trn_config(const CrnConfig& base, std::size_t frames);

/// Frame-level relation network over `frames` evenly sampled frames (T = 1).
template <class T>
KnowledgeBase<T> trn_mode(const ClipRelationNetwork<T>& trn, const FeatureVolume<T>& volume,
                          const Tensor<T>& question, std::uint64_t sampling_seed = 0);

extern template class ClipRelationNetwork<float>;
extern template class ClipRelationNetwork<double>;

}  // namespace dpvqa
