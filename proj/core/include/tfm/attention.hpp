// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tfm/layers.hpp"
#include "tfm/param_store.hpp"
#include "tfm/tensor.hpp"

namespace tfm {

/// Additive pre-softmax bias for a false mask entry.
inline constexpr double kMaskBias = -1e9;

struct AttentionCache {
  Tensor2D q;
  Tensor2D k;
  Tensor2D v;
  BoolGrid mask;
  std::size_t heads = 1;
  /// One Tq×Tk probability matrix per head. Rows of fully masked queries are
  /// all zero.
  std::vector<Tensor2D> probs;
  std::vector<bool> row_active;
};

struct AttentionGrads {
  Tensor2D dq;
  Tensor2D dk;
  Tensor2D dv;
};

/// Per head: softmax(Q_h·K_hᵀ/√d_h + bias(mask))·V_h, heads concatenated by
/// column. A query row whose mask row is entirely false yields a zero row.
std::pair<Tensor2D, AttentionCache> attention_forward(const Tensor2D& q, const Tensor2D& k,
                                                      const Tensor2D& v, const BoolGrid& mask,
                                                      std::size_t heads);

/// Exact reverse-mode gradients of attention_forward.
AttentionGrads attention_backward(const AttentionCache& cache, const Tensor2D& dout);

/// Projections around attention_forward: Q = Xq·Wq, K = Xkv·Wk, V = Xkv·Wv,
/// output = attention·Wo (all with biases).
class MultiHeadAttention {
 public:
  struct Cache {
    Tensor2D xq;
    Tensor2D xkv;
    AttentionCache attention;
    Tensor2D mixed;
  };

  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& prefix, std::size_t dim, std::size_t heads);

  void declare(ParamStore& store) const;
  Tensor2D forward(const ParamStore& store, const Tensor2D& xq, const Tensor2D& xkv,
                   const BoolGrid& mask, Cache& cache) const;
  /// Returns {dXq, dXkv}.
  std::pair<Tensor2D, Tensor2D> backward(ParamStore& store, const Cache& cache,
                                         const Tensor2D& dy) const;

  std::size_t heads() const { return heads_; }

 private:
  Linear query_;
  Linear key_;
  Linear value_;
  Linear output_;
  std::size_t heads_ = 1;
};

/// Pre-norm attention layer over a query set and a key/value set:
///   h = xq + MHA(LNq(xq), LNkv(xkv), mask),  y = h + FFN(LNffn(h)).
/// A query row with no true mask entry gets a zero attention contribution
/// (output bias included), so the residual passes through that sublayer; the
/// feed-forward sublayer still applies.
class MaskedAttentionLayer {
 public:
  struct Cache {
    LayerNorm::Cache norm_query;
    LayerNorm::Cache norm_memory;
    MultiHeadAttention::Cache attention;
    LayerNorm::Cache norm_ffn;
    FeedForward::Cache ffn;
    std::vector<bool> row_active;
  };

  MaskedAttentionLayer() = default;
  MaskedAttentionLayer(const std::string& prefix, std::size_t dim, std::size_t heads,
                       std::size_t ffn_hidden);

  void declare(ParamStore& store) const;
  Tensor2D forward(const ParamStore& store, const Tensor2D& xq, const Tensor2D& xkv,
                   const BoolGrid& mask, Cache& cache) const;
  /// Returns {dXq, dXkv}. For self-attention the caller sums both.
  std::pair<Tensor2D, Tensor2D> backward(ParamStore& store, const Cache& cache,
                                         const Tensor2D& dy) const;

 private:
  MultiHeadAttention attention_;
  LayerNorm norm_query_;
  LayerNorm norm_memory_;
  FeedForward ffn_;
  LayerNorm norm_ffn_;
};

}  // namespace tfm
