// SPDX-License-Identifier: Apache-2.0
#include "tfm/attention.hpp"

#include <algorithm>
#include <cmath>

#include "tfm/error.hpp"

namespace tfm {

namespace {

void check_attention_shapes(const Tensor2D& q, const Tensor2D& k, const Tensor2D& v,
                            const BoolGrid& mask, std::size_t heads) {
  if (heads == 0) throw NumericError("attention: heads must be >= 1");
  if (q.cols() != k.cols()) throw NumericError("attention: Q and K widths differ");
  if (k.rows() != v.rows()) throw NumericError("attention: K and V row counts differ");
  if (q.cols() % heads != 0 || v.cols() % heads != 0) {
    throw NumericError("attention: width not divisible by head count");
  }
  if (mask.rows() != q.rows() || mask.cols() != k.rows()) {
    throw NumericError("attention: mask is " + std::to_string(mask.rows()) + "x" +
                       std::to_string(mask.cols()) + ", expected " + std::to_string(q.rows()) +
                       "x" + std::to_string(k.rows()));
  }
}

}  // namespace

std::pair<Tensor2D, AttentionCache> attention_forward(const Tensor2D& q, const Tensor2D& k,
                                                      const Tensor2D& v, const BoolGrid& mask,
                                                      std::size_t heads) {
  check_attention_shapes(q, k, v, mask, heads);
  const std::size_t nq = q.rows();
  const std::size_t nk = k.rows();
  const std::size_t dh = q.cols() / heads;
  const std::size_t dv = v.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionCache cache;
  cache.q = q;
  cache.k = k;
  cache.v = v;
  cache.mask = mask;
  cache.heads = heads;
  cache.row_active.resize(nq);
  for (std::size_t i = 0; i < nq; ++i) cache.row_active[i] = mask.row_any(i);

  Tensor2D out(nq, v.cols());
  std::vector<double> logits(nk);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor2D probs(nq, nk);
    const std::size_t qoff = h * dh;
    const std::size_t voff = h * dv;
    for (std::size_t i = 0; i < nq; ++i) {
      if (!cache.row_active[i]) continue;
      double max_logit = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += q(i, qoff + c) * k(j, qoff + c);
        s *= scale;
        if (!mask(i, j)) s += kMaskBias;
        logits[j] = s;
        max_logit = std::max(max_logit, s);
      }
      double total = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        logits[j] = std::exp(logits[j] - max_logit);
        total += logits[j];
      }
      for (std::size_t j = 0; j < nk; ++j) {
        const double p = logits[j] / total;
        probs(i, j) = p;
        if (p == 0.0) continue;
        for (std::size_t c = 0; c < dv; ++c) out(i, voff + c) += p * v(j, voff + c);
      }
    }
    cache.probs.push_back(std::move(probs));
  }
  return {std::move(out), std::move(cache)};
}

AttentionGrads attention_backward(const AttentionCache& cache, const Tensor2D& dout) {
  const Tensor2D& q = cache.q;
  const Tensor2D& k = cache.k;
  const Tensor2D& v = cache.v;
  if (dout.rows() != q.rows() || dout.cols() != v.cols()) {
    throw NumericError("attention_backward: upstream gradient shape mismatch");
  }
  const std::size_t heads = cache.heads;
  const std::size_t nq = q.rows();
  const std::size_t nk = k.rows();
  const std::size_t dh = q.cols() / heads;
  const std::size_t dv = v.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  AttentionGrads g{Tensor2D(q.rows(), q.cols()), Tensor2D(k.rows(), k.cols()),
                   Tensor2D(v.rows(), v.cols())};
  std::vector<double> dprob(nk);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor2D& probs = cache.probs[h];
    const std::size_t qoff = h * dh;
    const std::size_t voff = h * dv;
    for (std::size_t i = 0; i < nq; ++i) {
      if (!cache.row_active[i]) continue;
      double weighted = 0.0;
      for (std::size_t j = 0; j < nk; ++j) {
        const double p = probs(i, j);
        double dp = 0.0;
        for (std::size_t c = 0; c < dv; ++c) {
          dp += dout(i, voff + c) * v(j, voff + c);
          g.dv(j, voff + c) += p * dout(i, voff + c);
        }
        dprob[j] = dp;
        weighted += p * dp;
      }
      for (std::size_t j = 0; j < nk; ++j) {
        const double ds = probs(i, j) * (dprob[j] - weighted) * scale;
        if (ds == 0.0) continue;
        for (std::size_t c = 0; c < dh; ++c) {
          g.dq(i, qoff + c) += ds * k(j, qoff + c);
          g.dk(j, qoff + c) += ds * q(i, qoff + c);
        }
      }
    }
  }
  return g;
}

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, std::size_t dim,
                                       std::size_t heads)
    : query_(prefix + ".query", dim, dim),
      key_(prefix + ".key", dim, dim, Init::kGlorotUniform, false),
      value_(prefix + ".value", dim, dim),
      output_(prefix + ".output", dim, dim),
      heads_(heads) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(prefix + ": dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
}

void MultiHeadAttention::declare(ParamStore& store) const {
  query_.declare(store);
  key_.declare(store);
  value_.declare(store);
  output_.declare(store);
}

Tensor2D MultiHeadAttention::forward(const ParamStore& store, const Tensor2D& xq,
                                     const Tensor2D& xkv, const BoolGrid& mask,
                                     Cache& cache) const {
  cache.xq = xq;
  cache.xkv = xkv;
  Tensor2D q = query_.forward(store, xq);
  Tensor2D k = key_.forward(store, xkv);
  Tensor2D v = value_.forward(store, xkv);
  auto [mixed, attn] = attention_forward(q, k, v, mask, heads_);
  cache.attention = std::move(attn);
  cache.mixed = std::move(mixed);
  return output_.forward(store, cache.mixed);
}

std::pair<Tensor2D, Tensor2D> MultiHeadAttention::backward(ParamStore& store, const Cache& cache,
                                                           const Tensor2D& dy) const {
  Tensor2D dmixed = output_.backward(store, cache.mixed, dy);
  AttentionGrads g = attention_backward(cache.attention, dmixed);
  Tensor2D dxq = query_.backward(store, cache.xq, g.dq);
  Tensor2D dxkv = key_.backward(store, cache.xkv, g.dk);
  dxkv += value_.backward(store, cache.xkv, g.dv);
  return {std::move(dxq), std::move(dxkv)};
}

MaskedAttentionLayer::MaskedAttentionLayer(const std::string& prefix, std::size_t dim,
                                           std::size_t heads, std::size_t ffn_hidden)
    : attention_(prefix + ".attn", dim, heads),
      norm_query_(prefix + ".norm_q", dim),
      norm_memory_(prefix + ".norm_kv", dim),
      ffn_(prefix + ".ffn", dim, ffn_hidden),
      norm_ffn_(prefix + ".norm_ffn", dim) {}

void MaskedAttentionLayer::declare(ParamStore& store) const {
  attention_.declare(store);
  norm_query_.declare(store);
  norm_memory_.declare(store);
  ffn_.declare(store);
  norm_ffn_.declare(store);
}

Tensor2D MaskedAttentionLayer::forward(const ParamStore& store, const Tensor2D& xq,
                                       const Tensor2D& xkv, const BoolGrid& mask,
                                       Cache& cache) const {
  const Tensor2D nq = norm_query_.forward(store, xq, cache.norm_query);
  const Tensor2D nkv = norm_memory_.forward(store, xkv, cache.norm_memory);
  Tensor2D attended = attention_.forward(store, nq, nkv, mask, cache.attention);
  cache.row_active = cache.attention.attention.row_active;
  // A query with no admissible key contributes nothing, output bias included.
  for (std::size_t r = 0; r < attended.rows(); ++r) {
    if (!cache.row_active[r]) std::fill(attended.row(r).begin(), attended.row(r).end(), 0.0);
  }
  Tensor2D h = xq + attended;
  const Tensor2D n2 = norm_ffn_.forward(store, h, cache.norm_ffn);
  return h + ffn_.forward(store, n2, cache.ffn);
}

std::pair<Tensor2D, Tensor2D> MaskedAttentionLayer::backward(ParamStore& store,
                                                             const Cache& cache,
                                                             const Tensor2D& dy) const {
  Tensor2D dh = dy + norm_ffn_.backward(store, cache.norm_ffn, ffn_.backward(store, cache.ffn, dy));
  Tensor2D dattended = dh;
  for (std::size_t r = 0; r < dattended.rows(); ++r) {
    if (!cache.row_active[r]) std::fill(dattended.row(r).begin(), dattended.row(r).end(), 0.0);
  }
  auto [dnq, dnkv] = attention_.backward(store, cache.attention, dattended);
  Tensor2D dxq = dh + norm_query_.backward(store, cache.norm_query, dnq);
  Tensor2D dxkv = norm_memory_.backward(store, cache.norm_memory, dnkv);
  return {std::move(dxq), std::move(dxkv)};
}

}  // namespace tfm
