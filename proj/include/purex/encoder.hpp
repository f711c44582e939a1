#pragma once

// Sentence encoder: word + position embeddings, valid convolution, (piecewise)
// max pooling and tanh, producing the sentence embedding x_q.

#include <cmath>
#include <string>
#include <vector>

#include "purex/corpus.hpp"
#include "purex/kernel.hpp"

namespace purex {

enum class EncoderVariant { CNN, PCNN };

inline const char* to_string(EncoderVariant v) { return v == EncoderVariant::CNN ? "CNN" : "PCNN"; }

struct EncoderConfig {
  int d_word = 50;
  int d_pos = 5;
  int n_filters = 230;
  int window = 3;
  EncoderVariant variant = EncoderVariant::PCNN;
  int max_len = 100;
  int pos_clip = 30;
  double dropout = 0.5;

  int input_dim() const { return d_word + 2 * d_pos; }
  int output_dim() const { return variant == EncoderVariant::CNN ? n_filters : 3 * n_filters; }
};

template <typename Scalar>
struct EncoderParams {
  EmbeddingTable<Scalar> table;
  Parameter<Scalar> filters;  // K x (window * input_dim)
};

template <typename Scalar>
EncoderParams<Scalar> init_encoder(const EncoderConfig& cfg, EmbeddingTable<Scalar> table, Rng& rng) {
  if (table.d_word() != cfg.d_word || table.d_pos() != cfg.d_pos || table.pos_clip != cfg.pos_clip) {
    throw ConfigError("embedding table does not match encoder config");
  }
  EncoderParams<Scalar> params;
  params.table = std::move(table);
  const Index fan_in = static_cast<Index>(cfg.window) * cfg.input_dim();
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + cfg.n_filters));
  params.filters = Parameter<Scalar>(uniform_matrix<Scalar>(cfg.n_filters, fan_in, bound, rng));
  return params;
}

struct EncoderDiagnostics {
  long long sentences = 0;
  long long empty_segments = 0;
  long long truncated = 0;
  long long padded = 0;
};

/// Everything the backward pass needs from one forward pass.
template <typename Scalar>
struct SentenceCache {
  std::vector<int> words;
  std::vector<int> head_index;
  std::vector<int> tail_index;
  Matrix<Scalar> input;
  Matrix<Scalar> conv;
  PoolResult<Scalar> pooled;
  Vector<Scalar> activated;
  DropoutResult<Scalar> dropped;
};

/// Input matrix, one row per token: [word | head position | tail position].
/// Truncated to max_len, right-padded with PAD to at least `window` rows.
template <typename Scalar>
Matrix<Scalar> embed_input(const SentenceInstance& instance, const EmbeddingTable<Scalar>& table,
                           const EncoderConfig& cfg, SentenceCache<Scalar>* cache = nullptr,
                           EncoderDiagnostics* diag = nullptr) {
  const int kept = std::min<int>(static_cast<int>(instance.tokens.size()), cfg.max_len);
  const int rows = std::max(kept, cfg.window);
  if (diag) {
    if (kept < static_cast<int>(instance.tokens.size())) ++diag->truncated;
    if (rows > kept) ++diag->padded;
  }
  const RelativePositions pos = relative_positions(instance, table.pos_clip, static_cast<std::size_t>(rows));
  const int dw = table.d_word();
  const int dp = table.d_pos();
  Matrix<Scalar> input(rows, dw + 2 * dp);
  std::vector<int> words(static_cast<std::size_t>(rows), Vocabulary::kPad);
  for (int i = 0; i < rows; ++i) {
    if (i < kept) {
      const int id = instance.tokens[static_cast<std::size_t>(i)];
      if (id < 0 || id >= table.word.rows()) {
        throw std::logic_error("token id " + std::to_string(id) + " outside embedding table");
      }
      words[static_cast<std::size_t>(i)] = id;
    }
    input.row(i).head(dw) = table.word.value.row(words[static_cast<std::size_t>(i)]);
    input.row(i).segment(dw, dp) = table.pos_head.value.row(pos.head[static_cast<std::size_t>(i)]);
    input.row(i).tail(dp) = table.pos_tail.value.row(pos.tail[static_cast<std::size_t>(i)]);
  }
  if (cache) {
    cache->words = std::move(words);
    cache->head_index = pos.head;
    cache->tail_index = pos.tail;
  }
  return input;
}

/// x_q for one sentence. Dropout on x_q only in training mode (then `rng`
/// is required). Pass `cache` to enable encode_backward.
template <typename Scalar>
Vector<Scalar> encode_sentence(const SentenceInstance& instance, const EncoderParams<Scalar>& params,
                               const EncoderConfig& cfg, bool training, Rng* rng = nullptr,
                               SentenceCache<Scalar>* cache = nullptr,
                               EncoderDiagnostics* diag = nullptr) {
  SentenceCache<Scalar> local;
  SentenceCache<Scalar>& c = cache ? *cache : local;
  c.input = embed_input(instance, params.table, cfg, &c, diag);
  c.conv = conv1d(c.input, params.filters, cfg.window);
  if (cfg.variant == EncoderVariant::CNN) {
    c.pooled = max_pool(c.conv);
  } else {
    const int p1 = std::min(instance.head_pos, instance.tail_pos);
    const int p2 = std::max(instance.head_pos, instance.tail_pos);
    c.pooled = piecewise_max_pool(c.conv, p1, p2);
  }
  if (diag) {
    ++diag->sentences;
    diag->empty_segments += c.pooled.empty_segments;
  }
  c.activated = tanh_act(c.pooled.values);
  if (training && cfg.dropout > 0.0) {
    if (!rng) throw std::logic_error("encode_sentence: training-mode dropout needs an rng");
    c.dropped = dropout(c.activated, cfg.dropout, *rng, true);
  } else {
    c.dropped = DropoutResult<Scalar>{c.activated, {}};
  }
  return c.dropped.output;
}

/// Accumulates filter and embedding gradients (looked-up rows only; the PAD
/// word row never receives gradient).
template <typename Scalar>
void encode_backward(const SentenceCache<Scalar>& c, const Vector<Scalar>& d_xq,
                     EncoderParams<Scalar>& params, const EncoderConfig& cfg) {
  const Vector<Scalar> d_act = dropout_backward(c.dropped, d_xq);
  const Vector<Scalar> d_pool = tanh_backward(c.activated, d_act);
  const Matrix<Scalar> d_conv = pool_backward(c.pooled, d_pool);
  const Matrix<Scalar> d_input = conv1d_backward(c.input, params.filters, cfg.window, d_conv);
  auto& table = params.table;
  const int dw = table.d_word();
  const int dp = table.d_pos();
  for (Index i = 0; i < d_input.rows(); ++i) {
    const int w = c.words[static_cast<std::size_t>(i)];
    if (w != Vocabulary::kPad) table.word.grad.row(w) += d_input.row(i).head(dw);
    table.pos_head.grad.row(c.head_index[static_cast<std::size_t>(i)]) += d_input.row(i).segment(dw, dp);
    table.pos_tail.grad.row(c.tail_index[static_cast<std::size_t>(i)]) += d_input.row(i).tail(dp);
  }
}

}  // namespace purex
