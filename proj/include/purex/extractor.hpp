#pragma once

// Bag-level relation extractor: POS-based, UNL-based and PU-combined score
// vectors and their three losses.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "purex/kernel.hpp"

namespace purex {

inline constexpr double kProbabilityClamp = 1e-7;

/// Split of a bag into the positive bag B+ and the unlabeled bag Bu, as
/// indices into the bag's sentences.
struct SelectionResult {
  std::vector<int> positive;
  std::vector<int> unlabeled;
};

template <typename Scalar>
struct ExtractorParams {
  Parameter<Scalar> W;  // positive head; the selector's reward reads this storage
  Parameter<Scalar> b;
  std::optional<Parameter<Scalar>> W_unl;  // absent for POS-only configurations
  std::optional<Parameter<Scalar>> b_unl;

  int n_relations() const { return static_cast<int>(W.rows()); }
  Index input_dim() const { return W.cols(); }
  bool has_unlabeled_head() const { return W_unl.has_value(); }
};

template <typename Scalar>
ExtractorParams<Scalar> init_extractor(int n_relations, Index enc_dim, bool unlabeled_head, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(n_relations + enc_dim));
  ExtractorParams<Scalar> p;
  p.W = Parameter<Scalar>(uniform_matrix<Scalar>(n_relations, enc_dim, bound, rng));
  p.b = Parameter<Scalar>(n_relations, 1);
  if (unlabeled_head) {
    p.W_unl = Parameter<Scalar>(uniform_matrix<Scalar>(n_relations, enc_dim, bound, rng));
    p.b_unl = Parameter<Scalar>(n_relations, 1);
  }
  return p;
}

/// Mean of the selected members; the zero vector for an empty selection.
template <typename Scalar>
Vector<Scalar> bag_embedding(const std::vector<Vector<Scalar>>& sentences,
                             const std::vector<int>& members, Index dim) {
  Vector<Scalar> sum = Vector<Scalar>::Zero(dim);
  for (int m : members) sum += sentences[static_cast<std::size_t>(m)];
  if (!members.empty()) sum /= static_cast<Scalar>(members.size());
  return sum;
}

template <typename Scalar>
Vector<Scalar> bag_embedding(const std::vector<Vector<Scalar>>& members, Index dim) {
  std::vector<int> all(members.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return bag_embedding(members, all, dim);
}

template <typename Scalar>
Vector<Scalar> pos_scores(const ExtractorParams<Scalar>& p, const Vector<Scalar>& emb_plus) {
  return linear(emb_plus, p.W, p.b);
}

template <typename Scalar>
Vector<Scalar> unl_scores(const ExtractorParams<Scalar>& p, const Vector<Scalar>& emb_unl) {
  if (!p.has_unlabeled_head()) throw ConfigError("unlabeled head is not allocated in this configuration");
  return linear(emb_unl, *p.W_unl, *p.b_unl);
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw ConfigError("combination weight alpha must lie in (0, 1), got " + std::to_string(alpha));
  }
}

template <typename Scalar>
Vector<Scalar> combine(const Vector<Scalar>& o_plus, const Vector<Scalar>& o_unl, double alpha) {
  check_alpha(alpha);
  const Scalar a = static_cast<Scalar>(alpha);
  return a * o_plus + (Scalar(1) - a) * o_unl;
}

template <typename Scalar>
struct BagScores {
  Vector<Scalar> o_plus;
  Vector<Scalar> o_unl;
  Vector<Scalar> o_comb;
  double alpha = 0.7;
};

// ---------------------------------------------------------------------------
// per-bag loss terms; each optionally writes d(term)/d(scores) into `grad`

/// -log P(r | scores).
template <typename Scalar>
double nll_term(const Vector<Scalar>& scores, int r, Vector<Scalar>* grad = nullptr) {
  const Vector<Scalar> lp = log_softmax(scores);
  if (grad) {
    *grad = lp.array().exp().matrix();
    (*grad)[r] -= Scalar(1);
  }
  return -static_cast<double>(lp[r]);
}

/// -log(1 - P(r | scores)) with P clamped to at most 1 - 1e-7.
template <typename Scalar>
double complement_term(const Vector<Scalar>& scores, int r, Vector<Scalar>* grad = nullptr) {
  const Vector<Scalar> probs = softmax(scores);
  const double p = static_cast<double>(probs[r]);
  const double limit = 1.0 - kProbabilityClamp;
  if (grad) {
    if (p >= limit) {
      *grad = Vector<Scalar>::Zero(scores.size());
    } else {
      // d/dz_k of -log(1 - p_r) = p_r (delta_rk - p_k) / (1 - p_r)
      const Scalar scale = static_cast<Scalar>(p / (1.0 - p));
      *grad = -scale * probs;
      (*grad)[r] += scale;
    }
  }
  return -std::log1p(-std::min(p, limit));
}

struct LossConfig {
  double beta = 0.1;
  bool use_unlabeled = true;     // PU-COMB-UNL drops this term
  bool use_bag = true;           // PU-COMB drops this term
  bool exclude_na_rival = false; // keep NA out of the r* candidates
};

/// Highest-probability relation other than `label` (lowest id on ties);
/// -1 when no candidate remains.
template <typename Scalar>
int rival_relation(const Vector<Scalar>& scores, int label, bool exclude_na) {
  int best = -1;
  for (int k = 0; k < static_cast<int>(scores.size()); ++k) {
    if (k == label || (exclude_na && k == 0)) continue;
    if (best < 0 || scores[k] > scores[best]) best = k;
  }
  return best;
}

/// -log P(r|B) - log(1 - P(r*|B)) on the combined scores.
template <typename Scalar>
double bag_term(const Vector<Scalar>& o_comb, int label, bool exclude_na, Vector<Scalar>* grad = nullptr,
                int* rival_out = nullptr) {
  // softmax is monotone, so the rival can be read off the scores directly
  const int rival = rival_relation(o_comb, label, exclude_na);
  if (rival_out) *rival_out = rival;
  double loss = nll_term(o_comb, label, grad);
  if (rival >= 0) {
    Vector<Scalar> g;
    loss += complement_term(o_comb, rival, grad ? &g : nullptr);
    if (grad) *grad += g;
  }
  return loss;
}

template <typename Scalar>
struct ScoredBag {
  BagScores<Scalar> scores;
  int label = 0;
  bool unlabeled_empty = false;  // skipped by loss_unl
};

template <typename Scalar>
double loss_pos(const std::vector<ScoredBag<Scalar>>& batch) {
  double total = 0.0;
  for (const auto& bag : batch) total += nll_term(bag.scores.o_plus, bag.label);
  return total;
}

template <typename Scalar>
double loss_unl(const std::vector<ScoredBag<Scalar>>& batch) {
  double total = 0.0;
  for (const auto& bag : batch) {
    if (!bag.unlabeled_empty) total += complement_term(bag.scores.o_unl, bag.label);
  }
  return total;
}

template <typename Scalar>
double loss_bag(const std::vector<ScoredBag<Scalar>>& batch, bool exclude_na_rival = false) {
  double total = 0.0;
  for (const auto& bag : batch) total += bag_term(bag.scores.o_comb, bag.label, exclude_na_rival);
  return total;
}

struct LossTerms {
  double l_pos = 0.0;
  double l_unl = 0.0;
  double l_bag = 0.0;
  double total = 0.0;
  double beta = 0.1;

  LossTerms& operator+=(const LossTerms& o) {
    l_pos += o.l_pos;
    l_unl += o.l_unl;
    l_bag += o.l_bag;
    total += o.total;
    return *this;
  }
};

template <typename Scalar>
struct ScoreGradients {
  Vector<Scalar> d_o_plus;
  Vector<Scalar> d_o_unl;  // empty when the unlabeled head takes no gradient
};

/// Loss terms of one bag under `cfg`, with gradients w.r.t. o_plus and o_unl
/// (the combined term is pushed back through the convex combination).
template <typename Scalar>
LossTerms bag_loss(const ScoredBag<Scalar>& bag, const LossConfig& cfg,
                   ScoreGradients<Scalar>* grads = nullptr) {
  LossTerms terms;
  terms.beta = cfg.beta;
  Vector<Scalar> g_pos;
  terms.l_pos = nll_term(bag.scores.o_plus, bag.label, grads ? &g_pos : nullptr);
  Vector<Scalar> g_unl;
  bool unl_grad = false;
  if (cfg.use_unlabeled && !bag.unlabeled_empty) {
    terms.l_unl = complement_term(bag.scores.o_unl, bag.label, grads ? &g_unl : nullptr);
    unl_grad = true;
  }
  Vector<Scalar> g_bag;
  if (cfg.use_bag) {
    terms.l_bag = bag_term(bag.scores.o_comb, bag.label, cfg.exclude_na_rival, grads ? &g_bag : nullptr);
  }
  terms.total = terms.l_pos + terms.l_unl + cfg.beta * terms.l_bag;
  if (grads) {
    grads->d_o_plus = g_pos;
    const Index n = bag.scores.o_plus.size();
    Vector<Scalar> d_unl = Vector<Scalar>::Zero(n);
    bool touched = unl_grad;
    if (unl_grad) d_unl += g_unl;
    if (cfg.use_bag) {
      const Scalar a = static_cast<Scalar>(bag.scores.alpha);
      const Scalar w = static_cast<Scalar>(cfg.beta);
      grads->d_o_plus += w * a * g_bag;
      d_unl += w * (Scalar(1) - a) * g_bag;
      touched = true;
    }
    grads->d_o_unl = touched ? d_unl : Vector<Scalar>();
  }
  return terms;
}

template <typename Scalar>
LossTerms total_loss(const std::vector<ScoredBag<Scalar>>& batch, const LossConfig& cfg) {
  LossTerms sum;
  sum.beta = cfg.beta;
  for (const auto& bag : batch) sum += bag_loss(bag, cfg);
  return sum;
}

// ---------------------------------------------------------------------------
// prediction

enum class ScoreHead {
  Combined,      // P(r|B) from alpha*o_plus + (1-alpha)*o_unl
  PositiveOnly,  // P(r|B+) from o_plus
};

struct Prediction {
  std::vector<double> scores;  // per relation, each from its own selection; not a distribution
  int best = 0;
};

/// For every relation k: split the bag under query k, score that split and
/// keep P(k | .). `split(k)` supplies the selection.
template <typename Scalar>
Prediction predict(const std::vector<Vector<Scalar>>& sentences,
                   const std::function<SelectionResult(int)>& split,
                   const ExtractorParams<Scalar>& params, double alpha, ScoreHead head) {
  if (head == ScoreHead::Combined) check_alpha(alpha);
  const int n_rel = params.n_relations();
  const Index dim = params.input_dim();
  Prediction out;
  out.scores.resize(static_cast<std::size_t>(n_rel));
  for (int k = 0; k < n_rel; ++k) {
    const SelectionResult sel = split(k);
    const Vector<Scalar> o_plus = pos_scores(params, bag_embedding(sentences, sel.positive, dim));
    Vector<Scalar> scores = o_plus;
    if (head == ScoreHead::Combined) {
      scores = combine(o_plus, unl_scores(params, bag_embedding(sentences, sel.unlabeled, dim)), alpha);
    }
    out.scores[static_cast<std::size_t>(k)] = static_cast<double>(softmax(scores)[k]);
    if (out.scores[static_cast<std::size_t>(k)] > out.scores[static_cast<std::size_t>(out.best)]) out.best = k;
  }
  return out;
}

}  // namespace purex
