#pragma once

// Q-learning sentence selector. For a query relation it walks a bag in order
// and labels each sentence positive or unlabeled; the episode reward is
// P(r | B+) under the extractor's positive head.

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "purex/extractor.hpp"
#include "purex/kernel.hpp"

namespace purex {

enum class Action : int { Positive = 0, Unlabeled = 1 };

inline const char* to_string(Action a) { return a == Action::Positive ? "positive" : "unlabeled"; }

struct SelectorConfig {
  int hidden = 128;
  int d_rel = 0;  // 0: same as the encoder output dimension
  bool use_relation_embedding = true;  // false gives the Baseline-SR state
  std::size_t replay_capacity = 10000;
  std::size_t minibatch = 32;
  double lr = 0.001;
  bool shuffle_within_bag = false;
};

template <typename Scalar>
struct QNet {
  Parameter<Scalar> W1, b1;  // hidden x state
  Parameter<Scalar> W2, b2;  // 2 x hidden
};

template <typename Scalar>
struct Selector {
  SelectorConfig config;
  Parameter<Scalar> relation;  // N_r x d_rel; unused (0 columns) when the state omits it
  QNet<Scalar> net;
  Index enc_dim = 0;

  Index d_rel() const { return relation.cols(); }
  Index state_dim() const { return 2 * enc_dim + d_rel(); }
};

inline constexpr double kRelationInitBound = 0.25;

template <typename Scalar>
Selector<Scalar> init_selector(const SelectorConfig& cfg, int n_relations, Index enc_dim, Rng& rng) {
  Selector<Scalar> s;
  s.config = cfg;
  s.enc_dim = enc_dim;
  const Index d_rel = cfg.use_relation_embedding ? (cfg.d_rel > 0 ? cfg.d_rel : enc_dim) : 0;
  s.relation = Parameter<Scalar>(uniform_matrix<Scalar>(n_relations, d_rel, kRelationInitBound, rng));
  const Index in = s.state_dim();
  const double b1 = std::sqrt(6.0 / static_cast<double>(in + cfg.hidden));
  const double b2 = std::sqrt(6.0 / static_cast<double>(cfg.hidden + 2));
  s.net.W1 = Parameter<Scalar>(uniform_matrix<Scalar>(cfg.hidden, in, b1, rng));
  s.net.b1 = Parameter<Scalar>(cfg.hidden, 1);
  s.net.W2 = Parameter<Scalar>(uniform_matrix<Scalar>(2, cfg.hidden, b2, rng));
  s.net.b2 = Parameter<Scalar>(2, 1);
  return s;
}


/// [x_q, r_e, x_pos]; r_e is empty without relation embeddings.
template <typename Scalar>
struct StateRep {
  Vector<Scalar> x_q;
  Vector<Scalar> r_e;
  Vector<Scalar> x_pos;

  Index size() const { return x_q.size() + r_e.size() + x_pos.size(); }
  Vector<Scalar> concat() const {
    Vector<Scalar> out(size());
    out << x_q, r_e, x_pos;
    return out;
  }
};

template <typename Scalar>
Vector<Scalar> relation_row(const Selector<Scalar>& sel, int relation_id) {
  if (relation_id < 0 || relation_id >= sel.relation.rows()) {
    throw ConfigError("relation id " + std::to_string(relation_id) + " outside inventory of " +
                      std::to_string(sel.relation.rows()));
  }
  return sel.relation.value.row(relation_id).transpose();
}

template <typename Scalar>
StateRep<Scalar> build_state(const Selector<Scalar>& sel, const Vector<Scalar>& x_q, int relation_id,
                             const std::vector<Vector<Scalar>>& selected) {
  StateRep<Scalar> s;
  s.x_q = x_q;
  s.r_e = relation_row(sel, relation_id);
  s.x_pos = Vector<Scalar>::Zero(x_q.size());
  for (const auto& v : selected) s.x_pos += v;
  if (!selected.empty()) s.x_pos /= static_cast<Scalar>(selected.size());
  return s;
}

template <typename Scalar>
Vector<Scalar> q_values(const QNet<Scalar>& net, const Vector<Scalar>& state) {
  const Vector<Scalar> hidden = tanh_act(linear(state, net.W1, net.b1));
  return linear(hidden, net.W2, net.b2);
}

struct ActMode {
  enum Kind { Greedy, Epsilon } kind = Greedy;
  double epsilon = 0.0;

  static ActMode greedy() { return {Greedy, 0.0}; }
  static ActMode explore(double eps) { return {Epsilon, eps}; }
};

/// Greedy picks positive only when Q[positive] > Q[unlabeled]; ties go to
/// unlabeled. Epsilon mode replaces the greedy choice by a fair coin with
/// probability epsilon.
template <typename Scalar>
Action act(const Vector<Scalar>& q, const ActMode& mode, Rng* rng = nullptr) {
  if (mode.kind == ActMode::Epsilon && mode.epsilon > 0.0) {
    if (!rng) throw std::logic_error("act: epsilon mode needs an rng");
    if (rng->bernoulli(mode.epsilon)) return rng->bernoulli(0.5) ? Action::Positive : Action::Unlabeled;
  }
  return q[0] > q[1] ? Action::Positive : Action::Unlabeled;
}

template <typename Scalar>
struct Transition {
  Vector<Scalar> x_q;
  Vector<Scalar> x_pos;
  int relation = 0;
  Action action = Action::Unlabeled;
  double target = 0.0;
};

template <typename Scalar>
struct Decision {
  int sentence = 0;
  Action action = Action::Unlabeled;
  Vector<Scalar> q;
};

template <typename Scalar>
struct Episode {
  SelectionResult split;
  std::vector<Transition<Scalar>> transitions;
  std::vector<Decision<Scalar>> decisions;  // in visiting order
};

/// Visits sentences in `order` (stored order when empty). `decide` maps the
/// state to an action and may report the Q-values it used.
template <typename Scalar>
Episode<Scalar> select_bag(const std::vector<Vector<Scalar>>& sentences, int relation_id,
                           const Selector<Scalar>& sel,
                           const std::function<Action(const StateRep<Scalar>&, Vector<Scalar>*)>& decide,
                           const std::vector<int>& order = {}) {
  Episode<Scalar> ep;
  const Index dim = sentences.empty() ? sel.enc_dim : sentences.front().size();
  Vector<Scalar> sum = Vector<Scalar>::Zero(dim);
  int count = 0;
  const Vector<Scalar> r_e = relation_row(sel, relation_id);
  for (std::size_t step = 0; step < sentences.size(); ++step) {
    const int idx = order.empty() ? static_cast<int>(step) : order[step];
    StateRep<Scalar> state;
    state.x_q = sentences[static_cast<std::size_t>(idx)];
    state.r_e = r_e;
    state.x_pos = count > 0 ? Vector<Scalar>(sum / static_cast<Scalar>(count)) : Vector<Scalar>::Zero(dim);
    Vector<Scalar> q;
    const Action a = decide(state, &q);
    if (a == Action::Positive) {
      ep.split.positive.push_back(idx);
      sum += state.x_q;
      ++count;
    } else {
      ep.split.unlabeled.push_back(idx);
    }
    ep.transitions.push_back({state.x_q, state.x_pos, relation_id, a, 0.0});
    ep.decisions.push_back({idx, a, q});
  }
  return ep;
}

/// Q-network policy in the given mode.
template <typename Scalar>
Episode<Scalar> select_bag(const std::vector<Vector<Scalar>>& sentences, int relation_id,
                           const Selector<Scalar>& sel, const ActMode& mode, Rng* rng = nullptr,
                           const std::vector<int>& order = {}) {
  return select_bag<Scalar>(
      sentences, relation_id, sel,
      [&](const StateRep<Scalar>& s, Vector<Scalar>* q_out) {
        Vector<Scalar> q = q_values(sel.net, s.concat());
        const Action a = act(q, mode, rng);
        if (q_out) *q_out = std::move(q);
        return a;
      },
      order);
}

/// R(r, B) = P(r | B+) through the extractor's (W, b); an empty B+ is scored
/// on the zero embedding.
template <typename Scalar>
double episode_reward(const ExtractorParams<Scalar>& extractor, const std::vector<Vector<Scalar>>& sentences,
                      const std::vector<int>& positive, int relation_id) {
  const Vector<Scalar> o_plus = pos_scores(extractor, bag_embedding(sentences, positive, extractor.input_dim()));
  return static_cast<double>(softmax(o_plus)[relation_id]);
}

/// Terminal-only reward with gamma = 1: every step's target is the episode reward.
template <typename Scalar>
void assign_episode_reward(std::vector<Transition<Scalar>>& transitions, double reward) {
  for (auto& t : transitions) t.target = reward;
}

template <typename Scalar>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay capacity must be positive");
  }

  void push(Transition<Scalar> t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(t));
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Transition<Scalar>>& items() const { return items_; }
  void clear() { items_.clear(); }

  /// `n` distinct transitions (partial Fisher-Yates over indices).
  std::vector<const Transition<Scalar>*> sample(std::size_t n, Rng& rng) const {
    if (n > items_.size()) throw std::logic_error("replay sample larger than buffer");
    std::vector<std::size_t> idx(items_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<const Transition<Scalar>*> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = i + rng.index(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(&items_[idx[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::deque<Transition<Scalar>> items_;
};

/// Mean squared error between Q(state)[action] and the stored target over
/// `batch`, with gradients into the Q-network and the relation embeddings.
template <typename Scalar>
double q_loss(Selector<Scalar>& sel, const std::vector<const Transition<Scalar>*>& batch, bool backward) {
  const Index n = static_cast<Index>(batch.size());
  const Index enc = sel.enc_dim;
  const Index d_rel = sel.d_rel();
  Matrix<Scalar> states(n, sel.state_dim());
  for (Index i = 0; i < n; ++i) {
    const auto& t = *batch[static_cast<std::size_t>(i)];
    states.row(i).head(enc) = t.x_q.transpose();
    if (d_rel > 0) states.row(i).segment(enc, d_rel) = sel.relation.value.row(t.relation);
    states.row(i).tail(enc) = t.x_pos.transpose();
  }
  const Matrix<Scalar> hidden = linear_rows(states, sel.net.W1, sel.net.b1).array().tanh().matrix();
  const Matrix<Scalar> q = linear_rows(hidden, sel.net.W2, sel.net.b2);
  double loss = 0.0;
  Matrix<Scalar> d_q = Matrix<Scalar>::Zero(n, 2);
  for (Index i = 0; i < n; ++i) {
    const auto& t = *batch[static_cast<std::size_t>(i)];
    const int a = static_cast<int>(t.action);
    const double diff = static_cast<double>(q(i, a)) - t.target;
    loss += diff * diff;
    d_q(i, a) = static_cast<Scalar>(2.0 * diff / static_cast<double>(n));
  }
  loss /= static_cast<double>(n);
  if (backward) {
    const Matrix<Scalar> d_hidden = linear_rows_backward(hidden, sel.net.W2, sel.net.b2, d_q);
    const Matrix<Scalar> d_pre = (d_hidden.array() * (Scalar(1) - hidden.array().square())).matrix();
    const Matrix<Scalar> d_states = linear_rows_backward(states, sel.net.W1, sel.net.b1, d_pre);
    if (d_rel > 0) {
      for (Index i = 0; i < n; ++i) {
        sel.relation.grad.row(batch[static_cast<std::size_t>(i)]->relation) +=
            d_states.row(i).segment(enc, d_rel);
      }
    }
  }
  return loss;
}

/// One replay minibatch and one Adam step on the Q-network and relation
/// embeddings. Returns nullopt (no update) while the buffer holds fewer than
/// `minibatch` transitions.
template <typename Scalar>
std::optional<double> q_update(Selector<Scalar>& sel, const ReplayBuffer<Scalar>& buffer,
                               std::size_t minibatch, const AdamConfig& adam, Rng& rng) {
  if (minibatch == 0 || buffer.size() < minibatch) return std::nullopt;
  const auto batch = buffer.sample(minibatch, rng);
  const double loss = q_loss(sel, batch, true);
  if (!std::isfinite(loss)) throw NumericError("selector Q loss is not finite");
  adam_step(sel.net.W1, adam);
  adam_step(sel.net.b1, adam);
  adam_step(sel.net.W2, adam);
  adam_step(sel.net.b2, adam);
  if (sel.d_rel() > 0) adam_step(sel.relation, adam);
  return loss;
}

}  // namespace purex
