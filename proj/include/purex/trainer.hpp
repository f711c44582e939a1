#pragma once

// Warm start and joint training of the selector and extractor, plus the
// checkpoint mapping of the complete training state.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "purex/checkpoint.hpp"
#include "purex/config.hpp"
#include "purex/corpus.hpp"
#include "purex/model.hpp"

namespace purex {

struct EpochLog {
  int epoch = 0;
  std::string phase;  // "warm" or "joint"
  // per-bag means over the epoch
  double l_pos = 0.0;
  double l_unl = 0.0;
  double l_bag = 0.0;
  double total = 0.0;
  double mean_reward = 0.0;
  double mean_q_loss = 0.0;
  long long q_updates = 0;
  double epsilon = 0.0;  // value at the end of the epoch
  double val_loss = 0.0;
  bool best = false;
  long long empty_segments = 0;
};

nlohmann::json to_json(const EpochLog& log);
EpochLog epoch_log_from_json(const nlohmann::json& doc);

inline constexpr std::uint64_t kSplitStream = 0x5eed0001;
inline constexpr std::uint64_t kTrainStream = 0x5eed0002;
inline constexpr std::uint64_t kInitStream = 0x5eed0003;

template <typename Scalar>
class Trainer {
 public:
  Trainer(TrainConfig cfg, Model<Scalar> model, std::vector<Bag> bags)
      : cfg_(std::move(cfg)),
        model_(std::move(model)),
        rng_(Rng(cfg_.seed).split(kTrainStream)),
        buffer_(cfg_.selector.replay_capacity) {
    cfg_.validate();
    split_validation(std::move(bags));
  }

  const TrainConfig& config() const { return cfg_; }
  int epoch() const { return epoch_; }
  bool finished() const { return epoch_ >= cfg_.epochs; }
  const Model<Scalar>& model() const { return model_; }
  Model<Scalar>& model() { return model_; }
  /// Model of the epoch with the lowest validation loss in the latest phase.
  const Model<Scalar>& best_model() const { return best_ ? *best_ : model_; }
  int best_epoch() const { return best_epoch_; }
  const std::vector<EpochLog>& history() const { return history_; }
  const ReplayBuffer<Scalar>& buffer() const { return buffer_; }
  const Rng& rng() const { return rng_; }
  const std::vector<Bag>& train_bags() const { return train_; }
  const std::vector<Bag>& validation_bags() const { return validation_; }

  bool in_warm_start() const { return epoch_ < cfg_.warm_start_epochs || !cfg_.uses_selector(); }

  /// Runs the warm-start epochs that remain (positive loss on whole bags).
  void warm_start() {
    while (!finished() && epoch_ < cfg_.warm_start_epochs) run_epoch();
  }

  /// Trains until the epoch budget is spent, or until `stop_at` epochs are done.
  void train(int stop_at = -1) {
    while (!finished() && (stop_at < 0 || epoch_ < stop_at)) run_epoch();
  }

  const EpochLog& run_epoch() {
    EpochLog log;
    log.epoch = epoch_;
    const bool warm = in_warm_start();
    log.phase = epoch_ < cfg_.warm_start_epochs ? "warm" : "joint";
    if (!warm && !phase_is_joint_) {
      best_.reset();
      best_val_.reset();
      phase_is_joint_ = true;
    }

    std::vector<std::size_t> order(train_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng_.shuffle(order);

    const std::size_t batch = static_cast<std::size_t>(cfg_.batch_size);
    const std::size_t n_batches = (order.size() + batch - 1) / batch;
    LossTerms epoch_terms;
    double reward_sum = 0.0;
    long long episodes = 0;
    double q_loss_sum = 0.0;
    EncoderDiagnostics diag;
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t begin = bi * batch;
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<const Bag*> bags;
      for (std::size_t i = begin; i < end; ++i) bags.push_back(&train_[order[i]]);

      if (warm) {
        epoch_terms += extractor_step(bags, nullptr, warm_loss(), diag);
        continue;
      }
      log.epsilon = epsilon_at(static_cast<double>(bi + 1) / static_cast<double>(n_batches));
      std::vector<std::vector<Vector<Scalar>>> sentences;
      sentences.reserve(bags.size());
      for (const Bag* bag : bags) {
        sentences.push_back(model_.encode_bag(*bag));
        const double reward = run_episode(sentences.back(), bag->distant_label, log, q_loss_sum);
        reward_sum += reward;
        ++episodes;
      }
      epoch_terms += extractor_step(bags, &sentences, cfg_.loss_config(), diag);
    }

    const double n_train = std::max<double>(1.0, static_cast<double>(train_.size()));
    log.l_pos = epoch_terms.l_pos / n_train;
    log.l_unl = epoch_terms.l_unl / n_train;
    log.l_bag = epoch_terms.l_bag / n_train;
    log.total = epoch_terms.total / n_train;
    log.mean_reward = episodes > 0 ? reward_sum / static_cast<double>(episodes) : 0.0;
    log.mean_q_loss = log.q_updates > 0 ? q_loss_sum / static_cast<double>(log.q_updates) : 0.0;
    log.empty_segments = diag.empty_segments;
    log.val_loss = validation_loss(warm);
    if (!best_val_ || log.val_loss < *best_val_ || validation_.empty()) {
      best_val_ = log.val_loss;
      best_ = model_;
      best_epoch_ = epoch_;
      log.best = true;
    }
    history_.push_back(log);
    ++epoch_;
    return history_.back();
  }

  /// Mean per-bag loss on the validation slice under the current phase's
  /// objective, greedy selections and no dropout.
  double validation_loss(bool warm) {
    if (validation_.empty()) return 0.0;
    double sum = 0.0;
    for (const Bag& bag : validation_) {
      const auto xs = model_.encode_bag(bag);
      sum += bag_objective(xs, xs, bag.distant_label, warm, nullptr).total;
    }
    return sum / static_cast<double>(validation_.size());
  }

  /// Training objective of one bag without dropout. Splits are chosen on
  /// `split_xs` when given (holding selections fixed), else on the bag's own
  /// embeddings. With `backward` every parameter accumulates its gradient.
  LossTerms eval_objective(const Bag& bag, bool warm, const std::vector<Vector<Scalar>>* split_xs,
                           bool backward) {
    std::vector<SentenceCache<Scalar>> caches(bag.instances.size());
    std::vector<Vector<Scalar>> xs;
    for (std::size_t j = 0; j < bag.instances.size(); ++j) {
      xs.push_back(encode_sentence<Scalar>(bag.instances[j], model_.encoder, cfg_.encoder, false, nullptr,
                                           &caches[j]));
    }
    const Index dim = model_.extractor.input_dim();
    std::vector<Vector<Scalar>> d_x(xs.size(), Vector<Scalar>::Zero(dim));
    const LossTerms terms =
        bag_objective(split_xs ? *split_xs : xs, xs, bag.distant_label, warm, backward ? &d_x : nullptr);
    if (backward) {
      for (std::size_t j = 0; j < xs.size(); ++j) encode_backward(caches[j], d_x[j], model_.encoder, cfg_.encoder);
    }
    return terms;
  }

  // -- checkpointing -------------------------------------------------------

  Checkpoint to_checkpoint(const Vocabulary& vocab, const RelationInventory& relations) const {
    Checkpoint ckpt;
    nlohmann::json steps = nlohmann::json::object();
    put_model(ckpt, model_, "param/", true, &steps);
    if (best_) put_model(ckpt, *best_, "best/", false);
    const std::size_t n = buffer_.size();
    if (n > 0) {
      const Index enc = model_.config.encoder.output_dim();
      Matrix<Scalar> xq(static_cast<Index>(n), enc), xpos(static_cast<Index>(n), enc);
      Matrix<double> meta(static_cast<Index>(n), 3);
      Index row = 0;
      for (const auto& t : buffer_.items()) {
        xq.row(row) = t.x_q.transpose();
        xpos.row(row) = t.x_pos.transpose();
        meta(row, 0) = t.relation;
        meta(row, 1) = static_cast<int>(t.action);
        meta(row, 2) = t.target;
        ++row;
      }
      ckpt.put("replay/x_q", xq);
      ckpt.put("replay/x_pos", xpos);
      ckpt.put("replay/meta", meta);
    }
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : history_) history.push_back(to_json(h));
    ckpt.header = {
        {"format", "purex-checkpoint"},
        {"scalar", sizeof(Scalar) == 4 ? "f32" : "f64"},
        {"config", to_json(cfg_)},
        {"relations", relations.names()},
        {"vocabulary", vocab.tokens()},
        {"state",
         {{"epoch", epoch_},
          {"rng", rng_.serialize()},
          {"best_epoch", best_epoch_},
          {"best_val", best_val_ ? nlohmann::json(*best_val_) : nlohmann::json(nullptr)},
          {"joint_phase", phase_is_joint_},
          {"history", history},
          {"step_counts", steps},
          {"replay_size", n}}},
    };
    return ckpt;
  }

  /// Training state from a checkpoint; `bags` must be the training bags the
  /// run started with.
  static Trainer restore(const Checkpoint& ckpt, std::vector<Bag> bags) {
    const TrainConfig cfg = train_config_from_json(ckpt.header.at("config"));
    const auto& state = ckpt.header.at("state");
    const auto& steps = state.at("step_counts");
    Trainer t(cfg, get_model<Scalar>(ckpt, cfg, "param/", true, &steps), std::move(bags));
    t.epoch_ = state.at("epoch").get<int>();
    t.rng_ = Rng::deserialize(state.at("rng").get<std::string>());
    t.best_epoch_ = state.at("best_epoch").get<int>();
    if (!state.at("best_val").is_null()) t.best_val_ = state.at("best_val").get<double>();
    t.phase_is_joint_ = state.at("joint_phase").get<bool>();
    if (ckpt.find("best/encoder/word")) t.best_ = get_model<Scalar>(ckpt, cfg, "best/", false);
    for (const auto& h : state.at("history")) t.history_.push_back(epoch_log_from_json(h));
    const auto n = state.at("replay_size").get<std::size_t>();
    if (n > 0) {
      const Matrix<Scalar> xq = ckpt.get<Scalar>("replay/x_q");
      const Matrix<Scalar> xpos = ckpt.get<Scalar>("replay/x_pos");
      const Matrix<double> meta = ckpt.get<double>("replay/meta");
      if (static_cast<std::size_t>(xq.rows()) != n || xpos.rows() != xq.rows() || meta.rows() != xq.rows()) {
        throw DataError("checkpoint replay buffer is inconsistent");
      }
      for (Index i = 0; i < xq.rows(); ++i) {
        Transition<Scalar> tr;
        tr.x_q = xq.row(i).transpose();
        tr.x_pos = xpos.row(i).transpose();
        tr.relation = static_cast<int>(meta(i, 0));
        tr.action = static_cast<Action>(static_cast<int>(meta(i, 1)));
        tr.target = meta(i, 2);
        t.buffer_.push(std::move(tr));
      }
    }
    return t;
  }

 private:
  static LossConfig warm_loss() {
    LossConfig cfg;
    cfg.use_unlabeled = false;
    cfg.use_bag = false;
    return cfg;
  }

  static SelectionResult all_positive(std::size_t n) {
    SelectionResult s;
    for (std::size_t i = 0; i < n; ++i) s.positive.push_back(static_cast<int>(i));
    return s;
  }

  // One epsilon-greedy episode under `query`; its transitions enter the
  // replay buffer and one Q update follows. Returns the episode reward.
  double run_episode(const std::vector<Vector<Scalar>>& sentences, int query, EpochLog& log, double& q_loss_sum) {
    const auto visit = visiting_order(sentences.size());
    Episode<Scalar> ep = select_bag(sentences, query, *model_.selector, ActMode::explore(log.epsilon), &rng_, visit);
    const double reward = episode_reward(model_.extractor, sentences, ep.split.positive, query);
    assign_episode_reward(ep.transitions, reward);
    for (auto& t : ep.transitions) buffer_.push(std::move(t));
    const auto q_loss = q_update(*model_.selector, buffer_, cfg_.selector.minibatch, selector_adam(), rng_);
    if (q_loss) {
      q_loss_sum += *q_loss;
      ++log.q_updates;
    }
    return reward;
  }

  AdamConfig selector_adam() const { return AdamConfig{cfg_.selector.lr, 0.9, 0.999, 1e-8}; }

  std::vector<int> visiting_order(std::size_t n) {
    if (!cfg_.selector.shuffle_within_bag) return {};
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
    rng_.shuffle(order);
    return order;
  }

  // Linear anneal from epsilon_start to epsilon_end over the first half of
  // the joint epochs. `fraction` is progress through the current epoch.
  double epsilon_at(double fraction) const {
    const double joint_epochs = std::max(1, cfg_.epochs - cfg_.warm_start_epochs);
    const double done = static_cast<double>(epoch_ - cfg_.warm_start_epochs) + fraction;
    const double progress = std::min(1.0, done / (0.5 * joint_epochs));
    return cfg_.epsilon_start + (cfg_.epsilon_end - cfg_.epsilon_start) * progress;
  }

  ScoredBag<Scalar> score_split(const std::vector<Vector<Scalar>>& xs, const SelectionResult& sel,
                                int label) const {
    const Index dim = model_.extractor.input_dim();
    ScoredBag<Scalar> bag;
    bag.label = label;
    bag.unlabeled_empty = sel.unlabeled.empty();
    bag.scores.alpha = cfg_.alpha;
    bag.scores.o_plus = pos_scores(model_.extractor, bag_embedding(xs, sel.positive, dim));
    if (model_.extractor.has_unlabeled_head()) {
      bag.scores.o_unl = unl_scores(model_.extractor, bag_embedding(xs, sel.unlabeled, dim));
      bag.scores.o_comb = combine(bag.scores.o_plus, bag.scores.o_unl, cfg_.alpha);
    } else {
      bag.scores.o_comb = bag.scores.o_plus;
    }
    return bag;
  }

  // Per-bag objective. Splits are chosen on `split_xs` and scored on `xs`;
  // with `d_x`, gradients w.r.t. the sentence embeddings accumulate there and
  // the extractor parameters collect theirs.
  LossTerms bag_objective(const std::vector<Vector<Scalar>>& split_xs, const std::vector<Vector<Scalar>>& xs,
                          int label, bool warm, std::vector<Vector<Scalar>>* d_x) {
    const LossConfig loss = warm ? warm_loss() : cfg_.loss_config();
    const SelectionResult sel = warm ? all_positive(xs.size()) : model_.split(split_xs, label);
    const ScoredBag<Scalar> scored = score_split(xs, sel, label);
    const bool per_query = loss.use_bag && cfg_.rival_per_query;
    LossConfig own = loss;
    if (per_query) own.use_bag = false;
    ScoreGradients<Scalar> grads;
    LossTerms terms = bag_loss(scored, own, d_x ? &grads : nullptr);
    if (per_query) {
      const Scalar a = static_cast<Scalar>(cfg_.alpha);
      const Scalar w = static_cast<Scalar>(cfg_.beta);
      Vector<Scalar> g_label;
      terms.l_bag = nll_term(scored.scores.o_comb, label, d_x ? &g_label : nullptr);
      if (d_x) {
        grads.d_o_plus += w * a * g_label;
        if (grads.d_o_unl.size() == 0) grads.d_o_unl = Vector<Scalar>::Zero(g_label.size());
        grads.d_o_unl += w * (Scalar(1) - a) * g_label;
      }
      int rival = -1;
      double rival_p = -1.0;
      SelectionResult rival_sel;
      ScoredBag<Scalar> rival_scored;
      for (int k = 0; k < model_.n_relations(); ++k) {
        if (k == label || (cfg_.exclude_na_rival && k == 0)) continue;
        SelectionResult sk = model_.split(split_xs, k);
        ScoredBag<Scalar> bk = score_split(xs, sk, k);
        const double p = static_cast<double>(softmax(bk.scores.o_comb)[k]);
        if (p > rival_p) {
          rival = k;
          rival_p = p;
          rival_sel = std::move(sk);
          rival_scored = std::move(bk);
        }
      }
      if (rival >= 0) {
        Vector<Scalar> g_rival;
        terms.l_bag += complement_term(rival_scored.scores.o_comb, rival, d_x ? &g_rival : nullptr);
        if (d_x) {
          backprop_split(xs, rival_sel, Vector<Scalar>(w * a * g_rival),
                         Vector<Scalar>(w * (Scalar(1) - a) * g_rival), *d_x);
        }
      }
      terms.total += cfg_.beta * terms.l_bag;
    }
    if (d_x) backprop_split(xs, sel, grads.d_o_plus, grads.d_o_unl, *d_x);
    return terms;
  }

  // Pushes score gradients of one split back through the extractor heads and
  // the bag means onto the member sentences.
  void backprop_split(const std::vector<Vector<Scalar>>& xs, const SelectionResult& sel,
                      const Vector<Scalar>& d_o_plus, const Vector<Scalar>& d_o_unl,
                      std::vector<Vector<Scalar>>& d_x) {
    ExtractorParams<Scalar>& ex = model_.extractor;
    const Index dim = ex.input_dim();
    const Vector<Scalar> emb_plus = bag_embedding(xs, sel.positive, dim);
    const Vector<Scalar> d_plus = linear_backward(emb_plus, ex.W, ex.b, d_o_plus);
    for (int j : sel.positive) d_x[static_cast<std::size_t>(j)] += d_plus / static_cast<Scalar>(sel.positive.size());
    if (d_o_unl.size() > 0 && ex.W_unl) {
      const Vector<Scalar> emb_unl = bag_embedding(xs, sel.unlabeled, dim);
      const Vector<Scalar> d_unl = linear_backward(emb_unl, *ex.W_unl, *ex.b_unl, d_o_unl);
      for (int j : sel.unlabeled) d_x[static_cast<std::size_t>(j)] += d_unl / static_cast<Scalar>(sel.unlabeled.size());
    }
  }

  // One optimizer step of the extractor (and encoder) on a batch. Splits come
  // from the greedy selector over `eval_sentences` when given, otherwise all
  // sentences are positive.
  LossTerms extractor_step(const std::vector<const Bag*>& bags,
                           const std::vector<std::vector<Vector<Scalar>>>* eval_sentences,
                           const LossConfig& loss, EncoderDiagnostics& diag) {
    LossTerms sum;
    ExtractorParams<Scalar>& ex = model_.extractor;
    const Index dim = ex.input_dim();
    for (std::size_t b = 0; b < bags.size(); ++b) {
      const Bag& bag = *bags[b];
      std::vector<SentenceCache<Scalar>> caches(bag.instances.size());
      std::vector<Vector<Scalar>> xs;
      xs.reserve(bag.instances.size());
      for (std::size_t j = 0; j < bag.instances.size(); ++j) {
        xs.push_back(encode_sentence(bag.instances[j], model_.encoder, cfg_.encoder, true, &rng_,
                                     &caches[j], &diag));
      }
      std::vector<Vector<Scalar>> d_x(xs.size(), Vector<Scalar>::Zero(dim));
      const LossTerms terms =
          bag_objective(eval_sentences ? (*eval_sentences)[b] : xs, xs, bag.distant_label, !eval_sentences, &d_x);
      if (!std::isfinite(terms.total)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch_));
      }
      sum += terms;
      for (std::size_t j = 0; j < xs.size(); ++j) encode_backward(caches[j], d_x[j], model_.encoder, cfg_.encoder);
    }
    const AdamConfig adam = cfg_.adam();
    adam_step(model_.encoder.table.word, adam);
    adam_step(model_.encoder.table.pos_head, adam);
    adam_step(model_.encoder.table.pos_tail, adam);
    adam_step(model_.encoder.filters, adam);
    adam_step(ex.W, adam);
    adam_step(ex.b, adam);
    if (ex.W_unl && (loss.use_unlabeled || loss.use_bag)) {
      adam_step(*ex.W_unl, adam);
      adam_step(*ex.b_unl, adam);
    }
    return sum;
  }

  void split_validation(std::vector<Bag> bags) {
    std::vector<std::size_t> idx(bags.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng split = Rng(cfg_.seed).split(kSplitStream);
    split.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(cfg_.validation_fraction * static_cast<double>(bags.size()));
    std::vector<bool> is_val(bags.size(), false);
    for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;
    for (std::size_t i = 0; i < bags.size(); ++i) {
      (is_val[i] ? validation_ : train_).push_back(std::move(bags[i]));
    }
  }

  TrainConfig cfg_;
  Model<Scalar> model_;
  Rng rng_;
  ReplayBuffer<Scalar> buffer_;
  std::vector<Bag> train_;
  std::vector<Bag> validation_;
  int epoch_ = 0;
  bool phase_is_joint_ = false;
  std::optional<Model<Scalar>> best_;
  std::optional<double> best_val_;
  int best_epoch_ = -1;
  std::vector<EpochLog> history_;
};

/// Fresh model for `cfg` on a vocabulary of `vocab_size` words: random
/// embeddings unless an embedding file is given.
template <typename Scalar>
Model<Scalar> build_model(const TrainConfig& cfg, const Vocabulary& vocab, int n_relations,
                          const std::string& embeddings_path = {}, EmbeddingLoadReport* report = nullptr) {
  Rng rng = Rng(cfg.seed).split(kInitStream);
  EmbeddingTable<Scalar> table =
      embeddings_path.empty()
          ? random_embeddings<Scalar>(vocab.size(), cfg.encoder.d_word, cfg.encoder.d_pos, cfg.encoder.pos_clip, rng)
          : load_embeddings<Scalar>(embeddings_path, vocab, cfg.encoder.d_word, cfg.encoder.d_pos,
                                    cfg.encoder.pos_clip, rng, report);
  return init_model<Scalar>(cfg, std::move(table), n_relations, rng);
}

Vocabulary checkpoint_vocabulary(const Checkpoint& ckpt);
RelationInventory checkpoint_relations(const Checkpoint& ckpt);
TrainConfig checkpoint_config(const Checkpoint& ckpt);

/// The model to evaluate: the best-epoch snapshot when present.
template <typename Scalar>
Model<Scalar> checkpoint_model(const Checkpoint& ckpt) {
  const TrainConfig cfg = checkpoint_config(ckpt);
  return get_model<Scalar>(ckpt, cfg, ckpt.find("best/encoder/word") ? "best/" : "param/", false);
}

}  // namespace purex
