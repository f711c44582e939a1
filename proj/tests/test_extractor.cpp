#include <cmath>

#include "doctest.h"
#include "purex/extractor.hpp"

using namespace purex;
using M = Matrix<double>;
using V = Vector<double>;

namespace {

ScoredBag<double> scored(const V& o_plus, const V& o_unl, int label, double alpha = 0.7) {
  ScoredBag<double> b;
  b.label = label;
  b.scores.o_plus = o_plus;
  b.scores.o_unl = o_unl;
  b.scores.alpha = alpha;
  b.scores.o_comb = combine(o_plus, o_unl, alpha);
  return b;
}

ExtractorParams<double> params(const M& W, const V& b, const M& Wu, const V& bu) {
  ExtractorParams<double> p;
  p.W = Parameter<double>(W);
  p.b = Parameter<double>(M(b));
  p.W_unl = Parameter<double>(Wu);
  p.b_unl = Parameter<double>(M(bu));
  return p;
}

// -log softmax(s)[r], evaluated directly in long double.
double direct_nll(const V& s, int r) {
  long double z = 0;
  for (Index i = 0; i < s.size(); ++i) z += std::exp(static_cast<long double>(s[i]));
  return static_cast<double>(-std::log(std::exp(static_cast<long double>(s[r])) / z));
}

double direct_p(const V& s, int r) { return std::exp(-direct_nll(s, r)); }

}  // namespace

TEST_CASE("bag_embedding") {
  const V s{{1, -2, 3}};
  CHECK(bag_embedding<double>({s}, 3) == s);
  CHECK(bag_embedding<double>({s, V(-s)}, 3).isZero());
  CHECK(bag_embedding<double>({}, 3) == V::Zero(3));
  CHECK(bag_embedding<double>({s, V(2 * s), V(3 * s)}, {0, 2}, 3) == V(2 * s));
}

TEST_CASE("pos and unl scores") {
  const auto p = params(M{{1, 0}, {0, 1}}, V{{0.5, -0.5}}, M{{2, 0}, {0, 2}}, V{{0, 0}});
  CHECK(pos_scores(p, bag_embedding<double>({}, 2)) == V{{0.5, -0.5}});
  CHECK(pos_scores(p, V{{3, 4}}) == V{{3.5, 3.5}});
  CHECK(unl_scores(p, V{{3, 4}}) == V{{6, 8}});

  const auto same = params(M{{1, 2}, {3, 4}}, V{{1, 1}}, M{{1, 2}, {3, 4}}, V{{1, 1}});
  CHECK(pos_scores(same, V{{0.2, 0.3}}) == unl_scores(same, V{{0.2, 0.3}}));

  ExtractorParams<double> pos_only;
  pos_only.W = Parameter<double>(2, 2);
  pos_only.b = Parameter<double>(2, 1);
  CHECK_THROWS_AS(unl_scores(pos_only, V{{1, 1}}), ConfigError);
}

TEST_CASE("combine") {
  const V c = combine(V{{1, 0}}, V{{0, 1}}, 0.7);
  CHECK(c[0] == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(c[1] == doctest::Approx(0.3).epsilon(1e-15));
  const V o{{0.4, -1, 2}};
  CHECK((combine(o, o, 0.3) - o).cwiseAbs().maxCoeff() < 1e-15);
  Index a = 0, b = 0;
  const V op{{0.1, 0.9, 0.3}}, ou{{0.5, -0.2, 0.8}};
  combine(op, ou, 0.7).maxCoeff(&a);
  combine(V((op.array() + 5).matrix()), V((ou.array() + 5).matrix()), 0.7).maxCoeff(&b);
  CHECK(a == b);
  CHECK_THROWS_AS(combine(o, o, 0.0), ConfigError);
  CHECK_THROWS_AS(combine(o, o, 1.0), ConfigError);
}

TEST_CASE("loss_pos") {
  CHECK(loss_pos<double>({scored(V{{100, 0, 0}}, V::Zero(3), 0)}) < 1e-30);
  CHECK(loss_pos<double>({scored(V::Zero(53), V::Zero(53), 7)}) ==
        doctest::Approx(std::log(53.0)).epsilon(1e-12));
  CHECK(std::abs(loss_pos<double>({scored(V::Zero(53), V::Zero(53), 7)}) - std::log(53.0)) < 1e-9);

  Rng rng(3);
  std::vector<ScoredBag<double>> batch;
  double oracle = 0.0;
  for (int i = 0; i < 5; ++i) {
    const V s = uniform_matrix<double>(4, 1, 3.0, rng);
    const int r = static_cast<int>(rng.index(4));
    batch.push_back(scored(s, V::Zero(4), r));
    oracle += direct_nll(s, r);
  }
  CHECK(std::abs(loss_pos(batch) - oracle) < 1e-9);
}

TEST_CASE("loss_unl") {
  CHECK(loss_unl<double>({scored(V::Zero(3), V{{-200, 0, 0}}, 0)}) < 1e-30);
  CHECK(loss_unl<double>({scored(V::Zero(53), V::Zero(53), 3)}) ==
        doctest::Approx(-std::log(52.0 / 53.0)).epsilon(1e-12));
  const double clamped = loss_unl<double>({scored(V::Zero(3), V{{1000, 0, 0}}, 0)});
  CHECK(std::isfinite(clamped));
  CHECK(clamped == doctest::Approx(-std::log(1e-7)).epsilon(1e-6));
  CHECK(clamped == doctest::Approx(16.118).epsilon(1e-4));

  auto empty = scored(V::Zero(3), V::Zero(3), 1);
  empty.unlabeled_empty = true;
  CHECK(loss_unl<double>({empty}) == 0.0);
}

TEST_CASE("loss_bag") {
  // P(r|B) = 0.5 and P(r*|B) = 0.25: scores log(2), log(1), log(1)
  const V s{{std::log(2.0), 0.0, 0.0}};
  auto bag = scored(s, s, 0);
  CHECK(loss_bag<double>({bag}) == doctest::Approx(-(std::log(0.5) + std::log(0.75))).epsilon(1e-12));
  CHECK(loss_bag<double>({bag}) == doctest::Approx(0.9808).epsilon(1e-4));

  int rival = -1;
  bag_term(V{{0.3, 0.1}}, 0, false, static_cast<V*>(nullptr), &rival);
  CHECK(rival == 1);
  bag_term(V{{0.3, 0.1, 0.1}}, 0, false, static_cast<V*>(nullptr), &rival);
  CHECK(rival == 1);
  CHECK(rival_relation(V{{5, 1, 2}}, 2, false) == 0);
  CHECK(rival_relation(V{{5, 1, 2}}, 2, true) == 1);
  CHECK(rival_relation(V{{5}}, 0, false) == -1);

  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.index(5));
    const V o = uniform_matrix<double>(n, 1, 4.0, rng);
    const int r = static_cast<int>(rng.index(static_cast<std::size_t>(n)));
    int star = -1;
    double best = -1.0;
    for (int k = 0; k < n; ++k) {
      if (k != r && direct_p(o, k) > best) {
        best = direct_p(o, k);
        star = k;
      }
    }
    const double oracle = direct_nll(o, r) - std::log(1.0 - direct_p(o, star));
    auto b = scored(o, o, r);
    CHECK(std::abs(loss_bag<double>({b}) - oracle) < 1e-9);
  }
}

TEST_CASE("total_loss composition and ablations") {
  Rng rng(5);
  const V op = uniform_matrix<double>(4, 1, 2.0, rng), ou = uniform_matrix<double>(4, 1, 2.0, rng);
  const std::vector<ScoredBag<double>> batch = {scored(op, ou, 1), scored(ou, op, 2)};
  LossConfig cfg;
  CHECK(cfg.beta == 0.1);
  const LossTerms full = total_loss(batch, cfg);
  CHECK(full.total == doctest::Approx(full.l_pos + full.l_unl + 0.1 * full.l_bag).epsilon(1e-14));
  CHECK(full.l_pos == doctest::Approx(loss_pos(batch)));
  CHECK(full.l_unl == doctest::Approx(loss_unl(batch)));
  CHECK(full.l_bag == doctest::Approx(loss_bag(batch)));

  LossConfig no_bag = cfg;
  no_bag.use_bag = false;
  const LossTerms comb = total_loss(batch, no_bag);
  CHECK(comb.l_bag == 0.0);
  CHECK(comb.total == doctest::Approx(full.l_pos + full.l_unl));

  LossConfig no_unl = no_bag;
  no_unl.use_unlabeled = false;
  const LossTerms unl = total_loss(batch, no_unl);
  CHECK(unl.total == doctest::Approx(full.l_pos));
  CHECK(unl.l_unl == 0.0);
}

TEST_CASE("losses are non-negative and finite for extreme scores") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 1 + static_cast<Index>(rng.index(6));
    const V op = uniform_matrix<double>(n, 1, 500.0, rng), ou = uniform_matrix<double>(n, 1, 500.0, rng);
    const auto t = total_loss<double>({scored(op, ou, static_cast<int>(rng.index(static_cast<std::size_t>(n))))},
                                      LossConfig{});
    CHECK(std::isfinite(t.total));
    CHECK(t.l_pos >= 0.0);
    CHECK(t.l_unl >= 0.0);
    CHECK(t.l_bag >= 0.0);
  }
}

TEST_CASE("bag_loss gradients through both heads pass grad_check") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(50 + seed);
    const Index n_rel = 2 + static_cast<Index>(rng.index(4));
    const Index dim = 1 + static_cast<Index>(rng.index(4));
    auto p = params(uniform_matrix<double>(n_rel, dim, 1.0, rng), uniform_matrix<double>(n_rel, 1, 1.0, rng),
                    uniform_matrix<double>(n_rel, dim, 1.0, rng), uniform_matrix<double>(n_rel, 1, 1.0, rng));
    Parameter<double> x_plus(uniform_matrix<double>(dim, 1, 1.0, rng));
    Parameter<double> x_unl(uniform_matrix<double>(dim, 1, 1.0, rng));
    const int label = static_cast<int>(rng.index(static_cast<std::size_t>(n_rel)));
    LossConfig cfg;
    cfg.beta = 0.5;
    cfg.exclude_na_rival = seed % 3 == 0;
    auto loss = [&](bool backward) {
      const V vp = x_plus.vec(), vu = x_unl.vec();
      auto bag = scored(pos_scores(p, vp), unl_scores(p, vu), label);
      ScoreGradients<double> g;
      const LossTerms t = bag_loss(bag, cfg, backward ? &g : nullptr);
      if (backward) {
        x_plus.grad_vec() += linear_backward(vp, p.W, p.b, g.d_o_plus);
        x_unl.grad_vec() += linear_backward(vu, *p.W_unl, *p.b_unl, g.d_o_unl);
      }
      return t.total;
    };
    const auto r = grad_check(loss, {{"W", &p.W}, {"b", &p.b}, {"W_unl", &*p.W_unl}, {"b_unl", &*p.b_unl},
                                     {"x_plus", &x_plus}, {"x_unl", &x_unl}});
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("predict") {
  ExtractorParams<double> one;
  one.W = Parameter<double>(M{{0.3, 0.4}});
  one.b = Parameter<double>(1, 1);
  auto all = [](int) { return SelectionResult{{0, 1}, {}}; };
  const std::vector<V> xs = {V{{1, 2}}, V{{3, 4}}};
  const Prediction single = predict<double>(xs, all, one, 0.7, ScoreHead::PositiveOnly);
  CHECK(single.best == 0);
  CHECK(single.scores[0] == doctest::Approx(1.0));

  // All-positive stub: prediction reduces to the averaged-bag model.
  Rng rng(2);
  const M W = uniform_matrix<double>(4, 2, 1.0, rng);
  const V b = uniform_matrix<double>(4, 1, 1.0, rng);
  const auto p = params(W, b, W, b);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<V> bag;
    for (int i = 0; i < 3; ++i) bag.push_back(uniform_matrix<double>(2, 1, 1.0, rng));
    auto everything = [](int) { return SelectionResult{{0, 1, 2}, {}}; };
    const Prediction pu = predict<double>(bag, everything, p, 0.7, ScoreHead::PositiveOnly);
    Index ave = 0;
    softmax(V(W * bag_embedding(bag, 2) + b)).maxCoeff(&ave);
    CHECK(pu.best == ave);
  }
}

TEST_CASE("predict argmax is invariant to shifting both heads") {
  Rng rng(4);
  const M W = uniform_matrix<double>(3, 2, 1.0, rng), Wu = uniform_matrix<double>(3, 2, 1.0, rng);
  const V b = uniform_matrix<double>(3, 1, 1.0, rng), bu = uniform_matrix<double>(3, 1, 1.0, rng);
  const std::vector<V> xs = {V{{0.2, -0.4}}, V{{0.9, 0.1}}, V{{-0.3, 0.5}}};
  auto split = [](int k) { return k == 1 ? SelectionResult{{0}, {1, 2}} : SelectionResult{{0, 2}, {1}}; };
  const auto base = predict<double>(xs, split, params(W, b, Wu, bu), 0.7, ScoreHead::Combined);
  const V c = V::Constant(3, 2.5);
  const auto shifted = predict<double>(xs, split, params(W, V(b + c), Wu, V(bu + c)), 0.7, ScoreHead::Combined);
  CHECK(base.best == shifted.best);
  for (int k = 0; k < 3; ++k) CHECK(base.scores[k] == doctest::Approx(shifted.scores[k]).epsilon(1e-12));
}
