#include <cmath>
#include <set>

#include "doctest.h"
#include "purex/selector.hpp"

using namespace purex;
using M = Matrix<double>;
using V = Vector<double>;

namespace {

Selector<double> make_selector(int n_rel, Index enc, std::uint64_t seed, bool relation = true) {
  SelectorConfig cfg;
  cfg.hidden = 8;
  cfg.d_rel = 3;
  cfg.use_relation_embedding = relation;
  Rng rng(seed);
  return init_selector<double>(cfg, n_rel, enc, rng);
}

std::vector<V> random_bag(std::size_t n, Index dim, Rng& rng) {
  std::vector<V> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(uniform_matrix<double>(dim, 1, 1.0, rng));
  return out;
}

using Decide = std::function<Action(const StateRep<double>&, V*)>;

ExtractorParams<double> extractor(const M& W, const V& b) {
  ExtractorParams<double> p;
  p.W = Parameter<double>(W);
  p.b = Parameter<double>(M(b));
  return p;
}

}  // namespace

TEST_CASE("build_state") {
  const auto sel = make_selector(3, 2, 1);
  const V x{{0.5, -0.5}};
  const auto empty = build_state<double>(sel, x, 1, {});
  CHECK(empty.x_pos == V::Zero(2));
  CHECK(empty.r_e == sel.relation.value.row(1).transpose());
  CHECK(empty.size() == 2 + 3 + 2);
  const V s1{{1, 2}}, s2{{3, -4}};
  CHECK(build_state<double>(sel, x, 0, {s1}).x_pos == s1);
  CHECK(build_state<double>(sel, x, 0, {s1, s2}).x_pos == V{{2, -1}});
  const V c = build_state<double>(sel, x, 2, {s1}).concat();
  CHECK(c.head(2) == x);
  CHECK(c.tail(2) == s1);
  CHECK_THROWS_AS(build_state<double>(sel, x, 3, {}), ConfigError);
}

TEST_CASE("Baseline-SR state drops only the relation embedding") {
  const auto full = make_selector(4, 5, 2, true);
  const auto sr = make_selector(4, 5, 2, false);
  CHECK(full.state_dim() == 13);
  CHECK(sr.state_dim() == 10);
  CHECK(sr.net.W1.cols() == 10);
  CHECK(build_state<double>(sr, V::Ones(5), 2, {}).r_e.size() == 0);
  Rng rng(1);
  const auto bag = random_bag(6, 5, rng);
  const auto ep = select_bag(bag, 1, sr, ActMode::greedy());
  CHECK(ep.split.positive.size() + ep.split.unlabeled.size() == 6);
}

TEST_CASE("d_rel defaults to the encoder width") {
  SelectorConfig cfg;
  Rng rng(1);
  const auto s = init_selector<double>(cfg, 6, 12, rng);
  CHECK(s.d_rel() == 12);
  CHECK(s.net.W2.rows() == 2);
  CHECK(s.net.W1.rows() == 128);
}

TEST_CASE("act") {
  CHECK(act(V{{0.9, 0.1}}, ActMode::greedy()) == Action::Positive);
  CHECK(act(V{{0.1, 0.9}}, ActMode::greedy()) == Action::Unlabeled);
  CHECK(act(V{{0.5, 0.5}}, ActMode::greedy()) == Action::Unlabeled);
  Rng rng(3);
  int positive = 0;
  for (int i = 0; i < 10000; ++i) positive += act(V{{0.9, 0.1}}, ActMode::explore(1.0), &rng) == Action::Positive;
  CHECK(std::abs(positive / 10000.0 - 0.5) < 0.02);
  int greedy_share = 0;
  for (int i = 0; i < 10000; ++i) greedy_share += act(V{{0.9, 0.1}}, ActMode::explore(0.2), &rng) == Action::Positive;
  CHECK(std::abs(greedy_share / 10000.0 - 0.9) < 0.02);
}

TEST_CASE("select_bag with stub agents") {
  const auto sel = make_selector(3, 4, 1);
  Rng rng(2);
  const auto bag = random_bag(5, 4, rng);
  const Decide yes = [](const StateRep<double>&, V*) { return Action::Positive; };
  const Decide no = [](const StateRep<double>&, V*) { return Action::Unlabeled; };
  const auto all = select_bag<double>(bag, 1, sel, yes);
  CHECK(all.split.positive == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(all.split.unlabeled.empty());
  const auto none = select_bag<double>(bag, 1, sel, no);
  CHECK(none.split.positive.empty());
  CHECK(none.split.unlabeled.size() == 5);
}

TEST_CASE("select_bag keeps x_pos as the running mean of selections") {
  const auto sel = make_selector(3, 2, 1);
  const std::vector<V> bag = {V{{1, 0}}, V{{0, 1}}, V{{3, 3}}, V{{-1, 5}}};
  std::vector<V> seen_xpos;
  const Decide alternate = [&](const StateRep<double>& s, V*) {
    seen_xpos.push_back(s.x_pos);
    return seen_xpos.size() % 2 == 1 ? Action::Positive : Action::Unlabeled;
  };
  const auto ep = select_bag<double>(bag, 2, sel, alternate);
  REQUIRE(seen_xpos.size() == 4);
  CHECK(seen_xpos[0] == V::Zero(2));
  CHECK(seen_xpos[1] == V{{1, 0}});
  CHECK(seen_xpos[2] == V{{1, 0}});
  CHECK(seen_xpos[3] == V{{2, 1.5}});
  CHECK(ep.split.positive == std::vector<int>{0, 2});
  CHECK(ep.transitions[3].x_pos == V{{2, 1.5}});
  CHECK(ep.transitions[1].action == Action::Unlabeled);
}

TEST_CASE("oracle Q favouring planted positives recovers the sidecar split") {
  const auto sel = make_selector(3, 3, 1);
  // the planted positives share a direction; the oracle scores alignment
  const V direction{{1, 1, 0}};
  const std::vector<V> bag = {V{{1, 0.9, 0.1}}, V{{-0.5, 0.2, 1}}, V{{0.8, 1.1, -0.2}},
                              V{{0.1, -1, 0.3}}, V{{1.2, 0.7, 0.0}}};
  const std::vector<bool> sidecar = {true, false, true, false, true};
  const Decide oracle = [&](const StateRep<double>& s, V* q) {
    V values(2);
    values << s.x_q.dot(direction), 0.5;
    if (q) *q = values;
    return act(values, ActMode::greedy());
  };
  const auto ep = select_bag<double>(bag, 1, sel, oracle);
  for (int i = 0; i < 5; ++i) {
    const bool positive =
        std::find(ep.split.positive.begin(), ep.split.positive.end(), i) != ep.split.positive.end();
    CHECK(positive == sidecar[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("splits partition the bag and greedy selection is deterministic") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto sel = make_selector(4, 3, static_cast<std::uint64_t>(trial));
    const auto bag = random_bag(1 + rng.index(9), 3, rng);
    const int r = static_cast<int>(rng.index(4));
    const auto a = select_bag(bag, r, sel, ActMode::greedy());
    const auto b = select_bag(bag, r, sel, ActMode::greedy());
    CHECK(a.split.positive == b.split.positive);
    CHECK(a.split.unlabeled == b.split.unlabeled);
    std::vector<int> all = a.split.positive;
    all.insert(all.end(), a.split.unlabeled.begin(), a.split.unlabeled.end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(bag.size());
    for (std::size_t i = 0; i < bag.size(); ++i) expect[i] = static_cast<int>(i);
    CHECK(all == expect);
  }
}

TEST_CASE("custom visiting order") {
  const auto sel = make_selector(2, 2, 1);
  const std::vector<V> bag = {V{{1, 0}}, V{{0, 1}}, V{{2, 2}}};
  std::vector<V> visited;
  const Decide record = [&](const StateRep<double>& s, V*) {
    visited.push_back(s.x_q);
    return Action::Positive;
  };
  const auto ep = select_bag<double>(bag, 0, sel, record, {2, 0, 1});
  CHECK(visited[0] == bag[2]);
  CHECK(ep.split.positive == std::vector<int>{2, 0, 1});
}

TEST_CASE("episode reward") {
  ExtractorParams<double> uniform = extractor(M::Zero(53, 4), V::Zero(53));
  Rng rng(1);
  const auto bag = random_bag(3, 4, rng);
  CHECK(std::abs(episode_reward(uniform, bag, {0, 2}, 17) - 1.0 / 53.0) < 1e-12);
  CHECK(std::abs(episode_reward(uniform, bag, {}, 0) - 1.0 / 53.0) < 1e-12);

  const auto margin = extractor(M::Zero(3, 4), V{{800, 0, 0}});
  CHECK(episode_reward(margin, bag, {0}, 0) == doctest::Approx(1.0));

  // o+ = [1, 0, 0] from an empty B+ through the bias
  const auto hand = extractor(M::Zero(3, 4), V{{1, 0, 0}});
  const double e = std::exp(1.0);
  CHECK(episode_reward(hand, bag, {}, 0) == doctest::Approx(e / (e + 2)).epsilon(1e-14));
}

TEST_CASE("reward reads the extractor storage it is given") {
  auto ex = extractor(M::Zero(3, 2), V::Zero(3));
  const std::vector<V> bag = {V{{1, 0}}};
  const double before = episode_reward(ex, bag, {0}, 1);
  ex.W.value(1, 0) = 2.0;
  CHECK(episode_reward(ex, bag, {0}, 1) > before);
}

TEST_CASE("every transition target equals the terminal reward") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sel = make_selector(5, 3, static_cast<std::uint64_t>(trial));
    const auto ex = extractor(uniform_matrix<double>(5, 3, 1.0, rng), uniform_matrix<double>(5, 1, 1.0, rng));
    const auto bag = random_bag(1 + rng.index(8), 3, rng);
    const int r = static_cast<int>(rng.index(5));
    auto ep = select_bag(bag, r, sel, ActMode::explore(0.5), &rng);
    const double reward = episode_reward(ex, bag, ep.split.positive, r);
    assign_episode_reward(ep.transitions, reward);
    CHECK(ep.transitions.size() == bag.size());
    for (const auto& t : ep.transitions) {
      CHECK(t.target == reward);
      CHECK(t.relation == r);
    }
  }
}

TEST_CASE("replay buffer") {
  ReplayBuffer<double> buf(3);
  for (int i = 0; i < 5; ++i) {
    Transition<double> t;
    t.target = i;
    buf.push(t);
    CHECK(buf.size() <= 3);
  }
  CHECK(buf.items().front().target == 2.0);
  CHECK(buf.items().back().target == 4.0);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto sample = buf.sample(3, rng);
    std::set<const Transition<double>*> distinct(sample.begin(), sample.end());
    CHECK(distinct.size() == 3);
  }
  CHECK_THROWS(buf.sample(4, rng));
  CHECK_THROWS_AS(ReplayBuffer<double>(0), ConfigError);
}

TEST_CASE("q_update") {
  auto sel = make_selector(3, 2, 4);
  ReplayBuffer<double> buf(100);
  Rng rng(5);
  AdamConfig adam;
  CHECK_FALSE(q_update(sel, buf, 2, adam, rng).has_value());

  Transition<double> t;
  t.x_q = V{{0.3, -0.2}};
  t.x_pos = V{{0.1, 0.1}};
  t.relation = 1;
  t.action = Action::Positive;
  StateRep<double> s{t.x_q, relation_row(sel, 1), t.x_pos};
  const double q = q_values(sel.net, s.concat())[0];
  t.target = q + 0.5;
  buf.push(t);
  CHECK(q_loss(sel, {&buf.items()[0]}, false) == doctest::Approx(0.25).epsilon(1e-12));

  // target equal to the current Q: zero loss and no movement
  auto exact = make_selector(3, 2, 4);
  ReplayBuffer<double> matched(10);
  Transition<double> m = t;
  m.target = q;
  matched.push(m);
  const M W1 = exact.net.W1.value;
  const auto loss = q_update(exact, matched, 1, adam, rng);
  REQUIRE(loss.has_value());
  CHECK(*loss == doctest::Approx(0.0).epsilon(1e-20));
  CHECK((exact.net.W1.value - W1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(exact.net.W1.step_count == 1);

  const auto updated = q_update(sel, buf, 1, adam, rng);
  REQUIRE(updated.has_value());
  CHECK(*updated == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(sel.net.W2.step_count == 1);
}

TEST_CASE("repeated q updates on a fixed buffer reduce the loss") {
  auto sel = make_selector(3, 4, 6);
  ReplayBuffer<double> buf(1000);
  Rng rng(6);
  for (int i = 0; i < 64; ++i) {
    Transition<double> t;
    t.x_q = uniform_matrix<double>(4, 1, 1.0, rng);
    t.x_pos = uniform_matrix<double>(4, 1, 1.0, rng);
    t.relation = static_cast<int>(rng.index(3));
    t.action = rng.bernoulli(0.5) ? Action::Positive : Action::Unlabeled;
    t.target = t.x_q[0] > 0 ? 0.9 : 0.1;
    buf.push(t);
  }
  std::vector<const Transition<double>*> all;
  for (const auto& t : buf.items()) all.push_back(&t);
  AdamConfig adam;
  adam.lr = 0.01;
  const double start = q_loss(sel, all, false);
  std::vector<double> trace;
  for (int step = 0; step < 100; ++step) {
    q_update(sel, buf, 32, adam, rng);
    trace.push_back(q_loss(sel, all, false));
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += trace[static_cast<std::size_t>(i)];
    last += trace[static_cast<std::size_t>(90 + i)];
  }
  CHECK(last < first);
  CHECK(trace.back() < 0.5 * start);
}

TEST_CASE("q_loss gradient passes grad_check including relation embeddings") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto sel = make_selector(4, 3, seed);
    Rng rng(200 + seed);
    std::vector<Transition<double>> items;
    for (int i = 0; i < 6; ++i) {
      Transition<double> t;
      t.x_q = uniform_matrix<double>(3, 1, 1.0, rng);
      t.x_pos = uniform_matrix<double>(3, 1, 1.0, rng);
      t.relation = static_cast<int>(rng.index(4));
      t.action = rng.bernoulli(0.5) ? Action::Positive : Action::Unlabeled;
      t.target = rng.uniform();
      items.push_back(t);
    }
    std::vector<const Transition<double>*> batch;
    for (const auto& t : items) batch.push_back(&t);
    auto loss = [&](bool backward) { return q_loss(sel, batch, backward); };
    const auto r = grad_check(loss, {{"relation", &sel.relation}, {"W1", &sel.net.W1}, {"b1", &sel.net.b1},
                                     {"W2", &sel.net.W2}, {"b2", &sel.net.b2}});
    CHECK(r.max_relative_error < 1e-4);
  }
}
