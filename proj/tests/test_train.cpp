#include "iagcn/train.hpp"

#include <doctest.h>

#include <map>

using namespace iagcn;

TEST_SUITE("train") {

TEST_CASE("BPR loss values") {
  const std::vector<double> zero{0.0}, one{1.0}, reg{3.0};
  CHECK(bpr_batch_loss(zero, zero, zero, 0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-15));
  CHECK(bpr_batch_loss(one, zero, zero, 0.0) == doctest::Approx(0.31326168751822286).epsilon(1e-15));
  const std::vector<double> huge{800.0};
  CHECK(bpr_batch_loss(huge, zero, reg, 0.5) == doctest::Approx(1.5));
  const std::vector<double> pos{1.0, 0.0}, neg{0.0, 0.0}, regs{2.0, 4.0};
  CHECK(bpr_batch_loss(pos, neg, regs, 0.1) ==
        doctest::Approx((0.31326168751822286 + 0.6931471805599453) / 2 + 0.1 * 3.0));
  CHECK_THROWS(bpr_batch_loss(pos, zero, regs, 0.0));
  CHECK_THROWS(bpr_batch_loss({}, {}, {}, 0.0));
}

TEST_CASE("negative sampling") {
  // user 0 sees every item but 2; user 1 sees item 0 only
  InteractionDataset d{3, 100, {}, {}};
  for (NodeId i = 0; i < 100; ++i) {
    if (i != 2) d.train_edges.push_back({0, i});
  }
  d.train_edges.push_back({1, 0});
  d.train_edges.push_back({2, 5});
  const auto g = BipartiteGraph::build(d);

  Rng rng(1);
  const std::vector<NodeId> forced(50, 0);
  for (NodeId n : sample_negatives(g, forced, rng)) CHECK(n == 2);

  Rng a(8), b(8);
  const std::vector<NodeId> users{1, 2, 1, 2};
  CHECK(sample_negatives(g, users, a) == sample_negatives(g, users, b));

  const std::vector<NodeId> many(100000, 1);
  std::map<NodeId, int> counts;
  for (NodeId n : sample_negatives(g, many, rng)) ++counts[n];
  CHECK(counts.count(0) == 0);
  CHECK(counts.size() == 99);
  // A per-item +-10% band is about 3.2 sigma, which 99 items break now and
  // then by chance; test the aggregate chi-square and a wider per-item band.
  const double expect = 100000.0 / 99.0;
  double chi2 = 0.0;
  for (const auto& [item, c] : counts) {
    chi2 += (c - expect) * (c - expect) / expect;
    CHECK(std::abs(c - expect) < 0.15 * expect);
  }
  CHECK(chi2 < 148.0); // 98 degrees of freedom, p = 0.001

  InteractionDataset full{1, 2, {{0, 0}, {0, 1}}, {}};
  const auto gf = BipartiteGraph::build(full);
  const std::vector<NodeId> u0{0};
  CHECK_THROWS(sample_negatives(gf, u0, rng));
}

TEST_CASE("Adam first step moves each coordinate by about lr") {
  auto table = init_embeddings(3, 3, 4, 1);
  const auto before = table;
  auto beta = LayerWeights::learned(1);
  auto state = AdamState::zeros(table, beta);
  GradientBuffer g(3, 3, 4, 2);
  g.users.row(1) << 0.5, -2.0, 1e-3, 7.0;
  g.beta_logits << 0.25, -0.25;
  adam_step(table, beta, g, state, 0.01);
  const Eigen::RowVectorXd moved = table.users.row(1) - before.users.row(1);
  for (int c = 0; c < 4; ++c) {
    CHECK(std::abs(moved[c]) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(moved[c] * g.users.row(1)[c] < 0.0);
  }
  CHECK(table.users.row(0) == before.users.row(0));
  CHECK(table.items == before.items);
  CHECK(beta.logits()[0] == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(state.step == 1);

  // untouched rows keep stale moments; zero gradient leaves parameters alone
  const auto m_row0 = state.m_users.row(1).eval();
  GradientBuffer empty(3, 3, 4, 2);
  auto frozen = LayerWeights::mean(1);
  const auto snapshot = table;
  adam_step(table, frozen, empty, state, 0.01);
  CHECK(table.users == snapshot.users);
  CHECK(state.m_users.row(1) == m_row0);
}

TEST_CASE("loss at initialisation is close to ln 2") {
  const auto d = generate_synthetic(100, 100, 2, 0.3, 0.03, 3);
  const auto g = BipartiteGraph::build(d);
  const auto t = init_embeddings(100, 100, 64, 3);
  Hyperparams hp;
  hp.embedding_dim = 64;
  hp.num_layers = 2;
  hp.l2_lambda = 0.0;
  Rng rng(2);
  std::vector<NodeId> users;
  for (const Edge& e : d.train_edges) users.push_back(e.user);
  const auto negs = sample_negatives(g, users, rng);
  std::vector<Triplet> triplets;
  for (std::size_t k = 0; k < users.size(); ++k) {
    triplets.push_back({users[k], d.train_edges[k].item, negs[k]});
  }
  for (GuideMode mode : {GuideMode::lightgcn_norm, GuideMode::interactive}) {
    hp.guide_mode = mode;
    const double loss = mean_triplet_loss(g, triplets, t, LayerWeights::mean(2), hp, 0);
    CHECK(std::abs(loss - 0.6931) < 0.05);
  }
}

TEST_CASE("training loss goes down") {
  const auto d = generate_synthetic(100, 100, 2, 0.5, 0.05, 1);
  Hyperparams hp;
  hp.embedding_dim = 16;
  hp.num_layers = 1;
  hp.guide_mode = GuideMode::lightgcn_norm;
  hp.learning_rate = 1e-3;
  TrainSchedule s;
  s.epochs = 20;
  s.eval_every = 1;
  s.patience = 100;
  s.seed = 4;
  const auto r = train(d, hp, s);
  REQUIRE(r.log.size() == 20);
  std::vector<double> avg;
  for (std::size_t k = 4; k < r.log.size(); ++k) {
    double sum = 0.0;
    for (std::size_t j = k - 4; j <= k; ++j) sum += r.log[j].loss;
    avg.push_back(sum / 5.0);
  }
  for (std::size_t k = 1; k < avg.size(); ++k) {
    CHECK(avg[k] < avg[k - 1]);
  }
}

TEST_CASE("interactive training learns the block structure") {
  const auto d = generate_synthetic(100, 100, 2, 0.5, 0.05, 2);
  const auto g = BipartiteGraph::build(d);
  // Held-out items are a uniform draw within the block, so a ranking that
  // knows only the blocks is the natural yardstick; an absolute Recall@5
  // near 1 is out of reach for any model on this graph.
  RowMatrixXd block(100, 100);
  for (int u = 0; u < 100; ++u) {
    for (int i = 0; i < 100; ++i) block(u, i) = (u < 50) == (i < 50) ? 1.0 : 0.0;
  }
  Hyperparams hp;
  hp.embedding_dim = 16;
  hp.num_layers = 2;
  hp.guide_mode = GuideMode::interactive;
  hp.learning_rate = 5e-3;
  TrainSchedule s;
  s.epochs = 40;
  s.eval_every = 5;
  s.patience = 100;
  s.seed = 6;
  s.k_cut = 5;
  const auto r = train(d, hp, s);
  // random ranking among the tied block scores, averaged over draws
  double ceiling = 0.0;
  constexpr int kDraws = 20;
  Rng noise(1);
  for (int k = 0; k < kDraws; ++k) {
    RowMatrixXd jitter = block;
    for (Eigen::Index j = 0; j < jitter.size(); ++j) jitter.data()[j] += 1e-3 * noise.uniform01();
    ceiling += evaluate_scores(jitter, d, g, 5).mean_recall / kDraws;
  }
  MESSAGE("recall@5 " << r.best_recall << ", block ceiling " << ceiling);
  CHECK(r.best_recall > 0.85 * ceiling);
}

TEST_CASE("early stopping keeps the best evaluated snapshot") {
  const auto d = generate_synthetic(60, 60, 2, 0.5, 0.05, 3);
  const auto g = BipartiteGraph::build(d);
  Hyperparams hp;
  hp.embedding_dim = 8;
  hp.num_layers = 1;
  hp.guide_mode = GuideMode::self_guided;
  hp.learning_rate = 0.05;
  TrainSchedule s;
  s.epochs = 60;
  s.eval_every = 2;
  s.patience = 2;
  s.seed = 1;
  std::vector<EvalRecord> seen;
  const auto r = train(d, hp, s, [&](const EvalRecord& e) { seen.push_back(e); });
  REQUIRE_FALSE(r.log.empty());
  CHECK(seen.size() == r.log.size());
  double best = -1.0;
  int best_epoch = 0;
  for (const auto& e : r.log) {
    if (e.recall > best) {
      best = e.recall;
      best_epoch = e.epoch;
    }
  }
  CHECK(r.best_recall == best);
  CHECK(r.best_epoch == best_epoch);
  CHECK(evaluate(r.best, d, g, 20).mean_recall == best);
  if (r.epochs_run < s.epochs) {
    CHECK(r.log.back().epoch - best_epoch == s.patience * s.eval_every);
  }
}

TEST_CASE("deterministic runs are bit-identical") {
  const auto d = generate_synthetic(40, 40, 2, 0.5, 0.1, 9);
  Hyperparams hp;
  hp.embedding_dim = 8;
  hp.num_layers = 2;
  hp.beta_mode = BetaMode::learned;
  hp.learning_rate = 1e-2;
  TrainSchedule s;
  s.epochs = 10;
  s.eval_every = 5;
  s.batch_size = 64;
  s.seed = 77;
  const auto a = train(d, hp, s);
  const auto b = train(d, hp, s);
  CHECK(a.best.table.users == b.best.table.users);
  CHECK(a.best.table.items == b.best.table.items);
  CHECK(a.best.beta.logits() == b.best.beta.logits());
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(format_metrics_line(a.log[k], true) == format_metrics_line(b.log[k], true));
  }
  hp.fanout = 3;
  const auto c = train(d, hp, s);
  const auto e = train(d, hp, s);
  CHECK(c.best.table.users == e.best.table.users);
}

TEST_CASE("metrics line layout") {
  const EvalRecord r{10, 0.5, 0.25, 0.125, 3.5};
  CHECK(format_metrics_line(r, true) == "10\t0.500000000\t0.250000\t0.125000\t0.000");
  CHECK(format_metrics_line(r, false) == "10\t0.500000000\t0.250000\t0.125000\t3.500");
}

TEST_CASE("divergence aborts with a diagnostic") {
  const auto d = generate_synthetic(20, 20, 2, 0.5, 0.1, 1);
  Hyperparams hp;
  hp.embedding_dim = 4;
  hp.num_layers = 1;
  hp.learning_rate = 1e300;
  TrainSchedule s;
  s.epochs = 5;
  s.seed = 1;
  try {
    train(d, hp, s);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(std::string(e.what()).find("non-finite loss") != std::string::npos);
  }
}

} // TEST_SUITE
