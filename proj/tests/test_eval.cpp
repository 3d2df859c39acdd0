#include "iagcn/eval.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <numeric>

using namespace iagcn;

namespace {

const std::string kData = IAGCN_TEST_DATA;

InteractionDataset read_fixture(const std::string& dir) {
  std::ifstream train(dir + "/train.txt");
  std::ifstream test(dir + "/test.txt");
  const SplitFile a = parse_split_file(train);
  const SplitFile b = parse_split_file(test);
  InteractionDataset d;
  d.num_users = static_cast<NodeId>(std::max(a.max_user, b.max_user) + 1);
  d.num_items = static_cast<NodeId>(std::max(a.max_item, b.max_item) + 1);
  d.train_edges = a.edges;
  d.test_edges = b.edges;
  return d;
}

Hyperparams params(GuideMode mode, int layers, int dim) {
  Hyperparams hp;
  hp.guide_mode = mode;
  hp.num_layers = layers;
  hp.embedding_dim = dim;
  return hp;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("top-k ordering, exclusion and ties") {
  const std::vector<double> scores{9.0, 2.0, 5.0};
  const std::vector<NodeId> train{0};
  CHECK(top_k(scores, train, 20) == std::vector<NodeId>{2, 1});
  const std::vector<double> tied{1.0, 3.0, 3.0, 0.5};
  CHECK(top_k(tied, {}, 3) == std::vector<NodeId>{1, 2, 0});
  CHECK(top_k(tied, {}, 1) == std::vector<NodeId>{1});
  const std::vector<NodeId> all{0, 1, 2, 3};
  CHECK(top_k(tied, all, 5).empty());
}

TEST_CASE("recall and ndcg on hand examples") {
  const std::vector<NodeId> ranked{4, 7, 1, 9};
  CHECK(recall_at_k(ranked, std::vector<NodeId>{1, 4, 7}, 20) == 1.0);
  CHECK(recall_at_k(ranked, std::vector<NodeId>{1, 9, 30, 31}, 20) == 0.5);
  CHECK(recall_at_k(ranked, std::vector<NodeId>{1, 9, 30, 31}, 2) == 0.0);
  CHECK(ndcg_at_k(ranked, std::vector<NodeId>{4}, 20) == 1.0);
  CHECK(ndcg_at_k(ranked, std::vector<NodeId>{1}, 20) == 0.5);
  CHECK(ndcg_at_k(ranked, std::vector<NodeId>{50}, 20) == 0.0);
  CHECK_THROWS_AS(recall_at_k(ranked, std::vector<NodeId>{1}, 0), std::invalid_argument);
  CHECK_THROWS_AS(ndcg_at_k(ranked, std::vector<NodeId>{1}, 0), std::invalid_argument);
}

TEST_CASE("metrics agree with brute force on random fixtures") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = static_cast<NodeId>(3 + rng.uniform_index(12));
    std::vector<double> scores(m);
    for (auto& s : scores) s = static_cast<double>(rng.uniform_index(5));  // many ties
    std::set<NodeId> train, test;
    for (NodeId i = 0; i < m; ++i) {
      const auto r = rng.uniform_index(4);
      if (r == 0) train.insert(i);
      if (r == 1) test.insert(i);
    }
    if (test.empty()) continue;
    const std::size_t k = 1 + rng.uniform_index(m);
    const std::vector<NodeId> excluded(train.begin(), train.end());
    const std::vector<NodeId> test_v(test.begin(), test.end());
    const auto ranked = top_k(scores, excluded, k);
    CHECK(ranked == oracle::brute_ranking(scores, train, k));
    CHECK(recall_at_k(ranked, test_v, k) == oracle::brute_recall(ranked, test));
    CHECK(ndcg_at_k(ranked, test_v, k) == oracle::brute_ndcg(ranked, test, k));
  }
}

TEST_CASE("golden five-user fixture") {
  const auto d = read_fixture(kData + "/golden5");
  REQUIRE(d.num_users == 5);
  REQUIRE(d.num_items == 6);
  const auto g = BipartiteGraph::build(d);
  Eigen::MatrixXd users, items;
  oracle::read_embeddings(kData + "/golden5/embeddings.txt", 5, 6, 2, users, items);
  const ModelSnapshot snap{{users, items}, LayerWeights::mean(0), params(GuideMode::lightgcn_norm, 0, 2)};
  const auto result = evaluate(snap, d, g, 3);

  std::ifstream expected(kData + "/golden5/expected.tsv");
  std::string line;
  std::size_t row = 0;
  while (std::getline(expected, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("user", 0) == 0) continue;
    std::istringstream f(line);
    std::string user, top;
    double recall, ndcg;
    f >> user >> top >> recall >> ndcg;
    if (user == "mean") {
      CHECK(result.mean_recall == doctest::Approx(recall).epsilon(1e-15));
      CHECK(result.mean_ndcg == doctest::Approx(ndcg).epsilon(1e-15));
      continue;
    }
    REQUIRE(row < result.users.size());
    CHECK(result.users[row] == std::stoi(user));
    CHECK(result.recall[row] == doctest::Approx(recall).epsilon(1e-15));
    CHECK(result.ndcg[row] == doctest::Approx(ndcg).epsilon(1e-15));
    std::string ranked;
    for (NodeId i : rank_items(result.users[row], snap, g, 3)) {
      ranked += (ranked.empty() ? "" : ",") + std::to_string(i);
    }
    CHECK(ranked == top);
    ++row;
  }
  CHECK(row == 4);  // user 4 has no test items
  CHECK(result.users.size() == 4);
}

TEST_CASE("lightgcn_norm ranking equals dense-oracle ranking") {
  const auto d = generate_synthetic(20, 16, 2, 0.5, 0.1, 3);
  const auto g = BipartiteGraph::build(d);
  const auto t = init_embeddings(20, 16, 6, 2);
  const ModelSnapshot snap{t, LayerWeights::mean(2), params(GuideMode::lightgcn_norm, 2, 6)};
  const Eigen::MatrixXd star =
      oracle::dense_lightgcn(d, t.users, t.items, 2, snap.beta.beta());
  for (NodeId u = 0; u < 20; ++u) {
    std::vector<double> scores(16);
    for (NodeId i = 0; i < 16; ++i) scores[i] = star.row(u).dot(star.row(20 + i));
    const auto adj = g.neighbors(user_node(u));
    CHECK(rank_items(u, snap, g, 5) ==
          oracle::brute_ranking(scores, std::set<NodeId>(adj.begin(), adj.end()), 5));
  }
}

TEST_CASE("batched scorer equals per-pair scoring in every mode") {
  const auto d = generate_synthetic(14, 12, 2, 0.5, 0.15, 5);
  const auto g = BipartiteGraph::build(d);
  const auto t = init_embeddings(14, 12, 5, 6);
  std::vector<NodeId> users(14);
  std::iota(users.begin(), users.end(), 0);
  for (GuideMode mode : {GuideMode::lightgcn_norm, GuideMode::self_guided, GuideMode::interactive}) {
    for (int layers : {0, 1, 3}) {
      for (bool exclude : {false, true}) {
        CAPTURE(to_string(mode));
        CAPTURE(layers);
        CAPTURE(exclude);
        auto hp = params(mode, layers, 5);
        hp.exclude_target = exclude;
        auto beta = LayerWeights::learned(layers);
        for (Eigen::Index k = 0; k < beta.size(); ++k) beta.logits()[k] = 0.2 * k;
        const ModelSnapshot snap{t, beta, hp};
        const RowMatrixXd scores = Scorer(snap, g).score_users(users);
        double worst = 0.0;
        for (NodeId u = 0; u < 14; ++u) {
          for (NodeId i = 0; i < 12; ++i) {
            worst = std::max(worst, std::abs(scores(u, i) - score_pair(u, i, t, beta, g, hp)));
          }
        }
        CHECK(worst < 1e-12);
      }
    }
  }
}

TEST_CASE("metrics are invariant under item relabelling") {
  const auto d = generate_synthetic(30, 24, 3, 0.5, 0.1, 12);
  const auto t = init_embeddings(30, 24, 6, 1);
  std::vector<NodeId> perm(24);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(3);
  rng.shuffle(std::span<NodeId>(perm));

  InteractionDataset p = d;
  for (auto* edges : {&p.train_edges, &p.test_edges}) {
    for (Edge& e : *edges) e.item = perm[e.item];
    std::sort(edges->begin(), edges->end());
  }
  EmbeddingTable tp = t;
  for (NodeId i = 0; i < 24; ++i) tp.items.row(perm[i]) = t.items.row(i);

  for (GuideMode mode : {GuideMode::lightgcn_norm, GuideMode::interactive}) {
    const auto hp = params(mode, 2, 6);
    const auto a = evaluate({t, LayerWeights::mean(2), hp}, d, BipartiteGraph::build(d), 5);
    const auto b = evaluate({tp, LayerWeights::mean(2), hp}, p, BipartiteGraph::build(p), 5);
    CHECK(a.mean_recall == doctest::Approx(b.mean_recall).epsilon(1e-14));
    CHECK(a.mean_ndcg == doctest::Approx(b.mean_ndcg).epsilon(1e-14));
    for (std::size_t k = 0; k < a.users.size(); ++k) {
      CHECK(a.recall[k] >= 0.0);
      CHECK(a.recall[k] <= 1.0);
      CHECK(a.ndcg[k] >= 0.0);
      CHECK(a.ndcg[k] <= 1.0);
    }
  }
}

TEST_CASE("a model that scores the test items highest is perfect") {
  const auto d = generate_synthetic(40, 40, 2, 0.4, 0.05, 2);
  const auto g = BipartiteGraph::build(d);
  RowMatrixXd scores = RowMatrixXd::Zero(40, 40);
  for (const Edge& e : d.test_edges) scores(e.user, e.item) = 1.0;
  const auto r = evaluate_scores(scores, d, g, 20);
  CHECK(r.mean_recall == 1.0);
  CHECK(r.mean_ndcg == 1.0);
}

} // TEST_SUITE
