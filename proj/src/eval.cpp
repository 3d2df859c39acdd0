#include "iagcn/eval.hpp"

#include "iagcn/propagation.hpp"

#include <algorithm>
#include <cmath>

namespace iagcn {

std::vector<NodeId> top_k(std::span<const double> scores, std::span<const NodeId> excluded,
                          std::size_t k) {
  std::vector<NodeId> candidates;
  candidates.reserve(scores.size());
  auto skip = excluded.begin();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto id = static_cast<NodeId>(i);
    while (skip != excluded.end() && *skip < id) {
      ++skip;
    }
    if (skip != excluded.end() && *skip == id) {
      continue;
    }
    candidates.push_back(id);
  }
  const auto better = [&](NodeId a, NodeId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  const std::size_t n = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  candidates.resize(n);
  return candidates;
}

namespace {

bool contains(std::span<const NodeId> sorted, NodeId x) {
  return std::binary_search(sorted.begin(), sorted.end(), x);
}

std::vector<NodeId> sorted_copy(std::span<const NodeId> v) {
  std::vector<NodeId> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

} // namespace

double recall_at_k(std::span<const NodeId> ranked, std::span<const NodeId> test_items,
                   std::size_t k) {
  if (k == 0) {
    throw std::invalid_argument("cutoff must be at least 1");
  }
  if (test_items.empty()) {
    return 0.0;
  }
  const auto test = sorted_copy(test_items);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    hits += contains(test, ranked[r]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double ndcg_at_k(std::span<const NodeId> ranked, std::span<const NodeId> test_items,
                 std::size_t k) {
  if (k == 0) {
    throw std::invalid_argument("cutoff must be at least 1");
  }
  if (test_items.empty()) {
    return 0.0;
  }
  const auto test = sorted_copy(test_items);
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
    if (contains(test, ranked[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, test.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

namespace {

Hyperparams full_expansion(Hyperparams hp) {
  hp.fanout = kFullFanout;
  return hp;
}

// Conditional e* of the tree root under each guide (one guide embedding per
// row of `guides`). Equivalent to one TreePass per guide.
RowMatrixXd guided_reps(const SampledTree& tree, const RowMatrixXd& guides,
                        const EmbeddingTable& table, const Eigen::VectorXd& beta, double tau) {
  const int depth = tree.depth;
  std::vector<Eigen::Index> offset(depth + 2, 0);
  for (int j = 1; j <= depth; ++j) {
    offset[j + 1] = offset[j] + static_cast<Eigen::Index>(tree.levels[j].size());
  }
  const Eigen::Index slots = offset[depth + 1];
  RowMatrixXd out(guides.rows(), table.dim());
  out.rowwise() = beta[0] * table.row(tree.root);
  if (slots == 0) {
    return out;
  }

  RowMatrixXd slot_rows(slots, table.dim());
  for (int j = 1; j <= depth; ++j) {
    const TreeLevel& level = tree.levels[j];
    for (std::size_t s = 0; s < level.size(); ++s) {
      slot_rows.row(offset[j] + static_cast<Eigen::Index>(s)) = table.side(level.side).row(level.nodes[s]);
    }
  }
  RowMatrixXd mass = (guides * slot_rows.transpose()) / tau; // logits, overwritten by masses
  std::vector<double> weights;
  std::vector<double> up;
  std::vector<double> down;
  for (Eigen::Index g = 0; g < guides.rows(); ++g) {
    up.assign(1, 1.0);
    for (int j = 0; j < depth; ++j) {
      const TreeLevel& parent = tree.levels[j];
      const auto size = static_cast<std::size_t>(offset[j + 2] - offset[j + 1]);
      double* seg = mass.row(g).data() + offset[j + 1];
      softmax_level(parent, std::span<const double>(seg, size), weights);
      down.assign(size, 0.0);
      for (std::size_t p = 0; p < parent.size(); ++p) {
        for (auto e = parent.child_offsets[p]; e < parent.child_offsets[p + 1]; ++e) {
          down[parent.children[e]] += up[p] * weights[e];
        }
      }
      for (std::size_t c = 0; c < size; ++c) {
        seg[c] = beta[j + 1] * down[c];
      }
      up.swap(down);
    }
  }
  out.noalias() += mass * slot_rows;
  return out;
}

} // namespace

Scorer::Scorer(const ModelSnapshot& snapshot, const BipartiteGraph& graph)
    : snap_(snapshot), graph_(graph), beta_(snapshot.beta.beta()) {
  const Hyperparams hp = full_expansion(snap_.hp);
  if (target_dependent(hp.guide_mode) || hp.exclude_target) {
    return;
  }
  user_star_.resize(graph.num_users(), snap_.table.dim());
  item_star_.resize(graph.num_items(), snap_.table.dim());
  for (Side side : {Side::user, Side::item}) {
    RowMatrixXd& star = side == Side::user ? user_star_ : item_star_;
#pragma omp parallel
    {
      ExpansionScratch scratch(graph);
      TreePass pass;
#pragma omp for schedule(dynamic, 16)
      for (NodeId v = 0; v < graph.num_nodes(side); ++v) {
        const SampledTree tree = expand_merged(graph, {side, v}, hp.num_layers, scratch);
        forward_pass(pass, tree, {opposite(side), 0}, snap_.table, graph, hp);
        star.row(v) = beta_.transpose() * pass.layers;
      }
    }
  }
}

RowMatrixXd Scorer::score_users(std::span<const NodeId> users) const {
  if (user_star_.size() > 0) {
    RowMatrixXd rows(static_cast<Eigen::Index>(users.size()), user_star_.cols());
    for (std::size_t r = 0; r < users.size(); ++r) {
      rows.row(static_cast<Eigen::Index>(r)) = user_star_.row(users[r]);
    }
    return rows * item_star_.transpose();
  }
  if (snap_.hp.exclude_target) {
    return pairwise_scores(users);
  }
  return interactive_scores(users);
}

RowMatrixXd Scorer::interactive_scores(std::span<const NodeId> users) const {
  const Hyperparams hp = full_expansion(snap_.hp);
  const auto& table = snap_.table;
  const auto n_users = static_cast<Eigen::Index>(users.size());
  const NodeId n_items = graph_.num_items();

  // e*_u|i for every candidate item, one matrix per user.
  std::vector<RowMatrixXd> user_side(users.size());
#pragma omp parallel
  {
    ExpansionScratch scratch(graph_);
#pragma omp for schedule(dynamic, 4)
    for (Eigen::Index r = 0; r < n_users; ++r) {
      const SampledTree tree = expand_merged(graph_, user_node(users[r]), hp.num_layers, scratch);
      user_side[r] = guided_reps(tree, table.items, table, beta_, hp.temperature);
    }
  }

  RowMatrixXd guide_users(n_users, table.dim());
  for (Eigen::Index r = 0; r < n_users; ++r) {
    guide_users.row(r) = table.users.row(users[r]);
  }
  RowMatrixXd scores(n_users, n_items);
#pragma omp parallel
  {
    ExpansionScratch scratch(graph_);
#pragma omp for schedule(dynamic, 4)
    for (NodeId i = 0; i < n_items; ++i) {
      const SampledTree tree = expand_merged(graph_, item_node(i), hp.num_layers, scratch);
      const RowMatrixXd item_side = guided_reps(tree, guide_users, table, beta_, hp.temperature);
      for (Eigen::Index r = 0; r < n_users; ++r) {
        scores(r, i) = user_side[r].row(i).dot(item_side.row(r));
      }
    }
  }
  return scores;
}

RowMatrixXd Scorer::pairwise_scores(std::span<const NodeId> users) const {
  const Hyperparams hp = full_expansion(snap_.hp);
  const auto n_users = static_cast<Eigen::Index>(users.size());
  RowMatrixXd scores(n_users, graph_.num_items());
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index r = 0; r < n_users; ++r) {
    for (NodeId i = 0; i < graph_.num_items(); ++i) {
      scores(r, i) = score_pair(users[r], i, snap_.table, snap_.beta, graph_, hp);
    }
  }
  return scores;
}

std::vector<NodeId> rank_items(NodeId user, const ModelSnapshot& snapshot,
                               const BipartiteGraph& graph, std::size_t k_cut) {
  const Scorer scorer(snapshot, graph);
  const NodeId one[] = {user};
  const RowMatrixXd scores = scorer.score_users(one);
  return top_k(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.cols())),
               graph.neighbors(user_node(user)), k_cut);
}

namespace {

std::vector<std::vector<NodeId>> test_items_by_user(const InteractionDataset& data) {
  std::vector<std::vector<NodeId>> test(data.num_users);
  for (const Edge& e : data.test_edges) {
    test[e.user].push_back(e.item);
  }
  return test;
}

void finish(RankingResult& result) {
  const auto n = static_cast<double>(result.users.size());
  double r = 0.0;
  double g = 0.0;
  for (std::size_t k = 0; k < result.users.size(); ++k) {
    r += result.recall[k];
    g += result.ndcg[k];
  }
  result.mean_recall = result.users.empty() ? 0.0 : r / n;
  result.mean_ndcg = result.users.empty() ? 0.0 : g / n;
}

void score_block(RankingResult& result, std::span<const NodeId> users, const RowMatrixXd& scores,
                 const std::vector<std::vector<NodeId>>& test, const BipartiteGraph& graph,
                 std::size_t k_cut) {
  for (std::size_t r = 0; r < users.size(); ++r) {
    const NodeId u = users[r];
    const auto row = scores.row(static_cast<Eigen::Index>(r));
    const auto ranked = top_k(std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                              graph.neighbors(user_node(u)), k_cut);
    result.users.push_back(u);
    result.recall.push_back(recall_at_k(ranked, test[u], k_cut));
    result.ndcg.push_back(ndcg_at_k(ranked, test[u], k_cut));
  }
}

} // namespace

RankingResult evaluate_scores(const RowMatrixXd& scores, const InteractionDataset& data,
                              const BipartiteGraph& graph, std::size_t k_cut) {
  const auto test = test_items_by_user(data);
  std::vector<NodeId> users;
  for (NodeId u = 0; u < data.num_users; ++u) {
    if (!test[u].empty()) {
      users.push_back(u);
    }
  }
  RankingResult result;
  RowMatrixXd rows(static_cast<Eigen::Index>(users.size()), scores.cols());
  for (std::size_t r = 0; r < users.size(); ++r) {
    rows.row(static_cast<Eigen::Index>(r)) = scores.row(users[r]);
  }
  score_block(result, users, rows, test, graph, k_cut);
  finish(result);
  return result;
}

RankingResult evaluate(const ModelSnapshot& snapshot, const InteractionDataset& data,
                       const BipartiteGraph& graph, std::size_t k_cut) {
  const auto test = test_items_by_user(data);
  std::vector<NodeId> users;
  for (NodeId u = 0; u < data.num_users; ++u) {
    if (!test[u].empty()) {
      users.push_back(u);
    }
  }
  const Scorer scorer(snapshot, graph);
  // Interactive scoring keeps one (items x d) matrix per user of a block.
  constexpr double kBlockBytes = 256.0 * 1024 * 1024;
  const double per_user =
      8.0 * static_cast<double>(graph.num_items()) * static_cast<double>(snapshot.table.dim());
  const auto block = static_cast<std::size_t>(std::clamp(kBlockBytes / per_user, 1.0, 4096.0));

  RankingResult result;
  for (std::size_t start = 0; start < users.size(); start += block) {
    const auto chunk = std::span<const NodeId>(users).subspan(start, std::min(block, users.size() - start));
    score_block(result, chunk, scorer.score_users(chunk), test, graph, k_cut);
  }
  finish(result);
  return result;
}

} // namespace iagcn
