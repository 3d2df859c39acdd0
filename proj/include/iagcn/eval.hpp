#ifndef IAGCN_EVAL_HPP
#define IAGCN_EVAL_HPP

#include "iagcn/model.hpp"

#include <span>
#include <vector>

namespace iagcn {

/// Frozen parameters plus the settings that interpret them.
struct ModelSnapshot {
  EmbeddingTable table;
  LayerWeights beta;
  Hyperparams hp;
};

/// Per-user top-K metrics. Users without test items are not listed.
struct RankingResult {
  std::vector<NodeId> users;
  std::vector<double> recall;
  std::vector<double> ndcg;
  double mean_recall = 0.0;
  double mean_ndcg = 0.0;
};

/// Highest `k` scores by (score desc, item id asc), skipping `excluded`
/// (sorted ascending).
std::vector<NodeId> top_k(std::span<const double> scores, std::span<const NodeId> excluded,
                          std::size_t k);

/// |top-k ∩ test| / |test|
double recall_at_k(std::span<const NodeId> ranked, std::span<const NodeId> test_items,
                   std::size_t k);

/// Binary-relevance DCG@k over the ideal DCG of min(|test|, k) hits.
double ndcg_at_k(std::span<const NodeId> ranked, std::span<const NodeId> test_items,
                 std::size_t k);

/// Full-expansion scores of users against every item.
///
/// lightgcn_norm and self_guided representations do not depend on the
/// target, so they are computed once per node. Interactive mode evaluates
/// each user tree under every candidate item (and each item tree under
/// every user) by batching the guide similarities into matrix products.
class Scorer {
public:
  Scorer(const ModelSnapshot& snapshot, const BipartiteGraph& graph);

  /// Row r holds the scores of users[r] against items 0..m-1.
  RowMatrixXd score_users(std::span<const NodeId> users) const;

  /// Target-free e* for every user/item (not available in interactive mode).
  const RowMatrixXd& user_reps() const { return user_star_; }
  const RowMatrixXd& item_reps() const { return item_star_; }

private:
  RowMatrixXd interactive_scores(std::span<const NodeId> users) const;
  RowMatrixXd pairwise_scores(std::span<const NodeId> users) const;

  const ModelSnapshot& snap_;
  const BipartiteGraph& graph_;
  Eigen::VectorXd beta_;
  RowMatrixXd user_star_;
  RowMatrixXd item_star_;
};

/// Top `k_cut` un-interacted items for one user.
std::vector<NodeId> rank_items(NodeId user, const ModelSnapshot& snapshot,
                               const BipartiteGraph& graph, std::size_t k_cut);

/// Metrics from an explicit score matrix (num_users x num_items).
RankingResult evaluate_scores(const RowMatrixXd& scores, const InteractionDataset& data,
                              const BipartiteGraph& graph, std::size_t k_cut = 20);

/// Macro-averaged Recall@k_cut and NDCG@k_cut over users with test items.
RankingResult evaluate(const ModelSnapshot& snapshot, const InteractionDataset& data,
                       const BipartiteGraph& graph, std::size_t k_cut = 20);

} // namespace iagcn

#endif // IAGCN_EVAL_HPP
