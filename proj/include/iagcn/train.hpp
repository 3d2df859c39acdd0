#ifndef IAGCN_TRAIN_HPP
#define IAGCN_TRAIN_HPP

#include "iagcn/eval.hpp"
#include "iagcn/grad.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace iagcn {

/// One uniformly drawn unobserved item per user, by rejection.
std::vector<NodeId> sample_negatives(const BipartiteGraph& graph, std::span<const NodeId> users,
                                     Rng& rng);

/// mean softplus(-(pos - neg)) + lambda * mean(reg)
double bpr_batch_loss(std::span<const double> scores_pos, std::span<const double> scores_neg,
                      std::span<const double> reg_terms, double lambda);

/// Adam moments shaped like the parameters. Rows the gradient never touches
/// keep their moments (lazy sparse update).
struct AdamState {
  RowMatrixXd m_users, v_users;
  RowMatrixXd m_items, v_items;
  Eigen::VectorXd m_beta, v_beta;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState zeros(const EmbeddingTable& table, const LayerWeights& beta);
};

void adam_step(EmbeddingTable& table, LayerWeights& beta, const GradientBuffer& grads,
               AdamState& state, double lr);

struct TrainSchedule {
  int batch_size = 1024;
  int epochs = 1000;
  int eval_every = 10;
  /// Evaluations without Recall improvement before stopping.
  int patience = 5;
  std::uint64_t seed = 2024;
  /// Fixed gradient chunking, so results do not depend on the thread count.
  bool deterministic = true;
  std::size_t k_cut = 20;
};

struct EvalRecord {
  int epoch = 0;
  double loss = 0.0;
  double recall = 0.0;
  double ndcg = 0.0;
  double wall_seconds = 0.0;
};

/// Tab-separated: epoch, loss, recall, ndcg, wall seconds. Deterministic runs
/// write 0 for the wall time so repeated runs compare byte for byte.
std::string format_metrics_line(const EvalRecord& record, bool deterministic);

struct TrainResult {
  ModelSnapshot best;
  std::vector<EvalRecord> log;
  int best_epoch = 0;
  double best_recall = -1.0;
  int epochs_run = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

using EvalCallback = std::function<void(const EvalRecord&)>;

/// BPR training with Adam and early stopping on the test-split Recall@k.
TrainResult train(const InteractionDataset& data, const Hyperparams& hp,
                  const TrainSchedule& schedule, const EvalCallback& on_eval = {});

/// Mean triplet loss of fixed triplets, without updating anything.
double mean_triplet_loss(const BipartiteGraph& graph, std::span<const Triplet> triplets,
                         const EmbeddingTable& table, const LayerWeights& beta,
                         const Hyperparams& hp, std::uint64_t seed);

/// Averaged gradient of a batch, accumulated over a fixed number of chunks
/// and reduced in chunk order.
double batch_gradient(const BipartiteGraph& graph, std::span<const Triplet> batch,
                      const EmbeddingTable& table, const LayerWeights& beta,
                      const Hyperparams& hp, std::uint64_t tree_seed, int chunks,
                      GradientBuffer& out);

} // namespace iagcn

#endif // IAGCN_TRAIN_HPP
