#include "iagcn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace iagcn {

std::vector<NodeId> sample_negatives(const BipartiteGraph& graph, std::span<const NodeId> users,
                                     Rng& rng) {
  const auto m = static_cast<std::uint64_t>(graph.num_items());
  std::vector<NodeId> out;
  out.reserve(users.size());
  for (NodeId u : users) {
    if (graph.degree(user_node(u)) >= m) {
      throw std::invalid_argument("user " + std::to_string(u) + " has no unobserved item");
    }
    NodeId item;
    do {
      item = static_cast<NodeId>(rng.uniform_index(m));
    } while (graph.has_edge(u, item));
    out.push_back(item);
  }
  return out;
}

double bpr_batch_loss(std::span<const double> scores_pos, std::span<const double> scores_neg,
                      std::span<const double> reg_terms, double lambda) {
  if (scores_pos.empty() || scores_pos.size() != scores_neg.size() ||
      reg_terms.size() != scores_pos.size()) {
    throw std::invalid_argument("bpr_batch_loss needs equal, non-empty inputs");
  }
  double loss = 0.0;
  double reg = 0.0;
  for (std::size_t k = 0; k < scores_pos.size(); ++k) {
    const double x = -(scores_pos[k] - scores_neg[k]);
    loss += x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    reg += reg_terms[k];
  }
  const auto n = static_cast<double>(scores_pos.size());
  return loss / n + lambda * reg / n;
}

AdamState AdamState::zeros(const EmbeddingTable& table, const LayerWeights& beta) {
  AdamState s;
  s.m_users = RowMatrixXd::Zero(table.users.rows(), table.users.cols());
  s.v_users = s.m_users;
  s.m_items = RowMatrixXd::Zero(table.items.rows(), table.items.cols());
  s.v_items = s.m_items;
  s.m_beta = Eigen::VectorXd::Zero(beta.size());
  s.v_beta = s.m_beta;
  return s;
}

void adam_step(EmbeddingTable& table, LayerWeights& beta, const GradientBuffer& grads,
               AdamState& state, double lr) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double eps = state.epsilon;

  auto update_rows = [&](RowMatrixXd& param, RowMatrixXd& m, RowMatrixXd& v,
                         const SparseRowGrad& g) {
    for (NodeId r : g.touched()) {
      const auto grad = g.row(r).array();
      m.row(r).array() = b1 * m.row(r).array() + (1.0 - b1) * grad;
      v.row(r).array() = b2 * v.row(r).array() + (1.0 - b2) * grad.square();
      param.row(r).array() -=
          lr * (m.row(r).array() / bc1) / ((v.row(r).array() / bc2).sqrt() + eps);
    }
  };
  update_rows(table.users, state.m_users, state.v_users, grads.users);
  update_rows(table.items, state.m_items, state.v_items, grads.items);

  if (beta.trainable()) {
    const auto g = grads.beta_logits.array();
    state.m_beta.array() = b1 * state.m_beta.array() + (1.0 - b1) * g;
    state.v_beta.array() = b2 * state.v_beta.array() + (1.0 - b2) * g.square();
    beta.logits().array() -=
        lr * (state.m_beta.array() / bc1) / ((state.v_beta.array() / bc2).sqrt() + eps);
  }
}

std::string format_metrics_line(const EvalRecord& record, bool deterministic) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.9f\t%.6f\t%.6f\t%.3f", record.epoch, record.loss,
                record.recall, record.ndcg, deterministic ? 0.0 : record.wall_seconds);
  return buf;
}

namespace {

struct ChunkWorkspace {
  GradientBuffer grad;
  std::unique_ptr<ExpansionScratch> scratch;
  TripletTape tape;
};

// Chunk buffers live across batches; they are sized on first use.
std::vector<ChunkWorkspace>& workspaces(const BipartiteGraph& graph, Eigen::Index dim,
                                        Eigen::Index num_beta, int chunks) {
  thread_local std::vector<ChunkWorkspace> ws;
  thread_local const BipartiteGraph* owner = nullptr;
  thread_local Eigen::Index owner_dim = 0;
  if (owner != &graph || owner_dim != dim || static_cast<int>(ws.size()) != chunks ||
      (chunks > 0 && ws[0].grad.beta_logits.size() != num_beta)) {
    ws.clear();
    ws.resize(chunks);
    for (auto& w : ws) {
      w.grad = GradientBuffer(graph.num_users(), graph.num_items(), dim, num_beta);
      w.scratch = std::make_unique<ExpansionScratch>(graph);
    }
    owner = &graph;
    owner_dim = dim;
  }
  return ws;
}

} // namespace

double batch_gradient(const BipartiteGraph& graph, std::span<const Triplet> batch,
                      const EmbeddingTable& table, const LayerWeights& beta,
                      const Hyperparams& hp, std::uint64_t tree_seed, int chunks,
                      GradientBuffer& out) {
  chunks = std::max(1, std::min<int>(chunks, static_cast<int>(batch.size())));
  auto& ws = workspaces(graph, table.dim(), beta.size(), chunks);
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::vector<double> chunk_loss(chunks, 0.0);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < chunks; ++c) {
    ChunkWorkspace& w = ws[c];
    w.grad.clear();
    const std::size_t begin = batch.size() * c / chunks;
    const std::size_t end = batch.size() * (c + 1) / chunks;
    try {
      for (std::size_t k = begin; k < end; ++k) {
        std::optional<Rng> rng;
        if (hp.fanout != kFullFanout) {
          rng.emplace(tree_seed, k);
        }
        const TripletTrees trees =
            build_triplet_trees(graph, batch[k], hp, rng ? &*rng : nullptr, w.scratch.get());
        forward_triplet(w.tape, batch[k], trees, table, beta, graph, hp);
        chunk_loss[c] += triplet_loss(w.tape, hp);
        backward_triplet(w.tape, table, beta, hp, scale, w.grad);
      }
    } catch (...) {
#pragma omp critical
      if (!failure) {
        failure = std::current_exception();
      }
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }

  out.clear();
  double loss = 0.0;
  for (int c = 0; c < chunks; ++c) {
    out.merge(ws[c].grad);
    loss += chunk_loss[c];
  }
  return loss * scale;
}

double mean_triplet_loss(const BipartiteGraph& graph, std::span<const Triplet> triplets,
                         const EmbeddingTable& table, const LayerWeights& beta,
                         const Hyperparams& hp, std::uint64_t seed) {
  ExpansionScratch scratch(graph);
  TripletTape tape;
  double loss = 0.0;
  for (std::size_t k = 0; k < triplets.size(); ++k) {
    std::optional<Rng> rng;
    if (hp.fanout != kFullFanout) {
      rng.emplace(seed, k);
    }
    const TripletTrees trees = build_triplet_trees(graph, triplets[k], hp, rng ? &*rng : nullptr, &scratch);
    forward_triplet(tape, triplets[k], trees, table, beta, graph, hp);
    loss += triplet_loss(tape, hp);
  }
  return loss / static_cast<double>(triplets.size());
}

namespace {

int gradient_chunks(bool deterministic) {
  constexpr int kFixedChunks = 16;
  if (deterministic) {
    return kFixedChunks;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

std::string divergence_report(int epoch, std::size_t batch, double loss,
                              const EmbeddingTable& table, const LayerWeights& beta) {
  std::ostringstream msg;
  msg << "non-finite loss " << loss << " at epoch " << epoch << ", batch " << batch
      << "; max |user emb| " << table.users.cwiseAbs().maxCoeff() << ", max |item emb| "
      << table.items.cwiseAbs().maxCoeff() << ", beta [" << beta.beta().transpose() << "]";
  return msg.str();
}

} // namespace

TrainResult train(const InteractionDataset& data, const Hyperparams& hp,
                  const TrainSchedule& schedule, const EvalCallback& on_eval) {
  hp.validate();
  if (schedule.batch_size < 1 || schedule.epochs < 1 || schedule.eval_every < 1 ||
      schedule.patience < 1) {
    throw std::invalid_argument("batch size, epochs, eval interval and patience must be positive");
  }
  const BipartiteGraph graph = BipartiteGraph::build(data);
  if (graph.num_edges() == 0) {
    throw std::invalid_argument("no training interactions");
  }

  EmbeddingTable table =
      init_embeddings(data.num_users, data.num_items, hp.embedding_dim, schedule.seed);
  LayerWeights beta = hp.beta_mode == BetaMode::learned ? LayerWeights::learned(hp.num_layers)
                                                        : LayerWeights::mean(hp.num_layers);
  AdamState adam = AdamState::zeros(table, beta);
  GradientBuffer grads(data.num_users, data.num_items, hp.embedding_dim, beta.size());
  const int chunks = gradient_chunks(schedule.deterministic);

  Rng order_rng(schedule.seed, 1);
  std::vector<std::size_t> order(data.train_edges.size());
  std::vector<NodeId> users(order.size());
  std::vector<Triplet> triplets(order.size());

  TrainResult result;
  int stale = 0;
  const auto start = std::chrono::steady_clock::now();
  for (int epoch = 1; epoch <= schedule.epochs; ++epoch) {
    for (std::size_t k = 0; k < order.size(); ++k) {
      order[k] = k;
    }
    order_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t k = 0; k < order.size(); ++k) {
      users[k] = data.train_edges[order[k]].user;
    }
    const auto negatives = sample_negatives(graph, users, order_rng);
    for (std::size_t k = 0; k < order.size(); ++k) {
      triplets[k] = {users[k], data.train_edges[order[k]].item, negatives[k]};
    }

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < triplets.size(); begin += schedule.batch_size, ++batch_index) {
      const std::size_t len = std::min<std::size_t>(schedule.batch_size, triplets.size() - begin);
      const auto batch = std::span<const Triplet>(triplets).subspan(begin, len);
      const std::uint64_t tree_seed = schedule.seed ^ (0x5bd1e995ULL * (static_cast<std::uint64_t>(epoch) << 20 | batch_index));
      double loss;
      try {
        loss = batch_gradient(graph, batch, table, beta, hp, tree_seed, chunks, grads);
      } catch (const std::domain_error& e) {
        throw TrainingDiverged(std::string(e.what()) + "; " +
                               divergence_report(epoch, batch_index, NAN, table, beta));
      }
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(divergence_report(epoch, batch_index, loss, table, beta));
      }
      epoch_loss += loss * static_cast<double>(len);
      adam_step(table, beta, grads, adam, hp.learning_rate);
    }
    epoch_loss /= static_cast<double>(triplets.size());
    result.epochs_run = epoch;

    if (epoch % schedule.eval_every != 0 && epoch != schedule.epochs) {
      continue;
    }
    ModelSnapshot snap{table, beta, hp};
    const RankingResult metrics = evaluate(snap, data, graph, schedule.k_cut);
    EvalRecord record;
    record.epoch = epoch;
    record.loss = epoch_loss;
    record.recall = metrics.mean_recall;
    record.ndcg = metrics.mean_ndcg;
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(record);
    if (on_eval) {
      on_eval(record);
    }
    if (metrics.mean_recall > result.best_recall) {
      result.best_recall = metrics.mean_recall;
      result.best_epoch = epoch;
      result.best = std::move(snap);
      stale = 0;
    } else if (++stale >= schedule.patience) {
      break;
    }
  }
  return result;
}

} // namespace iagcn
