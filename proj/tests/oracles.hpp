// Independent reference computations for the tests. Nothing here calls the
// library's propagation, ranking or gradient code; only plain data types are
// shared.
#ifndef IAGCN_TESTS_ORACLES_HPP
#define IAGCN_TESTS_ORACLES_HPP

#include "iagcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

using iagcn::Edge;
using iagcn::InteractionDataset;
using iagcn::NodeId;

/// Dense LightGCN: E^{k+1} = D^-1/2 A D^-1/2 E^k over the joint user+item
/// node set, e* = sum_k beta_k E^k. Returns the (n+m) x d matrix of e*.
inline Eigen::MatrixXd dense_lightgcn(const InteractionDataset& data, const Eigen::MatrixXd& users,
                                      const Eigen::MatrixXd& items, int layers,
                                      const Eigen::VectorXd& beta) {
  const Eigen::Index n = data.num_users;
  const Eigen::Index total = n + data.num_items;
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(total, total);
  for (const Edge& e : data.train_edges) {
    adj(e.user, n + e.item) = 1.0;
    adj(n + e.item, e.user) = 1.0;
  }
  const Eigen::VectorXd deg = adj.rowwise().sum();
  Eigen::VectorXd isd(total);
  for (Eigen::Index k = 0; k < total; ++k) {
    isd[k] = deg[k] > 0 ? 1.0 / std::sqrt(deg[k]) : 0.0;
  }
  const Eigen::MatrixXd norm = isd.asDiagonal() * adj * isd.asDiagonal();
  Eigen::MatrixXd layer(total, users.cols());
  layer << users, items;
  Eigen::MatrixXd out = beta[0] * layer;
  for (int k = 1; k <= layers; ++k) {
    layer = norm * layer;
    out += beta[k] * layer;
  }
  return out;
}

/// Adjacency as ordered sets, built straight from the edge list.
struct Adjacency {
  std::vector<std::set<NodeId>> user_items;
  std::vector<std::set<NodeId>> item_users;

  explicit Adjacency(const InteractionDataset& data)
      : user_items(data.num_users), item_users(data.num_items) {
    for (const Edge& e : data.train_edges) {
      user_items[e.user].insert(e.item);
      item_users[e.item].insert(e.user);
    }
  }
};

enum class Weighting { lightgcn, attention };

/// Order-k feature of a root by enumerating every length-k walk and summing
/// (product of edge weights) * e0(endpoint). Attention weights at a node p
/// are exp(<g, e0_c>/tau) / sum over neighbours of p.
class WalkEnumerator {
public:
  WalkEnumerator(const InteractionDataset& data, const Eigen::MatrixXd& users,
                 const Eigen::MatrixXd& items)
      : adj_(data), users_(users), items_(items) {}

  /// Row k = order-k feature, k = 0..layers.
  Eigen::MatrixXd layers(bool root_is_user, NodeId root, int layers, Weighting weighting,
                         const Eigen::VectorXd& guide, double tau) const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(layers + 1, users_.cols());
    for (int k = 0; k <= layers; ++k) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(users_.cols());
      walk(root_is_user, root, k, 1.0, weighting, guide, tau, acc);
      out.row(k) = acc.transpose();
    }
    return out;
  }

private:
  const std::set<NodeId>& nbrs(bool is_user, NodeId n) const {
    return is_user ? adj_.user_items[n] : adj_.item_users[n];
  }
  Eigen::VectorXd emb(bool is_user, NodeId n) const {
    return is_user ? Eigen::VectorXd(users_.row(n).transpose())
                   : Eigen::VectorXd(items_.row(n).transpose());
  }

  void walk(bool is_user, NodeId node, int remaining, double weight, Weighting weighting,
            const Eigen::VectorXd& guide, double tau, Eigen::VectorXd& acc) const {
    if (remaining == 0) {
      acc += weight * emb(is_user, node);
      return;
    }
    const auto& next = nbrs(is_user, node);
    double z = 0.0;
    if (weighting == Weighting::attention) {
      for (NodeId c : next) {
        z += std::exp(guide.dot(emb(!is_user, c)) / tau);
      }
    }
    for (NodeId c : next) {
      double w;
      if (weighting == Weighting::lightgcn) {
        w = 1.0 / std::sqrt(static_cast<double>(next.size()) *
                            static_cast<double>(nbrs(!is_user, c).size()));
      } else {
        w = std::exp(guide.dot(emb(!is_user, c)) / tau) / z;
      }
      walk(!is_user, c, remaining - 1, weight * w, weighting, guide, tau, acc);
    }
  }

  Adjacency adj_;
  Eigen::MatrixXd users_;
  Eigen::MatrixXd items_;
};

/// Full sort of (score desc, id asc) over the non-excluded items.
inline std::vector<NodeId> brute_ranking(const std::vector<double>& scores,
                                         const std::set<NodeId>& excluded, std::size_t k) {
  std::vector<std::pair<double, NodeId>> all;
  for (NodeId i = 0; i < static_cast<NodeId>(scores.size()); ++i) {
    if (!excluded.count(i)) {
      all.push_back({-scores[i], i});
    }
  }
  std::sort(all.begin(), all.end());
  std::vector<NodeId> out;
  for (std::size_t r = 0; r < all.size() && r < k; ++r) {
    out.push_back(all[r].second);
  }
  return out;
}

inline double brute_recall(const std::vector<NodeId>& ranked, const std::set<NodeId>& test) {
  std::set<NodeId> top(ranked.begin(), ranked.end());
  std::vector<NodeId> both;
  std::set_intersection(top.begin(), top.end(), test.begin(), test.end(),
                        std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(test.size());
}

inline double brute_ndcg(const std::vector<NodeId>& ranked, const std::set<NodeId>& test,
                         std::size_t k) {
  double dcg = 0.0;
  for (std::size_t r = 0; r < ranked.size() && r < k; ++r) {
    if (test.count(ranked[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(test.size(), k); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

/// Reads "user|item <index> <values...>" lines into fixed-size matrices.
inline void read_embeddings(const std::string& path, NodeId users, NodeId items, int dim,
                            Eigen::MatrixXd& user_out, Eigen::MatrixXd& item_out) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("missing fixture " + path);
  }
  user_out = Eigen::MatrixXd::Zero(users, dim);
  item_out = Eigen::MatrixXd::Zero(items, dim);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') {
      continue;
    }
    std::istringstream fields(line);
    std::string side;
    NodeId index;
    fields >> side >> index;
    Eigen::MatrixXd& target = side == "user" ? user_out : item_out;
    for (int c = 0; c < dim; ++c) {
      fields >> target(index, c);
    }
  }
}

} // namespace oracle

#endif // IAGCN_TESTS_ORACLES_HPP
