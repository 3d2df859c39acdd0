#include "iagcn/data.hpp"

#include "iagcn/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace iagcn {

void InteractionDataset::validate() const {
  if (num_users < 0 || num_items < 0) {
    throw std::invalid_argument("negative dataset dimensions");
  }
  auto check_ids = [&](const std::vector<Edge>& edges, const char* name) {
    for (const Edge& e : edges) {
      if (e.user < 0 || e.user >= num_users || e.item < 0 || e.item >= num_items) {
        throw std::invalid_argument(std::string(name) + " edge (" + std::to_string(e.user) +
                                    "," + std::to_string(e.item) + ") out of range");
      }
    }
  };
  check_ids(train_edges, "train");
  check_ids(test_edges, "test");

  std::vector<Edge> train = train_edges;
  std::vector<Edge> test = test_edges;
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  if (std::adjacent_find(train.begin(), train.end()) != train.end()) {
    throw std::invalid_argument("duplicate train edge");
  }
  if (std::adjacent_find(test.begin(), test.end()) != test.end()) {
    throw std::invalid_argument("duplicate test edge");
  }
  std::vector<Edge> both;
  std::set_intersection(train.begin(), train.end(), test.begin(), test.end(),
                        std::back_inserter(both));
  if (!both.empty()) {
    throw std::invalid_argument("edge present in both train and test");
  }
}

namespace {

NodeId parse_id(std::string_view token, std::size_t line) {
  std::int64_t value = 0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && token.front() == '-') {
    throw ParseError(line, "negative id '" + std::string(token) + "'");
  }
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, "not an integer: '" + std::string(token) + "'");
  }
  if (value > INT32_MAX) {
    throw ParseError(line, "id out of range: '" + std::string(token) + "'");
  }
  return static_cast<NodeId>(value);
}

} // namespace

SplitFile parse_split_file(std::istream& in) {
  SplitFile out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::string_view rest(line);
    bool have_user = false;
    NodeId user = 0;
    while (true) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) {
        break;
      }
      rest.remove_prefix(start);
      const auto end = std::min(rest.find_first_of(" \t"), rest.size());
      const NodeId id = parse_id(rest.substr(0, end), line_no);
      rest.remove_prefix(end);
      if (!have_user) {
        user = id;
        have_user = true;
        out.max_user = std::max<std::int64_t>(out.max_user, id);
      } else {
        out.edges.push_back({user, id});
        out.max_item = std::max<std::int64_t>(out.max_item, id);
      }
    }
  }
  return out;
}

std::string serialize_split(const std::vector<Edge>& edges) {
  std::ostringstream out;
  for (std::size_t k = 0; k < edges.size();) {
    const NodeId user = edges[k].user;
    out << user;
    for (; k < edges.size() && edges[k].user == user; ++k) {
      out << ' ' << edges[k].item;
    }
    out << '\n';
  }
  return out.str();
}

void warn_to_stderr(std::string_view message) {
  std::cerr << "warning: " << message << '\n';
}

namespace {

SplitFile read_split(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path.string() + "'");
  }
  try {
    return parse_split_file(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

// Keeps first occurrence order.
std::size_t drop_duplicates(std::vector<Edge>& edges) {
  std::set<Edge> seen;
  const auto before = edges.size();
  std::erase_if(edges, [&](const Edge& e) { return !seen.insert(e).second; });
  return before - edges.size();
}

// Per-user 80/20 split of a user's shuffled edge list.
void split_user_edges(std::vector<Edge>& user_edges, Rng& rng, InteractionDataset& out) {
  rng.shuffle(std::span<Edge>(user_edges));
  const auto n = user_edges.size();
  auto n_test = static_cast<std::size_t>(std::floor(0.2 * static_cast<double>(n) + 0.5));
  if (n > 0 && n_test == n) {
    // Every user with interactions keeps at least one training edge.
    --n_test;
  }
  const auto n_train = n - n_test;
  for (std::size_t k = 0; k < n; ++k) {
    (k < n_train ? out.train_edges : out.test_edges).push_back(user_edges[k]);
  }
}

} // namespace

InteractionDataset load_dataset(const std::filesystem::path& train_path,
                                const std::filesystem::path& test_path,
                                const WarningSink& warn) {
  SplitFile train = read_split(train_path);
  SplitFile test = read_split(test_path);

  if (auto d = drop_duplicates(train.edges); d > 0) {
    warn(std::to_string(d) + " duplicate edge(s) dropped from " + train_path.string());
  }
  if (auto d = drop_duplicates(test.edges); d > 0) {
    warn(std::to_string(d) + " duplicate edge(s) dropped from " + test_path.string());
  }
  if (train.edges.empty()) {
    throw std::runtime_error("training set '" + train_path.string() + "' has no interactions");
  }

  std::set<Edge> train_set(train.edges.begin(), train.edges.end());
  const auto overlap = std::erase_if(test.edges, [&](const Edge& e) { return train_set.contains(e); });
  if (overlap > 0) {
    warn(std::to_string(overlap) + " test edge(s) also present in train removed from test");
  }

  InteractionDataset data;
  data.num_users = static_cast<NodeId>(std::max(train.max_user, test.max_user) + 1);
  data.num_items = static_cast<NodeId>(std::max(train.max_item, test.max_item) + 1);
  data.train_edges = std::move(train.edges);
  data.test_edges = std::move(test.edges);
  data.validate();
  return data;
}

InteractionDataset generate_synthetic(NodeId num_users, NodeId num_items, int num_blocks,
                                      double p_in, double p_out, std::uint64_t seed) {
  if (num_users <= 0 || num_items <= 0 || num_blocks <= 0) {
    throw std::invalid_argument("synthetic graph needs positive users, items and blocks");
  }
  if (num_users % num_blocks != 0 || num_items % num_blocks != 0) {
    throw std::invalid_argument("num_blocks must divide both num_users and num_items");
  }
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0)) {
    throw std::invalid_argument("synthetic probabilities need 0 <= p_out < p_in <= 1");
  }
  const NodeId users_per_block = num_users / num_blocks;
  const NodeId items_per_block = num_items / num_blocks;

  Rng rng(seed);
  InteractionDataset data;
  data.num_users = num_users;
  data.num_items = num_items;
  std::vector<Edge> user_edges;
  for (NodeId u = 0; u < num_users; ++u) {
    user_edges.clear();
    const NodeId block = u / users_per_block;
    for (NodeId i = 0; i < num_items; ++i) {
      const double p = (i / items_per_block == block) ? p_in : p_out;
      if (rng.uniform01() < p) {
        user_edges.push_back({u, i});
      }
    }
    split_user_edges(user_edges, rng, data);
  }
  return data;
}

InteractionDataset subsample_active_users(const InteractionDataset& data, NodeId count,
                                          std::uint64_t seed) {
  std::vector<std::vector<NodeId>> items_of(data.num_users);
  for (const auto* edges : {&data.train_edges, &data.test_edges}) {
    for (const Edge& e : *edges) {
      items_of[e.user].push_back(e.item);
    }
  }
  std::vector<NodeId> users(data.num_users);
  for (NodeId u = 0; u < data.num_users; ++u) {
    users[u] = u;
  }
  std::stable_sort(users.begin(), users.end(), [&](NodeId a, NodeId b) {
    return items_of[a].size() > items_of[b].size();
  });
  users.resize(std::min<std::size_t>(users.size(), static_cast<std::size_t>(count)));
  std::sort(users.begin(), users.end());

  std::unordered_map<NodeId, NodeId> item_label;
  std::vector<NodeId> kept_items;
  for (NodeId u : users) {
    for (NodeId i : items_of[u]) {
      if (item_label.emplace(i, 0).second) {
        kept_items.push_back(i);
      }
    }
  }
  std::sort(kept_items.begin(), kept_items.end());
  for (std::size_t k = 0; k < kept_items.size(); ++k) {
    item_label[kept_items[k]] = static_cast<NodeId>(k);
  }

  Rng rng(seed);
  InteractionDataset out;
  out.num_users = static_cast<NodeId>(users.size());
  out.num_items = static_cast<NodeId>(kept_items.size());
  std::vector<Edge> user_edges;
  for (std::size_t k = 0; k < users.size(); ++k) {
    user_edges.clear();
    auto items = items_of[users[k]];
    std::sort(items.begin(), items.end());
    for (NodeId i : items) {
      user_edges.push_back({static_cast<NodeId>(k), item_label[i]});
    }
    split_user_edges(user_edges, rng, out);
  }
  return out;
}

} // namespace iagcn
