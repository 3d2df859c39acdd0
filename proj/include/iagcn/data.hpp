#ifndef IAGCN_DATA_HPP
#define IAGCN_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace iagcn {

using NodeId = std::int32_t;

struct Edge {
  NodeId user;
  NodeId item;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Users and items with disjoint train/test interaction sets.
struct InteractionDataset {
  NodeId num_users = 0;
  NodeId num_items = 0;
  std::vector<Edge> train_edges;
  std::vector<Edge> test_edges;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
};

class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// One split file: edges in file order plus the largest user id seen,
/// including users listed without items.
struct SplitFile {
  std::vector<Edge> edges;
  std::int64_t max_user = -1;
  std::int64_t max_item = -1;
};

/// Reads "user item item ..." lines. LF and CRLF both accepted.
SplitFile parse_split_file(std::istream& in);

/// Writes edges back in the same format, one line per run of equal user ids.
std::string serialize_split(const std::vector<Edge>& edges);

using WarningSink = std::function<void(std::string_view)>;

/// Default sink: prints "warning: ..." to stderr.
void warn_to_stderr(std::string_view message);

/// Loads a train/test pair. Duplicates within a file and train/test overlap
/// are repaired with a warning; an empty train set is fatal.
InteractionDataset load_dataset(const std::filesystem::path& train_path,
                                const std::filesystem::path& test_path,
                                const WarningSink& warn = warn_to_stderr);

/// Block-community random bipartite graph split 80/20 per user.
InteractionDataset generate_synthetic(NodeId num_users, NodeId num_items, int num_blocks,
                                      double p_in, double p_out, std::uint64_t seed);

/// Keeps the `count` users with the most interactions (train+test), drops
/// items they never touch, relabels densely and re-splits 80/20 per user.
InteractionDataset subsample_active_users(const InteractionDataset& data, NodeId count,
                                          std::uint64_t seed);

} // namespace iagcn

#endif // IAGCN_DATA_HPP
