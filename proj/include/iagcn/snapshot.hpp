#ifndef IAGCN_SNAPSHOT_HPP
#define IAGCN_SNAPSHOT_HPP

#include "iagcn/eval.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace iagcn {

class SnapshotError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Parameters as stored on disk. The text header line
/// "IAGCN1 <users> <items> <dim> <layers> <beta_mode>" is followed by raw
/// little-endian float64: user rows, item rows, then the K+1 beta logits.
struct StoredModel {
  EmbeddingTable table;
  LayerWeights beta;
  int num_layers = 0;
};

void write_snapshot(std::ostream& out, const EmbeddingTable& table, const LayerWeights& beta);
void save_snapshot(const std::filesystem::path& path, const EmbeddingTable& table,
                   const LayerWeights& beta);

StoredModel read_snapshot(std::istream& in);
StoredModel load_snapshot(const std::filesystem::path& path);

} // namespace iagcn

#endif // IAGCN_SNAPSHOT_HPP
