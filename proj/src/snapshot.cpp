#include "iagcn/snapshot.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace iagcn {

static_assert(std::numeric_limits<double>::is_iec559, "float64 storage requires IEEE doubles");

namespace {

constexpr const char* kMagic = "IAGCN1";

void write_doubles(std::ostream& out, const double* data, std::size_t count) {
  char bytes[8];
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(data[k]);
    for (int b = 0; b < 8; ++b) {
      bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
    out.write(bytes, 8);
  }
}

void read_doubles(std::istream& in, double* data, std::size_t count) {
  unsigned char bytes[8];
  for (std::size_t k = 0; k < count; ++k) {
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw SnapshotError("snapshot truncated: expected " + std::to_string(count) +
                          " values, got " + std::to_string(k));
    }
    std::uint64_t bits = 0;
    for (int b = 7; b >= 0; --b) {
      bits = (bits << 8) | bytes[b];
    }
    data[k] = std::bit_cast<double>(bits);
  }
}

} // namespace

void write_snapshot(std::ostream& out, const EmbeddingTable& table, const LayerWeights& beta) {
  out << kMagic << ' ' << table.users.rows() << ' ' << table.items.rows() << ' ' << table.dim()
      << ' ' << beta.size() - 1 << ' ' << to_string(beta.mode()) << '\n';
  write_doubles(out, table.users.data(), static_cast<std::size_t>(table.users.size()));
  write_doubles(out, table.items.data(), static_cast<std::size_t>(table.items.size()));
  write_doubles(out, beta.logits().data(), static_cast<std::size_t>(beta.size()));
  if (!out) {
    throw SnapshotError("failed to write snapshot");
  }
}

void save_snapshot(const std::filesystem::path& path, const EmbeddingTable& table,
                   const LayerWeights& beta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw SnapshotError("cannot open " + path.string() + " for writing");
  }
  write_snapshot(out, table, beta);
}

StoredModel read_snapshot(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) {
    throw SnapshotError("empty snapshot");
  }
  std::istringstream fields(header);
  std::string magic, mode;
  long long users = -1, items = -1, dim = -1, layers = -1;
  fields >> magic >> users >> items >> dim >> layers >> mode;
  if (magic != kMagic || !fields || users < 0 || items < 0 || dim < 1 || layers < 0) {
    throw SnapshotError("bad snapshot header: " + header);
  }
  StoredModel model;
  model.num_layers = static_cast<int>(layers);
  model.table.users.resize(users, dim);
  model.table.items.resize(items, dim);
  read_doubles(in, model.table.users.data(), static_cast<std::size_t>(users * dim));
  read_doubles(in, model.table.items.data(), static_cast<std::size_t>(items * dim));
  const BetaMode beta_mode = parse_beta_mode(mode);
  model.beta = beta_mode == BetaMode::learned ? LayerWeights::learned(model.num_layers)
                                              : LayerWeights::mean(model.num_layers);
  read_doubles(in, model.beta.logits().data(), static_cast<std::size_t>(layers + 1));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw SnapshotError("trailing bytes after snapshot payload");
  }
  return model;
}

StoredModel load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw SnapshotError("cannot open snapshot " + path.string());
  }
  return read_snapshot(in);
}

} // namespace iagcn
