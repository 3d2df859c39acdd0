#ifndef IAGCN_CLI_HPP
#define IAGCN_CLI_HPP

#include "iagcn/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace iagcn {

/// Trains and writes embeddings.bin, metrics.tsv and config.resolved into
/// config.out_dir. Returns the process exit code.
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Scores a stored snapshot and appends one row to `results_file`
/// (default: out_dir/results.tsv).
int cmd_evaluate(const std::filesystem::path& snapshot, const RunConfig& config,
                 std::ostream& out, std::ostream& err,
                 const std::filesystem::path& results_file = {});

extern const char* const kResultsHeader;

struct CheckGradOptions {
  std::vector<GuideMode> guide_modes = {GuideMode::lightgcn_norm, GuideMode::self_guided,
                                        GuideMode::interactive};
  std::vector<int> layers = {0, 1, 2, 3};
  std::vector<BetaMode> beta_modes = {BetaMode::mean, BetaMode::learned};
  int dim = 8;
  NodeId users = 15;
  NodeId items = 15;
  int blocks = 3;
  double p_in = 0.5;
  double p_out = 0.1;
  int triplets_per_cell = 3;
  double epsilon = 1e-6;
  double tolerance = 1e-5;
  double temperature = 1.0;
  double lambda = 1e-4;
  std::size_t fanout = kFullFanout;
  std::uint64_t seed = 7;
  /// Flips the sign of the attention backprop term (mutation test).
  bool inject_attention_sign_bug = false;
};

/// Finite-difference gate over the configuration grid. Prints one line per
/// cell; exit code 0 iff every cell is below the tolerance.
int cmd_check_grad(const CheckGradOptions& options, std::ostream& out, std::ostream& err);

/// Writes the configured dataset (synthetic unless files are given) as
/// out_dir/train.txt and out_dir/test.txt.
int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Times batch gradients and full evaluation for each guide mode.
int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err);

} // namespace iagcn

#endif // IAGCN_CLI_HPP
