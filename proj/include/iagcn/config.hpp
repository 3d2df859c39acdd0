#ifndef IAGCN_CONFIG_HPP
#define IAGCN_CONFIG_HPP

#include "iagcn/train.hpp"

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace iagcn {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs besides the input files themselves.
struct RunConfig {
  std::filesystem::path train_file;
  std::filesystem::path test_file;
  NodeId synth_users = 500;
  NodeId synth_items = 500;
  int synth_blocks = 2;
  double synth_p_in = 0.3;
  double synth_p_out = 0.02;
  Hyperparams hp;
  TrainSchedule schedule;
  bool seed_set = false;
  std::filesystem::path out_dir = "run";

  bool uses_files() const { return !train_file.empty() || !test_file.empty(); }
};

/// Recognised keys, in the order the resolved echo lists them.
const std::vector<std::string>& config_keys();

/// Sets one key. Unknown keys and malformed values throw ConfigError.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Splits "key=value".
std::pair<std::string, std::string> split_assignment(std::string_view text);

/// Reads key=value lines; blank lines and lines starting with '#' are skipped.
void apply_config_text(RunConfig& config, std::string_view text);

/// Optional config file, then command-line overrides, then validation.
RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::string>& overrides);

/// Throws ConfigError when the seed is missing, dataset files do not exist,
/// only one of train_file/test_file is given, or a value is out of range.
void validate_config(const RunConfig& config);

/// Every key with its effective value; reading it back reproduces the run.
std::string resolved_config_text(const RunConfig& config);

/// Short label for results rows: the train file's directory name, or a
/// description of the synthetic generator.
std::string dataset_label(const RunConfig& config);

/// Loads the files or generates the synthetic graph.
InteractionDataset load_run_dataset(const RunConfig& config);

} // namespace iagcn

#endif // IAGCN_CONFIG_HPP
