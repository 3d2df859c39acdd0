#include "iagcn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace iagcn {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") {
    return true;
  }
  if (value == "false" || value == "0") {
    return false;
  }
  throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(value) +
                    "' (expected true or false)");
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

} // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "train_file", "test_file", "synth_users", "synth_items", "synth_blocks", "synth_p_in",
      "synth_p_out", "dim", "layers", "tau", "guide_mode", "beta_mode", "lambda", "lr",
      "batch_size", "epochs", "eval_every", "patience", "fanout", "seed", "out_dir",
      "deterministic"};
  return keys;
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  value = trim(value);
  try {
    if (key == "train_file") {
      c.train_file = std::string(value);
    } else if (key == "test_file") {
      c.test_file = std::string(value);
    } else if (key == "synth_users") {
      c.synth_users = parse_number<NodeId>(key, value);
    } else if (key == "synth_items") {
      c.synth_items = parse_number<NodeId>(key, value);
    } else if (key == "synth_blocks") {
      c.synth_blocks = parse_number<int>(key, value);
    } else if (key == "synth_p_in") {
      c.synth_p_in = parse_number<double>(key, value);
    } else if (key == "synth_p_out") {
      c.synth_p_out = parse_number<double>(key, value);
    } else if (key == "dim") {
      c.hp.embedding_dim = parse_number<int>(key, value);
    } else if (key == "layers") {
      c.hp.num_layers = parse_number<int>(key, value);
    } else if (key == "tau") {
      c.hp.temperature = parse_number<double>(key, value);
    } else if (key == "guide_mode") {
      c.hp.guide_mode = parse_guide_mode(value);
    } else if (key == "beta_mode") {
      c.hp.beta_mode = parse_beta_mode(value);
    } else if (key == "lambda") {
      c.hp.l2_lambda = parse_number<double>(key, value);
    } else if (key == "lr") {
      c.hp.learning_rate = parse_number<double>(key, value);
    } else if (key == "batch_size") {
      c.schedule.batch_size = parse_number<int>(key, value);
    } else if (key == "epochs") {
      c.schedule.epochs = parse_number<int>(key, value);
    } else if (key == "eval_every") {
      c.schedule.eval_every = parse_number<int>(key, value);
    } else if (key == "patience") {
      c.schedule.patience = parse_number<int>(key, value);
    } else if (key == "fanout") {
      c.hp.fanout = value == "full" ? kFullFanout : parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      c.schedule.seed = parse_number<std::uint64_t>(key, value);
      c.seed_set = true;
    } else if (key == "out_dir") {
      c.out_dir = std::string(value);
    } else if (key == "deterministic") {
      c.schedule.deterministic = parse_bool(key, value);
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  } catch (const std::invalid_argument& e) {
    // enum parsers report their own message; keep it but name the key
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

std::pair<std::string, std::string> split_assignment(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(text) + "'");
  }
  const auto key = trim(text.substr(0, eq));
  if (key.empty()) {
    throw ConfigError("empty key in '" + std::string(text) + "'");
  }
  return {std::string(key), std::string(trim(text.substr(eq + 1)))};
}

void apply_config_text(RunConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    try {
      const auto [key, value] = split_assignment(line);
      apply_setting(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig load_config(const std::optional<std::filesystem::path>& file,
                      const std::vector<std::string>& overrides) {
  RunConfig config;
  if (file) {
    std::ifstream in(*file);
    if (!in) {
      throw ConfigError("cannot read config file " + file->string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    try {
      apply_config_text(config, text.str());
    } catch (const ConfigError& e) {
      throw ConfigError(file->string() + ": " + e.what());
    }
  }
  for (const auto& o : overrides) {
    const auto [key, value] = split_assignment(o);
    apply_setting(config, key, value);
  }
  validate_config(config);
  return config;
}

void validate_config(const RunConfig& c) {
  if (!c.seed_set) {
    throw ConfigError("seed is mandatory (set seed=<integer>)");
  }
  if (c.uses_files()) {
    if (c.train_file.empty() || c.test_file.empty()) {
      throw ConfigError("train_file and test_file must be given together");
    }
    for (const auto& p : {c.train_file, c.test_file}) {
      if (!std::filesystem::exists(p)) {
        throw ConfigError("dataset file not found: " + p.string());
      }
    }
  } else {
    if (c.synth_users < 1 || c.synth_items < 1 || c.synth_blocks < 1) {
      throw ConfigError("synthetic sizes must be positive");
    }
    if (!(c.synth_p_in >= 0.0 && c.synth_p_in <= 1.0 && c.synth_p_out >= 0.0 &&
          c.synth_p_out <= 1.0)) {
      throw ConfigError("synthetic edge probabilities must lie in [0, 1]");
    }
  }
  if (c.schedule.batch_size < 1 || c.schedule.epochs < 1 || c.schedule.eval_every < 1 ||
      c.schedule.patience < 1) {
    throw ConfigError("batch_size, epochs, eval_every and patience must be positive");
  }
  try {
    c.hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string resolved_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "train_file=" << c.train_file.string() << '\n'
      << "test_file=" << c.test_file.string() << '\n'
      << "synth_users=" << c.synth_users << '\n'
      << "synth_items=" << c.synth_items << '\n'
      << "synth_blocks=" << c.synth_blocks << '\n'
      << "synth_p_in=" << format_double(c.synth_p_in) << '\n'
      << "synth_p_out=" << format_double(c.synth_p_out) << '\n'
      << "dim=" << c.hp.embedding_dim << '\n'
      << "layers=" << c.hp.num_layers << '\n'
      << "tau=" << format_double(c.hp.temperature) << '\n'
      << "guide_mode=" << to_string(c.hp.guide_mode) << '\n'
      << "beta_mode=" << to_string(c.hp.beta_mode) << '\n'
      << "lambda=" << format_double(c.hp.l2_lambda) << '\n'
      << "lr=" << format_double(c.hp.learning_rate) << '\n'
      << "batch_size=" << c.schedule.batch_size << '\n'
      << "epochs=" << c.schedule.epochs << '\n'
      << "eval_every=" << c.schedule.eval_every << '\n'
      << "patience=" << c.schedule.patience << '\n'
      << "fanout=";
  if (c.hp.fanout == kFullFanout) {
    out << "full";
  } else {
    out << c.hp.fanout;
  }
  out << '\n'
      << "seed=" << c.schedule.seed << '\n'
      << "out_dir=" << c.out_dir.string() << '\n'
      << "deterministic=" << (c.schedule.deterministic ? "true" : "false") << '\n';
  return out.str();
}

std::string dataset_label(const RunConfig& c) {
  if (c.uses_files()) {
    const auto dir = std::filesystem::absolute(c.train_file).parent_path().filename().string();
    return dir.empty() ? c.train_file.stem().string() : dir;
  }
  return "synth-" + std::to_string(c.synth_users) + "x" + std::to_string(c.synth_items) + "-b" +
         std::to_string(c.synth_blocks);
}

InteractionDataset load_run_dataset(const RunConfig& c) {
  if (c.uses_files()) {
    return load_dataset(c.train_file, c.test_file);
  }
  return generate_synthetic(c.synth_users, c.synth_items, c.synth_blocks, c.synth_p_in,
                            c.synth_p_out, c.schedule.seed);
}

} // namespace iagcn
