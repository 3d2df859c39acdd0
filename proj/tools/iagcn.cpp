#include "iagcn/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using iagcn::RunConfig;

struct CommonArgs {
  std::string config_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("overrides", args.overrides, "key=value settings applied after the config file");
}

RunConfig resolve(const CommonArgs& args) {
  std::optional<std::filesystem::path> file;
  if (!args.config_file.empty()) {
    file = args.config_file;
  }
  return iagcn::load_config(file, args.overrides);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive-attention graph convolution recommender"};
  app.require_subcommand(1);

  CommonArgs train_args, eval_args, synth_args, bench_args, grad_args;
  auto* train = app.add_subcommand("train", "train a model and write its snapshot");
  add_common(train, train_args);

  auto* evaluate = app.add_subcommand("evaluate", "score a snapshot and append a results row");
  std::string snapshot, results;
  evaluate->add_option("-s,--snapshot", snapshot, "embeddings.bin from a train run")
      ->required()
      ->check(CLI::ExistingFile);
  evaluate->add_option("-r,--results", results, "results file (default out_dir/results.tsv)");
  add_common(evaluate, eval_args);

  auto* check = app.add_subcommand("check-grad", "finite-difference gradient gate");
  bool inject = false;
  check->add_flag("--inject-attention-sign-bug", inject)->group("");
  add_common(check, grad_args);

  auto* synth = app.add_subcommand("synth", "write a synthetic train/test split");
  add_common(synth, synth_args);

  auto* bench = app.add_subcommand("bench", "time gradients and evaluation per guide mode");
  add_common(bench, bench_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      return iagcn::cmd_train(resolve(train_args), std::cout, std::cerr);
    }
    if (*evaluate) {
      return iagcn::cmd_evaluate(snapshot, resolve(eval_args), std::cout, std::cerr, results);
    }
    if (*synth) {
      return iagcn::cmd_synth(resolve(synth_args), std::cout, std::cerr);
    }
    if (*bench) {
      return iagcn::cmd_bench(resolve(bench_args), std::cout, std::cerr);
    }
    if (*check) {
      // grid defaults; the config may change the seed, tau, lambda, fanout and dim
      RunConfig cfg;
      cfg.hp.embedding_dim = 8;
      if (!grad_args.config_file.empty()) {
        std::ifstream in(grad_args.config_file);
        std::stringstream text;
        text << in.rdbuf();
        iagcn::apply_config_text(cfg, text.str());
      }
      for (const auto& o : grad_args.overrides) {
        const auto [key, value] = iagcn::split_assignment(o);
        iagcn::apply_setting(cfg, key, value);
      }
      iagcn::CheckGradOptions opt;
      opt.dim = cfg.hp.embedding_dim;
      opt.temperature = cfg.hp.temperature;
      opt.lambda = cfg.hp.l2_lambda;
      opt.fanout = cfg.hp.fanout;
      if (cfg.seed_set) {
        opt.seed = cfg.schedule.seed;
      }
      opt.inject_attention_sign_bug = inject;
      return iagcn::cmd_check_grad(opt, std::cout, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
