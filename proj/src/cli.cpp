#include "iagcn/cli.hpp"

#include "iagcn/snapshot.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace iagcn {

const char* const kResultsHeader = "dataset\tguide_mode\tK\tbeta_mode\trecall@20\tndcg@20\tseed";

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

} // namespace

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate_config(config);
    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "config.resolved", resolved_config_text(config));
    const InteractionDataset data = load_run_dataset(config);
    out << "dataset " << dataset_label(config) << ": " << data.num_users << " users, "
        << data.num_items << " items, " << data.train_edges.size() << " train / "
        << data.test_edges.size() << " test interactions\n";

    std::ofstream metrics(config.out_dir / "metrics.tsv");
    if (!metrics) {
      throw std::runtime_error("cannot write " + (config.out_dir / "metrics.tsv").string());
    }
    const bool deterministic = config.schedule.deterministic;
    auto on_eval = [&](const EvalRecord& r) {
      const std::string line = format_metrics_line(r, deterministic);
      metrics << line << '\n' << std::flush;
      out << line << '\n' << std::flush;
    };

    TrainResult result;
    try {
      result = train(data, config.hp, config.schedule, on_eval);
    } catch (const TrainingDiverged& e) {
      write_text(config.out_dir / "divergence.txt", std::string(e.what()) + '\n');
      err << "error: training diverged: " << e.what() << '\n';
      return 3;
    }
    save_snapshot(config.out_dir / "embeddings.bin", result.best.table, result.best.beta);
    out << "best epoch " << result.best_epoch << " recall@" << config.schedule.k_cut << ' '
        << result.best_recall << " after " << result.epochs_run << " epochs\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_evaluate(const fs::path& snapshot, const RunConfig& config, std::ostream& out,
                 std::ostream& err, const fs::path& results_file) {
  try {
    validate_config(config);
    StoredModel stored = load_snapshot(snapshot);
    if (stored.num_layers != config.hp.num_layers) {
      throw std::runtime_error("snapshot has K=" + std::to_string(stored.num_layers) +
                               " but config has layers=" +
                               std::to_string(config.hp.num_layers));
    }
    if (stored.table.dim() != config.hp.embedding_dim) {
      throw std::runtime_error("snapshot has dim=" + std::to_string(stored.table.dim()) +
                               " but config has dim=" +
                               std::to_string(config.hp.embedding_dim));
    }
    if (stored.beta.mode() != config.hp.beta_mode) {
      throw std::runtime_error("snapshot has beta_mode=" +
                               std::string(to_string(stored.beta.mode())) +
                               " but config has beta_mode=" +
                               std::string(to_string(config.hp.beta_mode)));
    }
    const InteractionDataset data = load_run_dataset(config);
    if (stored.table.users.rows() != data.num_users ||
        stored.table.items.rows() != data.num_items) {
      throw std::runtime_error(
          "snapshot has " + std::to_string(stored.table.users.rows()) + " users x " +
          std::to_string(stored.table.items.rows()) + " items but dataset has " +
          std::to_string(data.num_users) + " x " + std::to_string(data.num_items));
    }
    const BipartiteGraph graph = BipartiteGraph::build(data);
    const ModelSnapshot snap{std::move(stored.table), std::move(stored.beta), config.hp};
    const RankingResult result = evaluate(snap, data, graph, config.schedule.k_cut);

    char row[512];
    std::snprintf(row, sizeof row, "%s\t%s\t%d\t%s\t%.6f\t%.6f\t%llu",
                  dataset_label(config).c_str(), std::string(to_string(config.hp.guide_mode)).c_str(),
                  config.hp.num_layers, std::string(to_string(config.hp.beta_mode)).c_str(),
                  result.mean_recall, result.mean_ndcg,
                  static_cast<unsigned long long>(config.schedule.seed));

    const fs::path path = results_file.empty() ? config.out_dir / "results.tsv" : results_file;
    if (path.has_parent_path()) {
      fs::create_directories(path.parent_path());
    }
    const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    std::ofstream results(path, std::ios::app);
    if (fresh) {
      results << kResultsHeader << '\n';
    }
    results << row << '\n';
    if (!results) {
      throw std::runtime_error("cannot append to " + path.string());
    }
    out << row << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_check_grad(const CheckGradOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    const auto start = std::chrono::steady_clock::now();
    const InteractionDataset data =
        generate_synthetic(opt.users, opt.items, opt.blocks, opt.p_in, opt.p_out, opt.seed);
    const BipartiteGraph graph = BipartiteGraph::build(data);

    Rng rng(opt.seed, 3);
    std::vector<Triplet> triplets;
    for (int k = 0; k < opt.triplets_per_cell; ++k) {
      const Edge e = data.train_edges[rng.uniform_index(data.train_edges.size())];
      const NodeId user = e.user;
      const auto neg = sample_negatives(graph, std::span<const NodeId>(&user, 1), rng);
      triplets.push_back({e.user, e.item, neg[0]});
    }

    BackwardOptions backward;
    backward.flip_attention_sign = opt.inject_attention_sign_bug;
    bool all_ok = true;
    double worst = 0.0;
    out << "guide_mode\tK\tbeta_mode\tmax_rel_error\tcoordinates\tstatus\n";
    for (GuideMode mode : opt.guide_modes) {
      for (int layers : opt.layers) {
        for (BetaMode beta_mode : opt.beta_modes) {
          Hyperparams hp;
          hp.embedding_dim = opt.dim;
          hp.num_layers = layers;
          hp.temperature = opt.temperature;
          hp.guide_mode = mode;
          hp.beta_mode = beta_mode;
          hp.l2_lambda = opt.lambda;
          hp.fanout = opt.fanout;
          hp.validate();

          const EmbeddingTable table =
              init_embeddings(graph.num_users(), graph.num_items(), opt.dim, opt.seed + 11);
          LayerWeights beta = beta_mode == BetaMode::learned ? LayerWeights::learned(layers)
                                                             : LayerWeights::mean(layers);
          if (beta.trainable()) {
            // generic logits, so the beta gradient is not evaluated at a symmetric point
            for (Eigen::Index j = 0; j < beta.size(); ++j) {
              beta.logits()[j] = 0.3 * (rng.uniform01() - 0.5);
            }
          }

          double cell = 0.0;
          std::size_t coords = 0;
          for (std::size_t k = 0; k < triplets.size(); ++k) {
            std::optional<TripletTrees> frozen;
            if (hp.fanout != kFullFanout) {
              Rng tree_rng(opt.seed, 100 + k);
              frozen = build_triplet_trees(graph, triplets[k], hp, &tree_rng);
            }
            const GradCheckResult r = finite_diff_check(graph, triplets[k], table, beta, hp,
                                                        opt.epsilon, frozen ? &*frozen : nullptr,
                                                        backward);
            cell = std::max(cell, r.max_relative_error);
            coords += r.coordinates;
          }
          const bool ok = cell < opt.tolerance;
          all_ok = all_ok && ok;
          worst = std::max(worst, cell);
          char line[160];
          std::snprintf(line, sizeof line, "%s\t%d\t%s\t%.3e\t%zu\t%s",
                        std::string(to_string(mode)).c_str(), layers,
                        std::string(to_string(beta_mode)).c_str(), cell, coords,
                        ok ? "ok" : "FAIL");
          out << line << '\n';
        }
      }
    }
    char summary[160];
    std::snprintf(summary, sizeof summary, "max relative error %.3e (tolerance %.0e), %.2f s",
                  worst, opt.tolerance, seconds_since(start));
    out << summary << '\n';
    if (!all_ok) {
      err << "error: gradient check failed\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_synth(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate_config(config);
    const InteractionDataset data = load_run_dataset(config);
    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "train.txt", serialize_split(data.train_edges));
    write_text(config.out_dir / "test.txt", serialize_split(data.test_edges));
    out << "wrote " << data.train_edges.size() << " train and " << data.test_edges.size()
        << " test interactions to " << config.out_dir.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate_config(config);
    const InteractionDataset data = load_run_dataset(config);
    const BipartiteGraph graph = BipartiteGraph::build(data);
    out << "guide_mode\tK\tbatch_gradient_ms\tevaluate_s\n";
    for (GuideMode mode :
         {GuideMode::lightgcn_norm, GuideMode::self_guided, GuideMode::interactive}) {
      Hyperparams hp = config.hp;
      hp.guide_mode = mode;
      const EmbeddingTable table = init_embeddings(data.num_users, data.num_items,
                                                   hp.embedding_dim, config.schedule.seed);
      const LayerWeights beta = hp.beta_mode == BetaMode::learned
                                    ? LayerWeights::learned(hp.num_layers)
                                    : LayerWeights::mean(hp.num_layers);

      Rng rng(config.schedule.seed, 5);
      const std::size_t batch_size =
          std::min<std::size_t>(config.schedule.batch_size, data.train_edges.size());
      std::vector<NodeId> users(batch_size);
      std::vector<Triplet> batch(batch_size);
      for (std::size_t k = 0; k < batch_size; ++k) {
        users[k] = data.train_edges[rng.uniform_index(data.train_edges.size())].user;
      }
      const auto negs = sample_negatives(graph, users, rng);
      for (std::size_t k = 0; k < batch_size; ++k) {
        const auto items = graph.neighbors(user_node(users[k]));
        batch[k] = {users[k], items[rng.uniform_index(items.size())], negs[k]};
      }
      GradientBuffer grads(data.num_users, data.num_items, hp.embedding_dim, beta.size());
      constexpr int kRepeats = 3;
      auto start = std::chrono::steady_clock::now();
      for (int r = 0; r < kRepeats; ++r) {
        batch_gradient(graph, batch, table, beta, hp, config.schedule.seed + r, 16, grads);
      }
      const double grad_ms = 1000.0 * seconds_since(start) / kRepeats;

      start = std::chrono::steady_clock::now();
      const ModelSnapshot snap{table, beta, hp};
      evaluate(snap, data, graph, config.schedule.k_cut);
      const double eval_s = seconds_since(start);

      char line[160];
      std::snprintf(line, sizeof line, "%s\t%d\t%.2f\t%.3f", std::string(to_string(mode)).c_str(),
                    hp.num_layers, grad_ms, eval_s);
      out << line << '\n' << std::flush;
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

} // namespace iagcn
