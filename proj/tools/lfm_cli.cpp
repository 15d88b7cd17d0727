// lfm: data generation, training, evaluation, transfer attacks, sweeps and
// mask visualization for the local feature masking experiments.
//
// Exit codes: 0 success, 1 usage, 2 invalid config, 3 missing/unwritable data.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lfm/experiment/config.hpp"
#include "lfm/experiment/runner.hpp"

namespace {

using lfm::experiment::ExperimentConfig;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config,-c", o.config, "Sectioned key=value config file");
  cmd->add_option("--seed", o.seed, "Master seed (overrides run.seed)");
  cmd->add_option("--out", o.out, "Output directory (overrides run.out)");
  cmd->add_option("--set", o.sets, "Override a config key: section.key=value (repeatable)");
}

ExperimentConfig resolve(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = lfm::experiment::load_config(o.config);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw lfm::ConfigError("--set expects section.key=value, got '" + s + "'");
    lfm::experiment::set_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) cfg.run.seed = *o.seed;
  if (o.out) cfg.run.out = *o.out;
  cfg.validate();
  return cfg;
}

int run(int argc, char** argv) {
  CLI::App app{"Local feature masking experiments"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset and manifest");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train a model and write checkpoint + per-epoch log");
  add_common(train, common);
  std::optional<std::string> train_ckpt, train_log;
  train->add_option("--checkpoint", train_ckpt, "Checkpoint output path (default <out>/model.lfmc)");
  train->add_option("--log", train_log, "Training log path (default <out>/train_log.csv)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (CMC + mAP)");
  add_common(eval, common);
  std::string eval_ckpt;
  std::optional<std::string> eval_csv;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate")->required();
  eval->add_option("--csv", eval_csv, "Output CSV (default <out>/eval.csv)");

  auto* atk = app.add_subcommand("attack", "Black-box transfer attack: surrogate -> target");
  add_common(atk, common);
  std::string target, surrogate;
  std::optional<std::string> attack_csv;
  atk->add_option("--target", target, "Target model checkpoint")->required();
  atk->add_option("--surrogate", surrogate, "Independently trained surrogate checkpoint")->required();
  atk->add_option("--csv", attack_csv, "Output CSV (default <out>/attack.csv)");

  auto* sweep = app.add_subcommand("sweep", "Sweep one config key over values x seeds");
  add_common(sweep, common);
  std::optional<std::string> sweep_param, sweep_values;
  std::optional<std::size_t> sweep_seeds;
  bool sweep_plot = false;
  sweep->add_option("--param", sweep_param, "Config key, e.g. lfm.num_masked_channels");
  sweep->add_option("--values", sweep_values, "Comma-separated values");
  sweep->add_option("--seeds", sweep_seeds, "Seeds per value");
  sweep->add_flag("--plot", sweep_plot, "Also write a PGM line plot of median mAP");

  auto* compare = app.add_subcommand("compare", "Train + evaluate each method in compare.methods");
  add_common(compare, common);
  std::optional<std::string> methods;
  compare->add_option("--methods", methods, "Comma-separated method labels, e.g. baseline,lfm,lfm+cutout");

  auto* viz = app.add_subcommand("viz-masks", "Write stem feature maps before/after masking");
  add_common(viz, common);
  std::string viz_ckpt;
  std::size_t viz_index = 0;
  viz->add_option("--checkpoint", viz_ckpt, "Checkpoint providing the stem weights")->required();
  viz->add_option("--index", viz_index, "Dataset sample index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    namespace ex = lfm::experiment;
    if (*gen) {
      const auto out = ex::cmd_gen_data(resolve(common));
      std::cout << "wrote " << out.samples << " samples to " << out.dataset.string() << "\n";
    } else if (*train) {
      const auto out = ex::cmd_train(resolve(common), train_ckpt ? std::optional<std::filesystem::path>(*train_ckpt) : std::nullopt,
                                     train_log ? std::optional<std::filesystem::path>(*train_log) : std::nullopt);
      std::cout << "wrote " << out.checkpoint.string() << " and " << out.log.string() << "\n";
    } else if (*eval) {
      const auto path = ex::cmd_eval(resolve(common), eval_ckpt,
                                     eval_csv ? std::optional<std::filesystem::path>(*eval_csv) : std::nullopt);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*atk) {
      const auto path = ex::cmd_attack(resolve(common), target, surrogate,
                                       attack_csv ? std::optional<std::filesystem::path>(*attack_csv) : std::nullopt);
      std::cout << "wrote " << path.string() << "\n";
    } else if (*sweep) {
      auto opts = common;
      if (sweep_param) opts.sets.push_back("sweep.param=" + *sweep_param);
      if (sweep_values) opts.sets.push_back("sweep.values=" + *sweep_values);
      if (sweep_seeds) opts.sets.push_back("sweep.seeds=" + std::to_string(*sweep_seeds));
      if (sweep_plot) opts.sets.push_back("sweep.plot=true");
      const auto out = ex::cmd_sweep(resolve(opts));
      std::cout << "wrote " << out.rows.string() << "; best value by median mAP: " << out.best_value << "\n";
    } else if (*compare) {
      auto opts = common;
      if (methods) opts.sets.push_back("compare.methods=" + *methods);
      std::cout << "wrote " << ex::cmd_compare(resolve(opts)).string() << "\n";
    } else if (*viz) {
      const auto out = ex::cmd_viz_masks(resolve(common), viz_ckpt, viz_index);
      std::cout << "wrote " << out.images.size() << " images and " << out.log.string() << "\n";
    }
  } catch (const lfm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const lfm::StructuralError& e) {
    std::cerr << "structural error: " << e.what() << "\n";
    return 2;
  } catch (const lfm::InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const lfm::IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const lfm::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
