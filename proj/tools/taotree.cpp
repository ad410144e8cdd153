// taotree: train sparse oblique trees, inspect them, build feature masks and
// evaluate mimics of a classifier head.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "commands.hpp"

namespace {

using namespace taotree;
using namespace taotree::cli;

void add_train_config(CLI::App* cmd, TrainConfig& c) {
  cmd->add_option("--lambda", c.lambda, "l1 penalty weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--max-iters", c.max_iters, "maximum TAO iterations")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--tol", c.tol, "stop when the objective decreases by no more than this")->capture_default_str();
  cmd->add_option("--depth", c.initial_depth, "depth of the initial complete tree")->check(CLI::Range(0, 20))->capture_default_str();
  cmd->add_flag("--zero-bias", c.force_zero_bias, "force every decision bias to 0 (needed by masks)");
  cmd->add_option("--init-bias-scale", c.init_bias_scale, "std. deviation of initial biases")->capture_default_str();
  cmd->add_flag("--normalize", c.normalize, "rescale each decision node to unit-l2 weights after training");
  cmd->add_option("--solver-max-iters", c.solver.max_iters, "per-node solver iteration cap")->capture_default_str();
  cmd->add_option("--solver-tol", c.solver.tol, "per-node solver optimality tolerance")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse oblique decision trees trained by alternating optimization"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read options from a TOML/INI file");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for same-depth node fits")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", g.verbose, "progress as JSON lines on stderr");

  TrainOptions train_opt;
  auto* train_cmd = app.add_subcommand("train", "train a tree on a feature file");
  train_cmd->add_option("--data", train_opt.data, "training features (FTRS)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--test", train_opt.test, "test features (FTRS)")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_opt.out, "output tree JSON")->required();
  train_cmd->add_option("--stats", train_opt.stats, "stats JSON (default <out>.stats.json)");
  add_train_config(train_cmd, train_opt.config);

  SweepOptions sweep_opt;
  auto* sweep_cmd = app.add_subcommand("sweep", "train along an ascending lambda grid");
  sweep_cmd->add_option("--data", sweep_opt.data, "training features (FTRS)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--test", sweep_opt.test, "test features (FTRS)")->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out-dir", sweep_opt.out_dir, "directory for path.csv and per-lambda trees")->required();
  sweep_cmd->add_option("--lambdas", sweep_opt.lambdas, "lambda grid")->required()->delimiter(',');
  sweep_cmd->add_flag("--warm-start", sweep_opt.warm_start, "start each lambda from the previous tree");
  add_train_config(sweep_cmd, sweep_opt.config);

  InspectOptions inspect_opt;
  auto* inspect_cmd = app.add_subcommand("inspect", "print a tree and optionally export Graphviz");
  inspect_cmd->add_option("--tree", inspect_opt.tree, "tree JSON")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--data", inspect_opt.data, "features for per-leaf training counts")->check(CLI::ExistingFile);
  inspect_cmd->add_option("--out", inspect_opt.out, "write the listing here instead of stdout");
  inspect_cmd->add_option("--dot", inspect_opt.dot, "Graphviz output path");
  inspect_cmd->add_option("--top", inspect_opt.top, "weights shown per node")->capture_default_str();

  MaskOptions mask_opt;
  auto* mask_cmd = app.add_subcommand("mask", "build and verify a feature mask");
  mask_cmd->add_option("--tree", mask_opt.tree, "tree JSON")->required()->check(CLI::ExistingFile);
  mask_cmd->add_option("--recipe", mask_opt.recipe, "mask recipe")
      ->required()
      ->check(CLI::IsMember({"all_to", "none_to", "class_to_class", "exclude_subtree", "features_selected"}));
  mask_cmd->add_option("--class", mask_opt.klass, "target class for all_to / none_to");
  mask_cmd->add_option("--from", mask_opt.from, "source class for class_to_class");
  mask_cmd->add_option("--to", mask_opt.to, "target class for class_to_class");
  mask_cmd->add_option("--cut", mask_opt.cuts, "NODE:left|right subtree to exclude (repeatable)");
  mask_cmd->add_option("--epsilon", mask_opt.epsilon, "push added to kept features (default 1e-3 x mean positive feature)");
  mask_cmd->add_option("--bias-tol", mask_opt.bias_tol, "largest |bias|/||w|| accepted as zero")->capture_default_str();
  mask_cmd->add_option("--data", mask_opt.data, "features for epsilon and extra verification")->check(CLI::ExistingFile);
  mask_cmd->add_option("--randomize-seed", mask_opt.randomize_seed, "write a randomized realization");
  mask_cmd->add_option("--fraction", mask_opt.fraction, "share of positions perturbed when randomizing")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  mask_cmd->add_option("--verify-samples", mask_opt.verify_samples, "random nonnegative vectors checked")->capture_default_str();
  mask_cmd->add_option("--out", mask_opt.out, "output mask JSON")->required();

  EvalOptions eval_opt;
  auto* eval_cmd = app.add_subcommand("eval", "confusion matrix of a tree or head, optionally masked");
  eval_cmd->add_option("--data", eval_opt.data, "features (FTRS)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tree", eval_opt.tree, "tree JSON")->check(CLI::ExistingFile);
  eval_cmd->add_option("--head", eval_opt.head, "classifier head (HEAD)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--mask", eval_opt.mask, "mask JSON applied before the predictor")->check(CLI::ExistingFile);
  eval_cmd->add_option("--predictor", eval_opt.predictor, "model evaluated")->check(CLI::IsMember({"tree", "head"}));
  eval_cmd->add_option("--reference", eval_opt.reference, "row labels")
      ->check(CLI::IsMember({"truth", "tree", "head"}))
      ->capture_default_str();
  eval_cmd->add_flag("--mask-reference", eval_opt.mask_reference, "apply the mask to the reference model too");
  eval_cmd->add_option("--out", eval_opt.out, "CSV output (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInputError;
  }

  // Echo of the effective configuration next to the primary output.
  // Only global options and those of the active subcommand are kept; unset
  // options (empty values) are dropped so the file can be read back.
  auto echo = [&](const std::string& path) {
    if (path.empty()) return;
    const std::string active = app.get_subcommands().front()->get_name() + ".";
    std::istringstream all(app.config_to_str(true, false));
    std::ofstream out(path);
    for (std::string line; std::getline(all, line);) {
      const auto eq = line.find('=');
      if (eq == std::string::npos || line.substr(eq + 1) == "\"\"") continue;
      const auto dot = line.find('.');
      if (dot != std::string::npos && dot < eq && line.compare(0, active.size(), active) != 0) continue;
      out << line << '\n';
    }
  };

  return run_guarded(
      [&]() -> int {
        int rc = kOk;
        if (*train_cmd) {
          rc = cmd_train(train_opt, g, std::cout, std::cerr);
          echo(train_opt.out + ".config.toml");
        } else if (*sweep_cmd) {
          rc = cmd_sweep(sweep_opt, g, std::cout, std::cerr);
          echo((std::filesystem::path(sweep_opt.out_dir) / "config.toml").string());
        } else if (*inspect_cmd) {
          rc = cmd_inspect(inspect_opt, g, std::cout, std::cerr);
          if (!inspect_opt.out.empty()) echo(inspect_opt.out + ".config.toml");
        } else if (*mask_cmd) {
          rc = cmd_mask(mask_opt, g, std::cout, std::cerr);
          echo(mask_opt.out + ".config.toml");
        } else if (*eval_cmd) {
          rc = cmd_eval(eval_opt, g, std::cout, std::cerr);
          if (!eval_opt.out.empty()) echo(eval_opt.out + ".config.toml");
        }
        return rc;
      },
      std::cerr);
}
