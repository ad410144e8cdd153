#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taotree/taotree.hpp"

namespace taotree::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kInputError = 2,
  kInfeasibleMask = 3,
  kVerificationFailed = 4,
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 1;
  bool verbose = false;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline nlohmann::json config_json(const TrainConfig& c) {
  return {{"lambda", c.lambda},
          {"max_iters", c.max_iters},
          {"tol", c.tol},
          {"initial_depth", c.initial_depth},
          {"seed", c.seed},
          {"force_zero_bias", c.force_zero_bias},
          {"init_bias_scale", c.init_bias_scale},
          {"normalize", c.normalize},
          {"solver",
           {{"max_iters", c.solver.max_iters},
            {"tol", c.solver.tol},
            {"accelerate", c.solver.accelerate}}}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  std::string data;
  std::string test;
  std::string out;
  std::string stats;  // default: <out>.stats.json
  TrainConfig config;
};

inline nlohmann::json stats_json(const Tree& tree, double train_error, std::optional<double> test_error,
                                 int iterations, double objective) {
  const auto s = tree_stats(tree);
  nlohmann::json j;
  j["train_error"] = train_error;
  j["test_error"] = test_error ? nlohmann::json(*test_error) : nlohmann::json(nullptr);
  j["depth"] = s.depth;
  j["num_nodes"] = s.num_nodes;
  j["num_leaves"] = s.num_leaves;
  j["nonzeros"] = s.nonzeros;
  j["features_used"] = s.features_used.size();
  j["iterations"] = iterations;
  j["objective"] = objective;
  return j;
}

inline int cmd_train(const TrainOptions& opt, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  if (opt.out.empty()) throw InputError("train: --out is required");
  const Dataset data = read_features(opt.data);
  std::optional<Dataset> test;
  if (!opt.test.empty()) test = read_features(opt.test);
  TrainConfig cfg = opt.config;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  TrainHooks hooks;
  if (g.verbose) hooks.progress = &err;
  const auto res = train(data, cfg, hooks);
  write_tree(res.tree, opt.out);

  std::optional<double> test_error;
  if (test) test_error = error_rate(res.tree, *test);
  auto stats = stats_json(res.tree, res.train_error, test_error, res.iterations, res.final_objective);
  stats["config"] = detail::config_json(cfg);
  detail::write_text(opt.stats.empty() ? opt.out + ".stats.json" : opt.stats, stats.dump(1) + "\n");

  out << "train_error " << detail::fmt(res.train_error);
  if (test_error) out << " test_error " << detail::fmt(*test_error);
  out << " depth " << stats["depth"] << " nodes " << stats["num_nodes"] << " nonzeros " << stats["nonzeros"]
      << " features_used " << stats["features_used"] << " iterations " << res.iterations << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOptions {
  std::string data;
  std::string test;
  std::string out_dir;
  std::vector<double> lambdas;
  bool warm_start = false;
  TrainConfig config;
};

inline std::string path_report(const std::vector<PathPoint>& points) {
  std::ostringstream os;
  os << "lambda,train_error,test_error,depth,nodes,nonzeros,features_used,iterations\n";
  for (const auto& p : points) {
    os << detail::fmt(p.lambda) << "," << detail::fmt(p.train_error) << ","
       << (p.test_error ? detail::fmt(*p.test_error) : std::string("")) << "," << p.depth << "," << p.num_nodes
       << "," << p.nonzeros << "," << p.features_used_count << "," << p.iters_run << "\n";
  }
  return os.str();
}

inline int cmd_sweep(const SweepOptions& opt, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  if (opt.lambdas.empty()) throw InputError("sweep: lambda grid is empty");
  if (opt.out_dir.empty()) throw InputError("sweep: --out-dir is required");
  const Dataset data = read_features(opt.data);
  std::optional<Dataset> test;
  if (!opt.test.empty()) test = read_features(opt.test);
  TrainConfig cfg = opt.config;
  cfg.seed = g.seed;
  cfg.threads = g.threads;
  TrainHooks hooks;
  if (g.verbose) hooks.progress = &err;
  const auto points = sweep_path(data, test ? &*test : nullptr, opt.lambdas, cfg, opt.warm_start, hooks);
  std::filesystem::create_directories(opt.out_dir);
  for (std::size_t k = 0; k < points.size(); ++k) {
    write_tree(points[k].tree, (std::filesystem::path(opt.out_dir) / ("tree_" + std::to_string(k) + ".json")).string());
  }
  const auto report = path_report(points);
  detail::write_text((std::filesystem::path(opt.out_dir) / "path.csv").string(), report);
  out << report;
  return kOk;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectOptions {
  std::string tree;
  std::string data;
  std::string out;  // dump; stdout when empty
  std::string dot;
  std::size_t top = 5;
};

inline int cmd_inspect(const InspectOptions& opt, const GlobalOptions&, std::ostream& out, std::ostream&) {
  const Tree tree = read_tree(opt.tree);
  std::optional<Dataset> data;
  if (!opt.data.empty()) {
    data = read_features(opt.data);
    check_dimension(tree, data->num_features());
  }
  const auto dump = dump_tree(tree, data ? &*data : nullptr, opt.top);
  if (opt.out.empty()) {
    out << dump;
  } else {
    detail::write_text(opt.out, dump);
  }
  if (!opt.dot.empty()) detail::write_text(opt.dot, to_dot(tree));
  return kOk;
}

// ---------------------------------------------------------------------------
// mask

struct MaskOptions {
  std::string tree;
  std::string recipe;
  Label klass = -1;
  Label from = -1;
  Label to = -1;
  std::vector<std::string> cuts;  // "node:left" / "node:right"
  std::optional<double> epsilon;
  double bias_tol = kDefaultBiasTol;
  std::string data;  // default epsilon and extra verification inputs
  std::optional<std::uint64_t> randomize_seed;
  double fraction = 0.1;
  std::size_t verify_samples = 1000;
  std::string out;
};

inline MaskProvenance parse_cut(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw InputError("cut '" + s + "' must look like NODE:left or NODE:right");
  try {
    const auto node = static_cast<NodeIndex>(std::stoul(s.substr(0, colon)));
    const auto side = s.substr(colon + 1);
    if (side != "left" && side != "right") throw InputError("cut side must be left or right in '" + s + "'");
    return {node, side == "left" ? Side::kLeft : Side::kRight};
  } catch (const std::logic_error&) {
    throw InputError("cut '" + s + "' has an invalid node index");
  }
}

inline Mask build_mask(const Tree& tree, const MaskOptions& opt, double epsilon) {
  auto need_class = [&](Label k, const char* flag) {
    if (k < 0) throw InputError(std::string("mask: ") + flag + " is required for recipe " + opt.recipe);
    return k;
  };
  if (opt.recipe == "all_to") return mask_all_to_class(tree, need_class(opt.klass, "--class"), epsilon, opt.bias_tol);
  if (opt.recipe == "none_to") return mask_none_to_class(tree, need_class(opt.klass, "--class"), epsilon, opt.bias_tol);
  if (opt.recipe == "class_to_class") {
    return mask_class_to_class(tree, need_class(opt.from, "--from"), need_class(opt.to, "--to"), epsilon, opt.bias_tol);
  }
  if (opt.recipe == "exclude_subtree") {
    std::vector<MaskProvenance> cuts;
    for (const auto& c : opt.cuts) {
      auto p = parse_cut(c);
      if (p.node >= tree.size() || tree.node(p.node).is_leaf()) {
        throw InputError("cut node " + std::to_string(p.node) + " is not a decision node");
      }
      cuts.push_back(p);
    }
    return mask_exclude_subtrees(tree, cuts, epsilon, opt.bias_tol);
  }
  if (opt.recipe == "features_selected") return features_selected_mask(tree);
  throw InputError("unknown mask recipe '" + opt.recipe + "'");
}

inline int cmd_mask(const MaskOptions& opt, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  if (opt.out.empty()) throw InputError("mask: --out is required");
  const Tree tree = read_tree(opt.tree);
  std::optional<Dataset> data;
  if (!opt.data.empty()) {
    data = read_features(opt.data);
    check_dimension(tree, data->num_features());
    if (!data->feature_nonneg()) err << "warning: dataset has negative features; mask guarantees assume z >= 0\n";
  }
  double epsilon = 1e-3;
  if (opt.epsilon) {
    epsilon = *opt.epsilon;
  } else if (data && data->mean_positive_feature() > 0.0) {
    epsilon = 1e-3 * data->mean_positive_feature();
  }
  const Mask mask = build_mask(tree, opt, epsilon);
  std::optional<ConcreteMask> concrete;
  if (opt.randomize_seed) concrete = randomize_mask(mask, tree, *opt.randomize_seed, opt.fraction, epsilon);

  auto inputs = random_nonneg_vectors(tree.num_features(), opt.verify_samples, g.seed,
                                      data && data->mean_positive_feature() > 0.0 ? 2.0 * data->mean_positive_feature() : 1.0);
  if (data) {
    for (std::size_t n = 0; n < data->size(); ++n) {
      const auto r = data->row(n);
      inputs.emplace_back(r.begin(), r.end());
    }
  }
  const MaskCheck check = concrete ? verify_mask(tree, mask.recipe, *concrete, inputs)
                                   : verify_mask(tree, mask.recipe, mask, inputs);

  out << "recipe " << to_string(mask.recipe.kind) << "\n";
  out << "epsilon " << detail::fmt(epsilon) << "\n";
  out << "masked_features " << mask.count(Ternary::kZero) + mask.count(Ternary::kOne) << " of " << mask.size()
      << " (zeroed " << mask.count(Ternary::kZero) << ", kept " << mask.count(Ternary::kOne) << ")\n";
  out << "conflicts " << mask.diagnostics.conflicts.size() << "\n";
  for (const auto& note : mask.diagnostics.notes) out << "note " << note << "\n";
  out << "verification checked " << check.checked << " applicable " << check.applicable << " failures "
      << check.failures << "\n";
  if (!check.ok()) {
    throw VerificationError("mask fails its guarantee on " + std::to_string(check.failures) + " of " +
                            std::to_string(check.applicable) + " inputs; not written");
  }
  write_mask(opt.out, mask, concrete ? &*concrete : nullptr);
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
  std::string data;
  std::string tree;
  std::string head;
  std::string mask;
  std::string predictor;             // tree | head; defaults to whichever is given (tree first)
  std::string reference = "truth";   // truth | tree | head
  bool mask_reference = false;
  std::string out;                   // CSV; stdout when empty
};

inline std::string confusion_csv(const ConfusionMatrix& cm, const std::string& title) {
  std::ostringstream os;
  os << "# " << title << "\n";
  os << "# N=" << cm.total() << " agreement=" << detail::fmt(cm.agreement()) << "\n";
  auto header = [&] {
    os << "reference\\predicted";
    for (int k = 0; k < cm.num_classes; ++k) os << "," << k;
    os << "\n";
  };
  os << "counts\n";
  header();
  for (Label r = 0; r < cm.num_classes; ++r) {
    os << r;
    for (Label c = 0; c < cm.num_classes; ++c) os << "," << cm.at(r, c);
    os << "\n";
  }
  os << "row_normalized\n";
  header();
  const auto norm = cm.row_normalized();
  const auto K = static_cast<std::size_t>(cm.num_classes);
  for (std::size_t r = 0; r < K; ++r) {
    os << r;
    for (std::size_t c = 0; c < K; ++c) os << "," << detail::fmt(norm[r * K + c]);
    os << "\n";
  }
  return os.str();
}

inline int cmd_eval(const EvalOptions& opt, const GlobalOptions&, std::ostream& out, std::ostream& err) {
  const Dataset data = read_features(opt.data);
  std::optional<Tree> tree;
  std::optional<ClassifierHead> head;
  if (!opt.tree.empty()) {
    tree = read_tree(opt.tree);
    check_dimension(*tree, data.num_features());
  }
  if (!opt.head.empty()) {
    head = read_head(opt.head);
    if (head->num_inputs() != data.num_features()) throw InputError("eval: head input size does not match features");
    if (static_cast<int>(head->num_classes()) != data.num_classes()) {
      throw InputError("eval: head class count does not match the feature file");
    }
  }
  auto model = [&](const std::string& which) -> Predictor {
    if (which == "tree") {
      if (!tree) throw InputError("eval: --tree is required for '" + which + "'");
      return tree_predictor(*tree);
    }
    if (which == "head") {
      if (!head) throw InputError("eval: --head is required for '" + which + "'");
      return head_predictor(*head);
    }
    throw InputError("eval: unknown model '" + which + "'");
  };
  std::string which = opt.predictor;
  if (which.empty()) which = tree ? "tree" : (head ? "head" : "");
  if (which.empty()) throw InputError("eval: give --tree and/or --head");
  Predictor predictor = model(which);
  Predictor reference;
  if (opt.reference != "truth") reference = model(opt.reference);

  std::string title = "predictor=" + which;
  if (!opt.mask.empty()) {
    const auto mf = read_mask(opt.mask);
    if (mf.mask.size() != data.num_features()) throw InputError("eval: mask length does not match features");
    if (!data.feature_nonneg()) err << "warning: dataset has negative features; mask guarantees assume z >= 0\n";
    const ConcreteMask cm = mf.concrete ? *mf.concrete : to_concrete(mf.mask);
    predictor = masked(predictor, cm);
    title += "(masked)";
    if (reference && opt.mask_reference) reference = masked(reference, cm);
  }
  title += " reference=" + opt.reference + (reference && opt.mask_reference && !opt.mask.empty() ? "(masked)" : "");
  const auto cm = eval_confusion(predictor, data, reference);
  const auto csv = confusion_csv(cm, title);
  if (opt.out.empty()) {
    out << csv;
  } else {
    detail::write_text(opt.out, csv);
  }
  out << "agreement " << detail::fmt(cm.agreement()) << " (" << cm.diagonal() << "/" << cm.total() << ")\n";
  return kOk;
}

// Maps library exceptions to exit codes.
template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const VerificationError& e) {
    err << "error: " << e.what() << "\n";
    return kVerificationFailed;
  } catch (const InfeasibleMaskError& e) {
    err << "error: infeasible mask: " << e.what() << "\n";
    return kInfeasibleMask;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUnexpected;
  }
}

}  // namespace taotree::cli
