#include "copseudo/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "copseudo/data.hpp"
#include "copseudo/errors.hpp"
#include "copseudo/fusion.hpp"
#include "copseudo/metrics.hpp"

namespace copseudo::cli {

namespace {

struct TrainFlag {
  const char* flag;
  const char* key;
  const char* help;
  bool is_switch = false;
};

// Value flags map to config keys; switches set their key to "true".
const std::vector<TrainFlag>& train_flags() {
  static const std::vector<TrainFlag> flags = {
      {"--data", "data", "Training dataset file (copseudo-ds container)"},
      {"--test", "test", "Fully observed test dataset file"},
      {"--out", "out", "Run directory to create"},
      {"--seed", "seed", "Master seed; every stream is derived from it (required)"},
      {"--profile", "profile", "Default profile: desk (B=16, mu=4) or paper (B=64, mu=7)"},
      {"--models", "models", "Number of models trained in lock step"},
      {"--steps", "steps", "Number of training steps"},
      {"--eval-every", "eval_every", "Evaluate and write a metrics row every N steps"},
      {"--tau", "tau", "Top confidence threshold"},
      {"--tau2", "tau_cascade", "Lower consensus threshold for two models"},
      {"--tau-cascade", "tau_cascade", "Comma-separated consensus thresholds tau_2,...,tau_n"},
      {"--w", "w", "Mask weight for a model's own confident pseudo-labels"},
      {"--lambda", "lambda", "Unlabeled loss weight"},
      {"--mu", "mu", "Unlabeled to labeled batch ratio"},
      {"--batch", "batch_size", "Labeled batch size B"},
      {"--shared-unlabeled", "shared_unlabeled",
       "true: each objective adds every model's unlabeled loss; false: only its own"},
      {"--lr", "lr", "SGD learning rate"},
      {"--momentum", "momentum", "SGD momentum"},
      {"--wd", "weight_decay", "Weight decay"},
      {"--hidden", "hidden", "Comma-separated hidden layer widths"},
      {"--activation", "activation", "Hidden activation: relu or tanh"},
      {"--aug-sigma-weak", "aug.sigma_weak", "Vector weak augmentation noise sigma"},
      {"--aug-sigma-strong", "aug.sigma_strong", "Vector strong augmentation noise sigma"},
      {"--aug-drop-prob", "aug.vector_drop_prob", "Vector strong augmentation zeroing probability"},
      {"--aug-shift-weak", "aug.image_shift_weak", "Image weak augmentation max shift (px)"},
      {"--aug-shift-strong", "aug.image_shift_strong", "Image strong augmentation max shift (px)"},
      {"--predictions-every", "predictions_every",
       "Dump weak-view predictions of the unlabeled batch every N steps (0: never)"},
      {"--single-model-mode", "single_model_mode",
       "Each model keeps only its own confident pseudo-labels (FixMatch)", true},
      {"--conflict-drop", "conflict_drop", "Drop items where two confident models disagree", true},
      {"--cosine-lr", "cosine_lr", "Cosine learning-rate decay", true},
      {"--no-checkpoints", "checkpoints", "Do not write final checkpoints", true},
      {"--dry-run", "dry_run", "Write the resolved config and initial evaluation only", true},
  };
  return flags;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    const std::string t = trim(part);
    if (t.empty()) continue;
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      throw ConfigError("bad number '" + t + "'");
    }
    out.push_back(v);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T v{};
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError(key + ": bad value '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

// key=value tokens such as "C=4" into a map.
KeyValues parse_assignments(const std::vector<std::string>& tokens) {
  KeyValues kv;
  for (const auto& t : tokens) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("expected key=value, got '" + t + "'");
    kv[t.substr(0, eq)] = t.substr(eq + 1);
  }
  return kv;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Commands {
  CLI::App app{"Multi-model confidence-cascade pseudo-labeling for semi-supervised learning",
               "copseudo"};
  CLI::App* gen_data = nullptr;
  CLI::App* train = nullptr;
  CLI::App* fuse_trace = nullptr;
  CLI::App* compare = nullptr;

  // gen-data
  std::vector<std::string> synthetic;
  std::string cifar_dir;
  std::string split = "train";
  std::optional<std::size_t> mcar;
  std::vector<std::string> mnar;
  std::optional<std::uint64_t> seed;
  std::string out;

  // train
  std::map<std::string, std::string> train_values;
  std::map<std::string, bool> train_switches;
  std::string config_file;

  // fuse-trace
  std::string trace_in;
  std::string trace_out;
  std::optional<std::uint64_t> trace_seed;
  std::optional<std::uint64_t> trace_step;
  double trace_tau = 0.95;
  std::string trace_cascade;
  double trace_w = 0.75;
  bool trace_conflict_drop = false;
  bool trace_single = false;

  // compare
  std::string baseline_dir;
  std::string treatment_dir;
  std::string compare_csv;

  Commands() {
    app.require_subcommand(1);
    app.set_help_flag("-h,--help", "Print this help message and exit");

    gen_data = app.add_subcommand("gen-data", "Build a dataset file, optionally hiding labels");
    gen_data->set_help_flag("-h,--help", "Print this help message and exit");
    gen_data->add_option("--synthetic", synthetic,
                         "Synthetic Gaussian classes; keys C, d, n, sep, sigma (e.g. C=4 n=250)")
        ->expected(0, -1);
    gen_data->add_option("--cifar10", cifar_dir, "Directory with CIFAR-10 binary batch files");
    gen_data->add_option("--split", split, "CIFAR-10 split: train or test");
    gen_data->add_option("--mcar", mcar, "Keep exactly L uniformly chosen labels");
    gen_data->add_option("--mnar", mnar,
                         "Per-class label retention: p0=P ptail=P | p0=P gamma=G | probs=P,P,...")
        ->expected(1, -1);
    gen_data->add_option("--seed", seed, "Seed for generation and masking (required)");
    gen_data->add_option("--out", out, "Output dataset file")->required();

    train = app.add_subcommand("train", "Train models in lock step and write a run directory");
    train->set_help_flag("-h,--help", "Print this help message and exit");
    train->add_option("--config", config_file, "Flat key=value config file (flags take precedence)");
    for (const auto& f : train_flags()) {
      if (f.is_switch) {
        train->add_flag(f.flag, train_switches[f.key], f.help);
      } else {
        train->add_option(f.flag, train_values[f.flag], f.help);
      }
    }

    fuse_trace = app.add_subcommand("fuse-trace", "Re-run pseudo-label fusion on a prediction trace");
    fuse_trace->set_help_flag("-h,--help", "Print this help message and exit");
    fuse_trace->add_option("--in", trace_in, "Prediction CSV: item,model,p0..p{C-1}")->required();
    fuse_trace->add_option("--out", trace_out, "Decision CSV path (default: stdout)");
    fuse_trace->add_option("--seed", trace_seed, "Seed of the per-item coin-flip streams (required)");
    fuse_trace->add_option("--step", trace_step,
                           "Replay training step S: --seed is then the run's seed.fusion");
    fuse_trace->add_option("--tau", trace_tau, "Top confidence threshold");
    fuse_trace->add_option("--tau-cascade", trace_cascade,
                           "Comma-separated consensus thresholds (default 0.75 for 2 models, "
                           "0.85,0.75 for 3)");
    fuse_trace->add_option("--w", trace_w, "Mask weight for own confident pseudo-labels");
    fuse_trace->add_flag("--conflict-drop", trace_conflict_drop,
                         "Drop items where confident models disagree");
    fuse_trace->add_flag("--single-model-mode", trace_single,
                         "Each model keeps only its own confident pseudo-labels");

    compare = app.add_subcommand("compare", "Compare a treatment run against a baseline run");
    compare->set_help_flag("-h,--help", "Print this help message and exit");
    compare->add_option("baseline", baseline_dir, "Baseline run directory")->required();
    compare->add_option("treatment", treatment_dir, "Treatment run directory")->required();
    compare->add_option("--csv", compare_csv, "Also write the summary as CSV to this path");
  }
};

int cmd_gen_data(Commands& c, std::ostream& out) {
  if (!c.seed) throw ConfigError("seed required");
  const bool synthetic = c.gen_data->count("--synthetic") > 0;
  const bool cifar = !c.cifar_dir.empty();
  if (synthetic == cifar) throw ConfigError("choose exactly one of --synthetic or --cifar10");
  if (c.mcar && !c.mnar.empty()) throw ConfigError("choose at most one of --mcar or --mnar");

  MaskedDataset ds;
  if (synthetic) {
    SyntheticSpec spec;
    for (const auto& [k, v] : parse_assignments(c.synthetic)) {
      if (k == "C") spec.num_classes = parse_value<int>(k, v);
      else if (k == "d") spec.dim = parse_value<int>(k, v);
      else if (k == "n") spec.samples_per_class = parse_value<int>(k, v);
      else if (k == "sep") spec.class_separation = parse_value<double>(k, v);
      else if (k == "sigma") spec.noise_sigma = parse_value<double>(k, v);
      else throw ConfigError("unknown synthetic key '" + k + "'");
    }
    ds = generate_synthetic(spec, *c.seed);
  } else {
    if (c.split != "train" && c.split != "test") throw ConfigError("--split must be train or test");
    ds = load_cifar10(c.cifar_dir, c.split == "train" ? CifarSplit::train : CifarSplit::test);
  }

  // The masking stream is derived so it never aliases the generator stream.
  const std::uint64_t mask_seed = derive_seed(*c.seed, 0x6d61736b);
  if (c.mcar) {
    ds = apply_missingness(ds, {Mcar{*c.mcar}, mask_seed});
  } else if (!c.mnar.empty()) {
    const KeyValues kv = parse_assignments(c.mnar);
    Mnar mnar;
    const int classes = ds.num_classes();
    if (kv.contains("probs")) {
      if (kv.size() != 1) throw ConfigError("--mnar probs= cannot be combined with other keys");
      mnar.retention_prob_per_class = parse_double_list(kv.at("probs"));
    } else if (kv.contains("p0") && kv.contains("ptail") && kv.size() == 2) {
      mnar = head_tail_retention(classes, parse_value<double>("p0", kv.at("p0")),
                                 parse_value<double>("ptail", kv.at("ptail")));
    } else if (kv.contains("p0") && kv.contains("gamma") && kv.size() == 2) {
      mnar = geometric_retention(classes, parse_value<double>("p0", kv.at("p0")),
                                 parse_value<double>("gamma", kv.at("gamma")));
    } else {
      throw ConfigError("--mnar expects p0=P ptail=P, p0=P gamma=G, or probs=P,P,...");
    }
    ds = apply_missingness(ds, {std::move(mnar), mask_seed});
  }
  write_dataset(ds, c.out);
  out << "wrote " << c.out << ": N=" << ds.size() << " C=" << ds.num_classes() << " d=" << ds.dim()
      << " observed=" << ds.num_observed() << '\n';
  return kExitOk;
}

int cmd_train(Commands& c, std::ostream& out) {
  KeyValues flags;
  for (const auto& f : train_flags()) {
    if (c.train->count(f.flag) == 0) continue;
    if (f.is_switch) {
      flags[f.key] = std::string(f.key) == "checkpoints" ? "false" : "true";
    } else {
      if (flags.contains(f.key)) throw ConfigError("--tau2 and --tau-cascade are mutually exclusive");
      flags[f.key] = c.train_values[f.flag];
    }
  }
  KeyValues file;
  if (!c.config_file.empty()) file = read_key_values(c.config_file);

  std::string profile = "desk";
  if (file.contains("profile")) profile = file.at("profile");
  if (flags.contains("profile")) profile = flags.at("profile");
  KeyValues resolved = train_defaults(profile);
  for (const auto& [k, v] : file) {
    if (!resolved.contains(k) && k != "tau_cascade" && k != "seed" && k != "data" && k != "test" &&
        k != "out") {
      throw ConfigError("unknown config key '" + k + "'");
    }
    resolved[k] = v;
  }
  for (const auto& [k, v] : flags) resolved[k] = v;

  std::vector<std::string> errors;
  for (const char* required : {"data", "test", "out"}) {
    if (!resolved.contains(required)) errors.push_back(std::string(required) + " required");
  }
  TrainConfig cfg;
  try {
    cfg = train_config_from(resolved);
  } catch (const ConfigError& e) {
    errors.emplace_back(e.what());
  }
  if (!errors.empty()) {
    std::string msg;
    for (const auto& e : errors) msg += (msg.empty() ? "" : "\n") + e;
    throw ConfigError(msg);
  }

  const MaskedDataset ds = read_dataset(resolved.at("data"));
  const MaskedDataset test = read_dataset(resolved.at("test"));
  const TrainResult result = train(cfg, ds, test, resolved.at("out"));
  const auto& last = result.metrics.rows().back();
  out << "run " << resolved.at("out") << ": step " << last.step << " test_acc "
      << format_metric(last.test_acc) << " mask_ratio " << format_metric(last.mask_ratio) << '\n';
  return kExitOk;
}

int cmd_fuse_trace(Commands& c, std::ostream& out) {
  if (!c.trace_seed) throw ConfigError("seed required");
  const PredictionTrace trace = read_prediction_trace(c.trace_in);
  FusionConfig cfg;
  cfg.num_models = trace.num_models();
  cfg.tau = c.trace_tau;
  cfg.w = c.trace_w;
  cfg.conflict_drop = c.trace_conflict_drop;
  cfg.single_model_mode = c.trace_single;
  cfg.tau_cascade = c.trace_cascade.empty() ? FusionConfig::default_cascade(cfg.num_models)
                                            : parse_double_list(c.trace_cascade);
  const std::uint64_t seed = c.trace_step ? fusion_step_seed(*c.trace_seed, *c.trace_step) : *c.trace_seed;
  const auto decisions = fuse_trace(trace, cfg, seed);
  if (c.trace_out.empty()) {
    write_decision_trace(trace.items, decisions, cfg.num_models, out);
  } else {
    std::ofstream file(c.trace_out);
    if (!file) throw std::runtime_error("cannot write " + c.trace_out);
    write_decision_trace(trace.items, decisions, cfg.num_models, file);
  }
  return kExitOk;
}

int cmd_compare(Commands& c, std::ostream& out) {
  const RunMetrics base = read_metrics_csv(std::filesystem::path(c.baseline_dir) / "metrics.csv");
  const RunMetrics treat = read_metrics_csv(std::filesystem::path(c.treatment_dir) / "metrics.csv");
  const RunComparison cmp = compare_runs(base, treat);

  const auto signed_metric = [](double v) {
    std::string s = format_metric(v);
    return (v >= 0.0 && s != "nan") ? "+" + s : s;
  };
  out << "baseline:  " << c.baseline_dir << '\n'
      << "treatment: " << c.treatment_dir << '\n'
      << "common steps: " << cmp.common_steps << ", final step: " << cmp.final_step << "\n\n"
      << std::left << std::setw(12) << "metric" << std::setw(16) << "final_delta"
      << "best_delta\n"
      << std::setw(12) << "test_acc" << std::setw(16) << signed_metric(cmp.final_acc_delta)
      << signed_metric(cmp.best_acc_delta) << '\n'
      << std::setw(12) << "mask_ratio" << std::setw(16) << signed_metric(cmp.final_mask_delta)
      << signed_metric(cmp.best_mask_delta) << '\n';
  if (!c.compare_csv.empty()) {
    std::ofstream csv(c.compare_csv);
    if (!csv) throw std::runtime_error("cannot write " + c.compare_csv);
    csv << "metric,final_step,final_delta,best_delta\n"
        << "test_acc," << cmp.final_step << ',' << format_metric(cmp.final_acc_delta) << ','
        << format_metric(cmp.best_acc_delta) << '\n'
        << "mask_ratio," << cmp.final_step << ',' << format_metric(cmp.final_mask_delta) << ','
        << format_metric(cmp.best_mask_delta) << '\n';
  }
  return kExitOk;
}

}  // namespace

KeyValues train_defaults(const std::string& profile) {
  KeyValues kv = {
      {"profile", profile},
      {"models", "2"},
      {"tau", "0.95"},
      {"w", "0.75"},
      {"lambda", "1"},
      {"shared_unlabeled", "true"},
      {"lr", "0.03"},
      {"momentum", "0.9"},
      {"weight_decay", "0.0005"},
      {"cosine_lr", "false"},
      {"activation", "relu"},
      {"aug.sigma_weak", "0.05"},
      {"aug.sigma_strong", "0.25"},
      {"aug.vector_drop_prob", "0.1"},
      {"aug.image_shift_weak", "4"},
      {"aug.image_shift_strong", "8"},
      {"predictions_every", "0"},
      {"checkpoints", "true"},
      {"conflict_drop", "false"},
      {"single_model_mode", "false"},
      {"dry_run", "false"},
  };
  if (profile == "desk") {
    kv["batch_size"] = "16";
    kv["mu"] = "4";
    kv["steps"] = "2000";
    kv["eval_every"] = "100";
    kv["hidden"] = "32";
  } else if (profile == "paper") {
    kv["batch_size"] = "64";
    kv["mu"] = "7";
    kv["steps"] = "1048576";
    kv["eval_every"] = "1024";
    kv["hidden"] = "64";
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");
  }
  return kv;
}

TrainConfig train_config_from(const KeyValues& resolved) {
  std::vector<std::string> errors;
  TrainConfig cfg;
  const auto get = [&](const std::string& key, auto&& apply) {
    const auto it = resolved.find(key);
    if (it == resolved.end()) {
      errors.push_back(key + " missing");
      return;
    }
    try {
      apply(it->second);
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
  };

  get("models", [&](const std::string& v) { cfg.num_models = parse_value<std::size_t>("models", v); });
  get("steps", [&](const std::string& v) { cfg.steps = parse_value<std::uint64_t>("steps", v); });
  get("eval_every", [&](const std::string& v) { cfg.eval_every = parse_value<std::uint64_t>("eval_every", v); });
  get("dry_run", [&](const std::string& v) { cfg.dry_run = parse_bool("dry_run", v); });
  get("tau", [&](const std::string& v) { cfg.fusion.tau = parse_value<double>("tau", v); });
  get("w", [&](const std::string& v) { cfg.fusion.w = parse_value<double>("w", v); });
  get("conflict_drop", [&](const std::string& v) { cfg.fusion.conflict_drop = parse_bool("conflict_drop", v); });
  get("single_model_mode", [&](const std::string& v) {
    cfg.fusion.single_model_mode = parse_bool("single_model_mode", v);
  });
  get("lambda", [&](const std::string& v) { cfg.objective.lambda = parse_value<double>("lambda", v); });
  get("shared_unlabeled", [&](const std::string& v) {
    cfg.objective.shared_unlabeled = parse_bool("shared_unlabeled", v);
  });
  get("mu", [&](const std::string& v) { cfg.objective.mu = parse_value<double>("mu", v); });
  get("batch_size", [&](const std::string& v) { cfg.objective.batch_size = parse_value<std::size_t>("batch_size", v); });
  get("lr", [&](const std::string& v) { cfg.optimizer.learning_rate = parse_value<double>("lr", v); });
  get("momentum", [&](const std::string& v) { cfg.optimizer.momentum = parse_value<double>("momentum", v); });
  get("weight_decay", [&](const std::string& v) { cfg.optimizer.weight_decay = parse_value<double>("weight_decay", v); });
  get("cosine_lr", [&](const std::string& v) { cfg.optimizer.cosine_schedule = parse_bool("cosine_lr", v); });
  get("hidden", [&](const std::string& v) {
    cfg.hidden.clear();
    for (double h : parse_double_list(v)) cfg.hidden.push_back(static_cast<int>(h));
  });
  get("activation", [&](const std::string& v) {
    if (v == "relu") cfg.activation = Activation::relu;
    else if (v == "tanh") cfg.activation = Activation::tanh;
    else throw ConfigError("activation must be relu or tanh");
  });
  get("aug.sigma_weak", [&](const std::string& v) { cfg.augment.sigma_weak = parse_value<double>("aug.sigma_weak", v); });
  get("aug.sigma_strong", [&](const std::string& v) { cfg.augment.sigma_strong = parse_value<double>("aug.sigma_strong", v); });
  get("aug.vector_drop_prob", [&](const std::string& v) {
    cfg.augment.vector_drop_prob = parse_value<double>("aug.vector_drop_prob", v);
  });
  get("aug.image_shift_weak", [&](const std::string& v) {
    cfg.augment.image_shift_weak = parse_value<int>("aug.image_shift_weak", v);
  });
  get("aug.image_shift_strong", [&](const std::string& v) {
    cfg.augment.image_shift_strong = parse_value<int>("aug.image_shift_strong", v);
  });
  get("predictions_every", [&](const std::string& v) {
    cfg.predictions_every = parse_value<std::uint64_t>("predictions_every", v);
  });
  get("checkpoints", [&](const std::string& v) { cfg.write_checkpoints = parse_bool("checkpoints", v); });

  cfg.fusion.num_models = cfg.num_models;
  if (const auto it = resolved.find("tau_cascade"); it != resolved.end()) {
    try {
      cfg.fusion.tau_cascade = parse_double_list(it->second);
    } catch (const ConfigError& e) {
      errors.push_back(std::string("tau_cascade: ") + e.what());
    }
  } else {
    cfg.fusion.tau_cascade = FusionConfig::default_cascade(cfg.num_models);
    if (cfg.num_models > 3 && !cfg.fusion.single_model_mode) {
      errors.emplace_back("tau_cascade required for more than 3 models");
    }
  }
  if (cfg.num_models == 1) cfg.fusion.tau_cascade.clear();

  if (const auto it = resolved.find("seed"); it == resolved.end()) {
    errors.emplace_back("seed required");
  } else {
    try {
      const auto master = parse_value<std::uint64_t>("seed", it->second);
      cfg.seeds = SeedSet::derive(master, cfg.num_models);
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
  }
  for (const char* key : {"profile", "seed", "data", "test", "out"}) {
    if (const auto it = resolved.find(key); it != resolved.end()) cfg.extra_keys[key] = it->second;
  }
  if (resolved.find("tau_cascade") == resolved.end()) {
    std::string s;
    for (double t : cfg.fusion.tau_cascade) s += (s.empty() ? "" : ",") + format_double(t);
    cfg.extra_keys["tau_cascade"] = s;
  }

  if (errors.empty()) {
    try {
      cfg.validate();
    } catch (const ConfigError& e) {
      errors.emplace_back(e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return cfg;
}

std::vector<FlagDoc> list_flags() {
  Commands c;
  std::vector<FlagDoc> out;
  for (const CLI::App* sub : c.app.get_subcommands({})) {
    for (const CLI::Option* opt : sub->get_options()) {
      out.push_back({sub->get_name(), opt->get_name(), opt->get_description()});
    }
  }
  return out;
}

std::string help_text(const std::string& command) {
  Commands c;
  if (command.empty()) return c.app.help();
  return c.app.get_subcommand(command)->help();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Commands c;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    c.app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* sub = nullptr;
    for (const CLI::App* s : c.app.get_subcommands()) sub = s;
    out << (sub ? sub->help() : c.app.help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (c.gen_data->parsed()) return cmd_gen_data(c, out);
    if (c.train->parsed()) return cmd_train(c, out);
    if (c.fuse_trace->parsed()) return cmd_fuse_trace(c, out);
    return cmd_compare(c, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace copseudo::cli
