#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lwta/attacks.hpp"
#include "lwta/baseline.hpp"
#include "lwta/cli.hpp"
#include "lwta/error.hpp"
#include "lwta/model_io.hpp"
#include "lwta/objective.hpp"
#include "lwta/ops.hpp"
#include "lwta/training.hpp"
#include "manifest.hpp"

namespace lwta::cli {

namespace {

using nlohmann::json;

// Raised for bad flag values found after CLI11 parsing.
class UsageError : public Error {
 public:
  using Error::Error;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::uint64_t parse_seed(const std::string& text) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used != text.size()) throw UsageError("bad seed '" + text + "'");
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("bad seed '" + text + "'");
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

std::string version() { return LWTA_VERSION; }

json attack_config_json(const AttackConfig& cfg) {
  json j = {{"epsilon", cfg.epsilon},     {"step_size", cfg.step_size},
            {"num_steps", cfg.num_steps}, {"eot_samples", cfg.eot_samples},
            {"loss", to_string(cfg.loss)}, {"random_start", cfg.random_start},
            {"input_bounds", {cfg.lower_bound, cfg.upper_bound}}, {"seed", cfg.seed}};
  j["temperature"] = cfg.temperature ? json(*cfg.temperature) : json(nullptr);
  return j;
}

AttackLoss parse_loss(const std::string& name) {
  if (name == "ce") return AttackLoss::cross_entropy;
  if (name == "dlr") return AttackLoss::dlr;
  throw UsageError("unknown attack loss '" + name + "' (expected ce or dlr)");
}

struct TrainFlags {
  std::string data, eval_data, arch = "mlp-small", eps = "8/255", step_size = "0.007", tau = "0.67", tau_min,
                                   tau_decay = "0", kl_weight, lr0 = "0.1", momentum = "0.9", seed = "0", out;
  std::size_t epochs = 1, attack_steps = 10, batch_size = 128, lr_halving_start = 75, eot = 1, max_steps = 0,
              eval_limit = 0, eval_steps = 20;
  std::string eval_eps, eval_step_size = "0.007";
  bool no_random_start = false, fp64 = false;
};

struct AttackFlags {
  std::string model, data, eps = "8/255", step_size = "0.007", loss = "ce", seed = "0", out, tau;
  std::size_t steps = 20, eot = 1, predict_samples = 1, batch_size = 128, limit = 0, vote = 1;
  bool no_random_start = false;
};

struct InspectFlags {
  std::string model, input, seed = "0", out;
  std::size_t index = 0, draws = 10;
};

struct SynthFlags {
  std::string out, prefix = "blobs", separation = "0.6", noise = "0.1", seed = "0";
  std::size_t classes = 10, per_class = 100, side = 4, channels = 1;
};

int cmd_train(const TrainFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.arguments = args;
  manifest.started_at = utc_timestamp();
  manifest.library_version = version();

  const Dataset data = load_data(f.data);
  std::optional<Dataset> eval_data;
  if (!f.eval_data.empty()) {
    eval_data = load_data(f.eval_data);
    if (f.eval_limit) eval_data = head(*eval_data, f.eval_limit);
  }

  TrainConfig cfg;
  cfg.epochs = f.epochs;
  cfg.batch_size = f.batch_size;
  cfg.lr0 = parse_number(f.lr0);
  cfg.lr_halving_start_epoch = f.lr_halving_start;
  cfg.momentum = parse_number(f.momentum);
  cfg.attack.epsilon = parse_number(f.eps);
  cfg.attack.step_size = parse_number(f.step_size);
  cfg.attack.num_steps = f.attack_steps;
  cfg.attack.eot_samples = f.eot;
  cfg.attack.random_start = !f.no_random_start;
  cfg.temperature.initial = parse_number(f.tau);
  cfg.temperature.minimum = f.tau_min.empty() ? cfg.temperature.initial : parse_number(f.tau_min);
  cfg.temperature.decay = parse_number(f.tau_decay);
  if (!f.kl_weight.empty()) cfg.kl_weight = parse_number(f.kl_weight);
  cfg.seed = parse_seed(f.seed);
  cfg.attack.seed = cfg.seed;
  cfg.max_steps_per_epoch = f.max_steps;
  cfg.eval_attack.epsilon = f.eval_eps.empty() ? cfg.attack.epsilon : parse_number(f.eval_eps);
  cfg.eval_attack.step_size = parse_number(f.eval_step_size);
  cfg.eval_attack.num_steps = f.eval_steps;
  cfg.eval_attack.seed = cfg.seed;
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }

  NetworkSpec spec;
  try {
    spec = parse_architecture(f.arch, InputShape{data.height(), data.width(), data.channels()}, data.classes);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  spec.temperature = cfg.temperature.initial;
  Rng init_rng = Rng(cfg.seed).derive(0x1417);
  Network net = init_weights(spec, init_rng, InitKind::fan_in_uniform,
                             f.fp64 ? WeightPrecision::fp64 : WeightPrecision::fp32);

  const std::filesystem::path dir = f.out;
  std::filesystem::create_directories(dir);
  cfg.checkpoint_path = dir / "model.lwta";
  manifest.seed = cfg.seed;
  manifest.dataset_fingerprint = fingerprint(data);

  auto result = adversarial_train(net, data, cfg, eval_data ? &*eval_data : nullptr, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " lr " << r.lr << " tau " << r.tau << " nelbo " << r.nelbo << '\n';
  });
  save_model(result.network, *cfg.checkpoint_path);
  write_text(dir / "history.csv", result.history.to_csv());

  manifest.finished_at = utc_timestamp();
  json config = {{"data", f.data},
                 {"arch", f.arch},
                 {"architecture", describe(result.network)},
                 {"epochs", cfg.epochs},
                 {"batch_size", cfg.batch_size},
                 {"lr0", cfg.lr0},
                 {"lr_halving_start_epoch", cfg.lr_halving_start_epoch},
                 {"momentum", cfg.momentum},
                 {"tau", cfg.temperature.initial},
                 {"tau_min", cfg.temperature.minimum},
                 {"tau_decay", cfg.temperature.decay},
                 {"kl_weight", cfg.kl_weight.value_or(1.0 / static_cast<double>(data.size()))},
                 {"attack", attack_config_json(cfg.attack)},
                 {"weight_precision", f.fp64 ? "fp64" : "fp32"}};
  write_text(dir / "manifest.json", manifest_json(manifest, config).dump(2) + "\n");
  out << "wrote " << (dir / "model.lwta").string() << '\n';
  return 0;
}

int cmd_attack(const AttackFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "attack";
  manifest.arguments = args;
  manifest.started_at = utc_timestamp();
  manifest.library_version = version();

  const Network net = load_model(f.model);
  Dataset data = load_data(f.data);
  if (f.limit) data = head(data, f.limit);

  AttackConfig cfg;
  cfg.epsilon = parse_number(f.eps);
  cfg.step_size = parse_number(f.step_size);
  cfg.num_steps = f.steps;
  cfg.eot_samples = f.eot;
  cfg.loss = parse_loss(f.loss);
  cfg.random_start = !f.no_random_start;
  cfg.seed = parse_seed(f.seed);
  if (!f.tau.empty()) cfg.temperature = parse_number(f.tau);
  if (cfg.loss == AttackLoss::dlr && data.classes < 3) {
    throw UsageError("DLR loss needs at least 3 classes, data has " + std::to_string(data.classes));
  }
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  if (f.predict_samples < 1) throw UsageError("--predict-samples must be >= 1");

  EvaluationOptions opts;
  opts.prediction_samples = f.predict_samples;
  opts.batch_size = f.batch_size;
  opts.vote_repeats = f.vote;
  const AttackReport report = evaluate_robustness(data, net, cfg, opts);

  manifest.seed = cfg.seed;
  manifest.dataset_fingerprint = fingerprint(data);
  manifest.finished_at = utc_timestamp();
  json config = attack_config_json(cfg);
  config["prediction_samples"] = f.predict_samples;
  config["vote_repeats"] = f.vote;
  config["model"] = f.model;
  config["data"] = f.data;
  config["examples"] = data.size();
  std::vector<int> success;
  for (bool s : report.attack_success) success.push_back(s ? 1 : 0);
  json doc = {{"natural_accuracy", report.natural_accuracy},
              {"robust_accuracy", report.robust_accuracy},
              {"mean_linf", report.mean_linf},
              {"max_linf", report.max_linf},
              {"attack_success", success},
              {"config", config},
              {"manifest", manifest_json(manifest, config)}};
  const std::string text = doc.dump(2) + "\n";
  if (f.out.empty()) {
    out << text;
  } else {
    write_text(f.out, text);
  }
  return 0;
}

double empirical_entropy(const std::map<std::size_t, std::size_t>& counts, std::size_t total) {
  double h = 0.0;
  for (const auto& [winner, c] : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h == 0.0 ? 0.0 : h;  // no negative zero
}

int cmd_inspect(const InspectFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  RunManifest manifest;
  manifest.command = "inspect-winners";
  manifest.arguments = args;
  manifest.started_at = utc_timestamp();
  manifest.library_version = version();
  if (f.draws < 1) throw UsageError("--draws must be >= 1");

  const Network net = load_model(f.model);
  const Dataset data = load_data(f.input);
  if (f.index >= data.size()) throw UsageError("--index out of range");
  const Batch one = gather(data, {f.index});
  const auto seed = parse_seed(f.seed);
  const Rng root(seed);

  // per layer, per draw: winner index for every (position, block)
  std::vector<std::vector<std::vector<std::size_t>>> winners;
  std::vector<std::size_t> blocks, units, positions;
  for (std::size_t r = 0; r < f.draws; ++r) {
    Rng rng = root.derive(r);
    NoGradGuard no_grad;
    const auto pass = forward(net, one.images, ForwardOptions{SampleMode::hard, net.temperature}, rng);
    if (winners.empty()) {
      winners.resize(pass.winners.size());
      for (const auto& s : pass.winners) {
        const auto& shape = s.probs.shape();
        units.push_back(shape.back());
        blocks.push_back(shape[shape.size() - 2]);
        positions.push_back(s.probs.size() / (shape.back() * shape[shape.size() - 2]));
      }
    }
    for (std::size_t k = 0; k < pass.winners.size(); ++k) winners[k].push_back(argmax(pass.winners[k].sample));
  }

  json layers = json::array();
  std::size_t lwta_index = 0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& layer = net.layers[li];
    const bool dense = std::holds_alternative<DenseLwtaLayer>(layer);
    if (!dense && !std::holds_alternative<ConvLwtaLayer>(layer)) continue;
    const std::size_t k = lwta_index++;
    json entry = {{"layer", li},
                  {"kind", dense ? "dense_lwta" : "conv_lwta"},
                  {"blocks", blocks[k]},
                  {"units", units[k]},
                  {"positions", positions[k]},
                  {"winners", winners[k]}};
    if (f.draws == 1) {
      entry["block_entropy"] = nullptr;
      entry["mean_entropy"] = nullptr;
    } else {
      std::vector<double> per_block(blocks[k], 0.0);
      for (std::size_t b = 0; b < blocks[k]; ++b) {
        double acc = 0.0;
        for (std::size_t p = 0; p < positions[k]; ++p) {
          std::map<std::size_t, std::size_t> counts;
          for (const auto& draw : winners[k]) ++counts[draw[p * blocks[k] + b]];
          acc += empirical_entropy(counts, f.draws);
        }
        per_block[b] = acc / static_cast<double>(positions[k]);
      }
      double mean_entropy = 0.0;
      for (double h : per_block) mean_entropy += h;
      mean_entropy /= static_cast<double>(per_block.size());
      entry["block_entropy"] = per_block;
      entry["mean_entropy"] = mean_entropy;
    }
    layers.push_back(entry);
  }

  manifest.seed = seed;
  manifest.dataset_fingerprint = fingerprint(data);
  manifest.finished_at = utc_timestamp();
  json doc = {{"model", f.model},
              {"example_index", f.index},
              {"label", one.labels[0]},
              {"draws", f.draws},
              {"layers", layers},
              {"manifest", manifest_json(manifest, json{{"input", f.input}, {"index", f.index}, {"draws", f.draws}})}};
  const std::string text = doc.dump(2) + "\n";
  if (f.out.empty()) {
    out << text;
  } else {
    write_text(f.out, text);
  }
  return 0;
}

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  const std::size_t dim = f.side * f.side * f.channels;
  Dataset d = synth_blobs(f.classes, f.per_class, dim, parse_number(f.separation), parse_seed(f.seed),
                          parse_number(f.noise));
  d = reshape_images(d, f.side, f.side, f.channels);
  const std::filesystem::path dir = f.out;
  std::filesystem::create_directories(dir);
  const auto images = dir / (f.prefix + "-images.idx");
  const auto labels = dir / (f.prefix + "-labels.idx");
  if (f.channels != 1) throw UsageError("IDX output holds single-channel images");
  write_idx(d, images, labels);
  out << "idx:" << images.string() << "," << labels.string() << '\n';
  return 0;
}

}  // namespace

double parse_number(const std::string& text) {
  const std::string t = trim(text);
  auto parse_one = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::logic_error&) {
      throw UsageError("not a number: '" + text + "'");
    }
    if (used != s.size()) throw UsageError("not a number: '" + text + "'");
    return v;
  };
  const auto slash = t.find('/');
  if (slash == std::string::npos) return parse_one(t);
  const double num = parse_one(trim(t.substr(0, slash)));
  const double den = parse_one(trim(t.substr(slash + 1)));
  if (den == 0.0) throw UsageError("zero denominator in '" + text + "'");
  return num / den;
}

Dataset load_data(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("data source needs a kind prefix: '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  Dataset d;
  if (kind == "idx") {
    const auto parts = split(rest, ',');
    if (parts.size() != 2) throw UsageError("idx data needs idx:<images>,<labels>");
    d = load_idx(parts[0], parts[1]);
  } else if (kind == "cifar10") {
    const auto parts = split(rest, ',');
    const bool test = parts.size() > 1 && parts[1] == "test";
    d = load_cifar10_binary(parts[0], test ? CifarSplit::test : CifarSplit::train);
  } else if (kind == "cifar10-file") {
    d = load_cifar10_file(rest);
  } else if (kind == "blobs") {
    std::map<std::string, std::string> kv = {{"classes", "10"}, {"n", "100"},    {"dim", "16"}, {"sep", "0.6"},
                                             {"noise", "0.1"},  {"seed", "0"}, {"side", "0"}};
    for (const auto& item : split(rest, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos || !kv.count(item.substr(0, eq))) throw UsageError("bad blobs option '" + item + "'");
      kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    const auto classes = static_cast<std::size_t>(parse_number(kv["classes"]));
    const auto n = static_cast<std::size_t>(parse_number(kv["n"]));
    const auto dim = static_cast<std::size_t>(parse_number(kv["dim"]));
    const auto side = static_cast<std::size_t>(parse_number(kv["side"]));
    try {
      d = synth_blobs(classes, n, dim, parse_number(kv["sep"]), parse_seed(kv["seed"]), parse_number(kv["noise"]));
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
    if (side) {
      if (side * side != dim) throw UsageError("blobs side^2 must equal dim");
      d = reshape_images(d, side, side, 1);
    }
  } else {
    throw UsageError("unknown data kind '" + kind + "'");
  }
  d.validate();
  return d;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic LWTA networks: adversarial training and robustness evaluation", "lwta"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "PGD adversarial training of an LWTA (or ReLU twin) network");
  train->add_option("--data", tf.data, "training data source")->required();
  train->add_option("--eval-data", tf.eval_data, "data evaluated after every epoch");
  train->add_option("--eval-limit", tf.eval_limit, "use only the first N evaluation examples");
  train->add_option("--arch", tf.arch, "mlp-small, cnn-small, relu-twin:<preset> or inline layers")->capture_default_str();
  train->add_option("--epochs", tf.epochs)->capture_default_str();
  train->add_option("--batch-size", tf.batch_size)->capture_default_str();
  train->add_option("--eps", tf.eps, "inner PGD radius (fractions allowed)")->capture_default_str();
  train->add_option("--attack-steps", tf.attack_steps)->capture_default_str();
  train->add_option("--step-size", tf.step_size)->capture_default_str();
  train->add_option("--eot", tf.eot, "EoT gradient samples for the inner attack")->capture_default_str();
  train->add_flag("--no-random-start", tf.no_random_start);
  train->add_option("--tau", tf.tau, "relaxation temperature")->capture_default_str();
  train->add_option("--tau-min", tf.tau_min);
  train->add_option("--tau-decay", tf.tau_decay)->capture_default_str();
  train->add_option("--kl-weight", tf.kl_weight, "default 1/num_examples");
  train->add_option("--lr0", tf.lr0)->capture_default_str();
  train->add_option("--lr-halving-start", tf.lr_halving_start)->capture_default_str();
  train->add_option("--momentum", tf.momentum)->capture_default_str();
  train->add_option("--max-steps-per-epoch", tf.max_steps);
  train->add_option("--eval-eps", tf.eval_eps);
  train->add_option("--eval-steps", tf.eval_steps)->capture_default_str();
  train->add_option("--eval-step-size", tf.eval_step_size)->capture_default_str();
  train->add_flag("--fp64", tf.fp64, "keep weights in 64-bit precision");
  train->add_option("--seed", tf.seed)->capture_default_str();
  train->add_option("--out", tf.out, "output directory")->required();

  AttackFlags af;
  auto* attack = app.add_subcommand("attack", "natural and robust accuracy under an l_inf PGD attack");
  attack->add_option("--model", af.model)->required();
  attack->add_option("--data", af.data)->required();
  attack->add_option("--eps", af.eps)->capture_default_str();
  attack->add_option("--steps", af.steps)->capture_default_str();
  attack->add_option("--step-size", af.step_size)->capture_default_str();
  attack->add_option("--eot", af.eot, "gradient samples averaged per step")->capture_default_str();
  attack->add_option("--loss", af.loss, "ce or dlr")->capture_default_str();
  attack->add_option("--predict-samples", af.predict_samples, "L samples averaged per prediction")->capture_default_str();
  attack->add_option("--vote", af.vote, "majority vote over R prediction repeats")->capture_default_str();
  attack->add_option("--tau", af.tau, "attack temperature (default: model's)");
  attack->add_flag("--no-random-start", af.no_random_start);
  attack->add_option("--batch-size", af.batch_size)->capture_default_str();
  attack->add_option("--limit", af.limit, "first N examples only");
  attack->add_option("--seed", af.seed)->capture_default_str();
  attack->add_option("--out", af.out, "write the JSON report here instead of stdout");

  InspectFlags inf;
  auto* inspect = app.add_subcommand("inspect-winners", "winner indices over repeated draws for one input");
  inspect->add_option("--model", inf.model)->required();
  inspect->add_option("--input", inf.input, "data source holding the example")->required();
  inspect->add_option("--index", inf.index)->capture_default_str();
  inspect->add_option("--draws", inf.draws)->capture_default_str();
  inspect->add_option("--seed", inf.seed)->capture_default_str();
  inspect->add_option("--out", inf.out);

  SynthFlags sf;
  auto* synth = app.add_subcommand("make-blobs", "write a synthetic Gaussian-blob dataset as IDX files");
  synth->add_option("--out", sf.out, "output directory")->required();
  synth->add_option("--prefix", sf.prefix)->capture_default_str();
  synth->add_option("--classes", sf.classes)->capture_default_str();
  synth->add_option("--per-class", sf.per_class)->capture_default_str();
  synth->add_option("--side", sf.side, "images are side x side")->capture_default_str();
  synth->add_option("--separation", sf.separation)->capture_default_str();
  synth->add_option("--noise", sf.noise)->capture_default_str();
  synth->add_option("--seed", sf.seed)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    err << (sub ? sub->help() : app.help());
    return 2;
  }

  try {
    if (*train) return cmd_train(tf, args, out);
    if (*attack) return cmd_attack(af, args, out);
    if (*inspect) return cmd_inspect(inf, args, out);
    if (*synth) return cmd_synth(sf, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ParameterError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ModelIoError& e) {
    err << "error: cannot load model: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace lwta::cli
