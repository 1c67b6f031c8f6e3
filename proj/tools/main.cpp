#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "genmix/checkpoint.hpp"
#include "genmix/data.hpp"
#include "genmix/defense.hpp"
#include "genmix/eval.hpp"
#include "genmix/parallel.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace genmix;
using genmix::cli::RunManifest;

namespace {

struct CommonOpts {
  std::string mnist_dir;
  std::string out = "out";
  std::uint64_t seed = 0;
  int batch = 128;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_mnist = true) {
  auto* mnist = cmd->add_option("--mnist-dir", o.mnist_dir,
                                "Directory with the IDX files (accepts .gz)");
  if (needs_mnist) mnist->required();
  cmd->add_option("--out", o.out, "Output root")->envname("GENMIX_OUT");
  cmd->add_option("--seed", o.seed, "Master seed for all randomness");
  cmd->add_option("--batch", o.batch, "Batch size");
  cmd->add_option("--threads", o.threads, "Worker thread cap (0 = hardware)");
}

fs::path resolve_idx(const fs::path& dir, const std::string& base) {
  const fs::path plain = dir / base;
  if (fs::exists(plain)) return plain;
  const fs::path gz = dir / (base + ".gz");
  if (fs::exists(gz)) return gz;
  throw IoError("missing " + plain.string() + " (also tried .gz)");
}

Dataset load_train(const fs::path& dir) {
  return load_idx(resolve_idx(dir, "train-images-idx3-ubyte"),
                  resolve_idx(dir, "train-labels-idx1-ubyte"));
}

Dataset load_train_images_only(const fs::path& dir) {
  return load_idx_images(resolve_idx(dir, "train-images-idx3-ubyte"));
}

Dataset load_test(const fs::path& dir) {
  return load_idx(resolve_idx(dir, "t10k-images-idx3-ubyte"),
                  resolve_idx(dir, "t10k-labels-idx1-ubyte"));
}

std::vector<AttackSpec> parse_roster(const std::vector<std::string>& flags) {
  if (flags.empty()) return default_roster();
  std::vector<AttackSpec> roster;
  roster.reserve(flags.size());
  for (const auto& f : flags) roster.push_back(AttackSpec::parse(f));
  return roster;
}

NetworkModel load_classifier(const fs::path& path) {
  Rng dummy(0);
  NetworkModel c = build_classifier(dummy);
  load_model(c, nullptr, path);
  return c;
}

void add_trace_inputs(RunManifest& man) {
  for (const auto& p : io_trace()) man.add_input(p);
}

// Streams per-step CSV rows and writes periodic checkpoints.
class FileTrainSink final : public TrainSink {
 public:
  FileTrainSink(const fs::path& log_path, fs::path out_root, int num_generators)
      : out_root_(std::move(out_root)), log_(log_path, std::ios::binary | std::ios::trunc) {
    if (!log_) throw IoError("cannot write " + log_path.string());
    log_ << log_header(num_generators) << "\n";
  }

  void on_step(const StepReport& r) override { log_ << log_row(r) << "\n"; }

  void on_checkpoint(EnsembleState& ens, int epoch) override {
    save_ensemble(ens, out_root_ / ("ensemble_epoch_" + std::to_string(epoch)));
  }

 private:
  fs::path out_root_;
  std::ofstream log_;
};

int cmd_pretrain(const CommonOpts& o, int epochs, float lr) {
  set_max_threads(o.threads);
  clear_io_trace();
  RunManifest man("pretrain", o.seed);
  man.set_config({{"mnist_dir", o.mnist_dir},
                  {"out", o.out},
                  {"seed", o.seed},
                  {"epochs", epochs},
                  {"batch", o.batch},
                  {"lr", lr}});
  const Dataset train = load_train(o.mnist_dir);
  const Dataset test = load_test(o.mnist_dir);
  RngStreams rngs(o.seed);
  PretrainResult res = pretrain_classifier(train, test, epochs, lr, rngs, o.batch);

  fs::create_directories(o.out);
  const fs::path ck = fs::path(o.out) / "classifier.ckpt";
  nlohmann::json meta{{"epoch", epochs}, {"seed", o.seed}, {"test_accuracy", res.test_accuracy}};
  save_model(res.model, nullptr, meta.dump(), ck);

  add_trace_inputs(man);
  man.add_output(ck);
  man.set_field("test_accuracy", res.test_accuracy);
  man.write(fs::path(o.out) / "manifest_pretrain.json");
  std::printf("test_accuracy %.4f\n", res.test_accuracy);
  return 0;
}

int cmd_train_defense(const CommonOpts& o, const std::string& classifier_path,
                      TrainConfig cfg, const std::vector<std::string>& attack_flags,
                      const std::string& mode,
                      const std::vector<std::string>& gen_ckpts,
                      const std::string& disc_ckpt) {
  set_max_threads(o.threads);
  clear_io_trace();
  cfg.seed = o.seed;
  cfg.batch_size = o.batch;
  cfg.validate();
  const auto roster = parse_roster(attack_flags);

  RunManifest man("train-defense", o.seed);
  nlohmann::json config = nlohmann::json::parse(cfg.to_json());
  config["mode"] = mode;
  config["classifier"] = classifier_path;
  nlohmann::json roster_json = nlohmann::json::array();
  for (const auto& s : roster) roster_json.push_back(s.full_str());
  config["roster"] = roster_json;
  man.set_config(config);

  fs::create_directories(o.out);
  const fs::path ens_dir = fs::path(o.out) / "ensemble";
  EnsembleState ens;
  if (mode == "separate") {
    if (gen_ckpts.empty() || disc_ckpt.empty())
      throw ConfigError("--mode separate needs --gen-ckpt (repeated) and --disc-ckpt");
    if (gen_ckpts.size() != roster.size())
      throw ConfigError("separate mode expects one generator checkpoint per roster attack");
    std::vector<fs::path> paths(gen_ckpts.begin(), gen_ckpts.end());
    for (const auto& p : paths) man.add_input(p);
    man.add_input(disc_ckpt);
    ens = train_separate_then_combine(paths, disc_ckpt, roster);
  } else if (mode == "joint") {
    NetworkModel classifier = load_classifier(classifier_path);
    // The defense is unsupervised: only the image file is opened here.
    const Dataset images = load_train_images_only(o.mnist_dir);
    RngStreams rngs(o.seed);
    const SplitPair split = split_train(images, rngs);
    FileTrainSink sink(fs::path(o.out) / "train_log.csv", o.out, cfg.num_generators);
    ens = train_defense(split, classifier, roster, cfg, &sink);
    man.add_input(classifier_path);
  } else {
    throw ConfigError("--mode must be joint or separate");
  }
  save_ensemble(ens, ens_dir);
  if (cfg.faster_init)
    man.set_field("init", "faster: one identity-initialized generator cloned with " +
                              std::to_string(cfg.perturb_fraction) + " of weights zeroed");

  add_trace_inputs(man);
  for (const auto& entry : fs::directory_iterator(ens_dir)) man.add_output(entry.path());
  if (mode == "joint") man.add_output(fs::path(o.out) / "train_log.csv");
  man.write(fs::path(o.out) / "manifest_train_defense.json");
  std::printf("ensemble written to %s (%d generators)\n", ens_dir.string().c_str(),
              static_cast<int>(ens.generators.size()));
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& classifier_path,
                 const std::string& ensemble_dir,
                 const std::vector<std::string>& attack_flags, const std::string& setting,
                 bool emit_grids) {
  set_max_threads(o.threads);
  clear_io_trace();
  RunManifest man("evaluate", o.seed);
  man.set_config({{"mnist_dir", o.mnist_dir},
                  {"out", o.out},
                  {"seed", o.seed},
                  {"batch", o.batch},
                  {"classifier", classifier_path},
                  {"ensemble_dir", ensemble_dir},
                  {"setting", setting},
                  {"emit_grids", emit_grids}});
  NetworkModel classifier = load_classifier(classifier_path);
  EnsembleState ens = load_ensemble(ensemble_dir);
  const auto roster = attack_flags.empty() && !ens.roster.empty()
                          ? ens.roster
                          : parse_roster(attack_flags);
  const Dataset test = load_test(o.mnist_dir);
  RngStreams rngs(o.seed);
  EvaluationReport report = post_defense_accuracy(ens, classifier, test, roster, rngs, o.batch);
  const auto labels = specialization_labels(report);

  fs::create_directories(o.out);
  const fs::path out(o.out);
  write_accuracy_csv(report, out / "accuracy.csv");
  write_wins_csv(report, out / "wins.csv");
  write_summary_csv(report, setting, out / "summary.csv");
  write_specialization_csv(labels, out / "specialization.csv");
  for (const char* f : {"accuracy.csv", "wins.csv", "summary.csv", "specialization.csv"})
    man.add_output(out / f);
  if (emit_grids) {
    emit_sample_grid(ens, classifier, test, roster, rngs, out / "grids");
    emit_heatmaps(report, out / "grids");
    man.set_field("grids_dir", (out / "grids").string());
  }
  man.add_input(classifier_path);
  add_trace_inputs(man);
  man.set_field("overall_accuracy", report.overall_accuracy);
  man.set_field("baseline_attacked_accuracy", report.baseline_attacked_accuracy);
  man.write(out / "manifest_evaluate.json");
  std::printf("overall_accuracy %.9g\n", report.overall_accuracy);
  std::printf("baseline_attacked_accuracy %.9g\n", report.baseline_attacked_accuracy);
  return 0;
}

int cmd_attack_bench(const CommonOpts& o, const std::string& classifier_path,
                     const std::vector<std::string>& attack_flags, bool cache_attacks) {
  set_max_threads(o.threads);
  clear_io_trace();
  RunManifest man("attack-bench", o.seed);
  const auto roster = parse_roster(attack_flags);
  man.set_config({{"mnist_dir", o.mnist_dir},
                  {"out", o.out},
                  {"seed", o.seed},
                  {"batch", o.batch},
                  {"classifier", classifier_path},
                  {"cache_attacks", cache_attacks}});
  NetworkModel classifier = load_classifier(classifier_path);
  const Dataset train = load_train(o.mnist_dir);
  RngStreams rngs(o.seed);
  const auto perm = rngs.named(streams::kShuffle).permutation(static_cast<int>(train.size()));
  const auto n = static_cast<std::size_t>(std::min<std::int64_t>(o.batch, train.size()));
  const std::vector<int> idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
  const Tensor x = train.image_batch(idx);
  const auto y = train.label_batch(idx);

  fs::create_directories(o.out);
  nlohmann::json rows = nlohmann::json::array();
  std::printf("%-6s %10s %10s\n", "attack", "epsilon", "success");
  for (const auto& spec : roster) {
    const AttackResult res = apply_attack(spec, classifier, x, y, rngs.named(streams::kNoise));
    const double rate = success_rate(res);
    std::printf("%-6s %10g %9.1f%%\n", attack_kind_str(spec.kind).c_str(),
                static_cast<double>(spec.epsilon), 100.0 * rate);
    rows.push_back({{"attack", attack_kind_str(spec.kind)},
                    {"epsilon", spec.epsilon},
                    {"success_rate", rate}});
    if (cache_attacks) {
      const fs::path cache =
          fs::path(o.out) / ("cache_" + attack_kind_str(spec.kind) + ".ckpt");
      save_attack_cache(cache, spec, res.adversarial, y, res.success);
      man.add_output(cache);
    }
  }
  man.add_input(classifier_path);
  add_trace_inputs(man);
  man.set_field("results", rows);
  man.write(fs::path(o.out) / "manifest_attack_bench.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixture-of-generators adversarial defense toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Config file with key = value lines; flags win");

  CommonOpts pre_o, train_o, eval_o, bench_o;
  int pre_epochs = 100;
  float pre_lr = 1e-3f;
  auto* pre = app.add_subcommand("pretrain", "Pretrain the classifier");
  add_common(pre, pre_o);
  pre->add_option("--epochs", pre_epochs, "Training epochs");
  pre->add_option("--lr", pre_lr, "Adam learning rate");

  TrainConfig cfg;
  std::string train_classifier, train_mode = "joint", disc_ckpt;
  std::vector<std::string> train_attacks, gen_ckpts;
  auto* train = app.add_subcommand("train-defense", "Train the generator ensemble");
  add_common(train, train_o);
  train->add_option("--classifier", train_classifier, "Pretrained classifier checkpoint")
      ->required();
  train->add_option("--epochs", cfg.train_epochs, "Competitive training epochs");
  train->add_option("--init-epochs", cfg.init_epochs, "Identity initialization epochs");
  train->add_option("--lr", cfg.lr, "Adam learning rate");
  train->add_option("--generators", cfg.num_generators, "Number of generators");
  train->add_option("--attack", train_attacks, "Attack KIND:EPS[:key=val,...], repeatable");
  train->add_option("--mode", train_mode, "joint|separate");
  train->add_flag("--faster-init", cfg.faster_init,
                  "Clone one identity-initialized generator and zero a fraction of weights");
  train->add_option("--perturb", cfg.perturb_fraction, "Faster-init zeroed weight fraction");
  train->add_flag("--large-generator", cfg.large_generator, "Use the large generator baseline");
  train->add_flag("--cache-attacks", cfg.cache_attacks,
                  "Precompute attacked images once per roster entry");
  train->add_flag("--per-example-winner", cfg.per_example_winner,
                  "Select the training winner per example instead of per batch");
  train->add_option("--checkpoint-every", cfg.checkpoint_every, "Checkpoint cadence in epochs");
  train->add_option("--gen-ckpt", gen_ckpts, "Separate mode: generator checkpoint, repeatable");
  train->add_option("--disc-ckpt", disc_ckpt, "Separate mode: discriminator checkpoint");

  std::string eval_classifier, eval_ensemble, eval_setting = "default", grids_dir;
  std::vector<std::string> eval_attacks;
  bool emit_grids = false;
  auto* ev = app.add_subcommand("evaluate", "Evaluate post-defense accuracy");
  add_common(ev, eval_o);
  ev->add_option("--classifier", eval_classifier, "Pretrained classifier checkpoint")->required();
  ev->add_option("--ensemble-dir", eval_ensemble, "Directory with gen_*.ckpt and disc.ckpt")
      ->required();
  ev->add_option("--attack", eval_attacks, "Override the roster, repeatable");
  ev->add_option("--setting", eval_setting, "Setting name for summary.csv");
  ev->add_flag("--emit-grids", emit_grids, "Write PGM sample grids and heatmaps");

  std::string bench_classifier;
  std::vector<std::string> bench_attacks;
  bool bench_cache = false;
  auto* bench = app.add_subcommand("attack-bench", "Success rates on a seeded batch");
  add_common(bench, bench_o);
  bench->add_option("--classifier", bench_classifier, "Pretrained classifier checkpoint")
      ->required();
  bench->add_option("--attack", bench_attacks, "Attack KIND:EPS[:key=val,...], repeatable");
  bench->add_flag("--cache-attacks", bench_cache, "Write attacked-dataset cache files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) return cmd_pretrain(pre_o, pre_epochs, pre_lr);
    if (train->parsed())
      return cmd_train_defense(train_o, train_classifier, cfg, train_attacks, train_mode,
                               gen_ckpts, disc_ckpt);
    if (ev->parsed())
      return cmd_evaluate(eval_o, eval_classifier, eval_ensemble, eval_attacks, eval_setting,
                          emit_grids);
    if (bench->parsed())
      return cmd_attack_bench(bench_o, bench_classifier, bench_attacks, bench_cache);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
