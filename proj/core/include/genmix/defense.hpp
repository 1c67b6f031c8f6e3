#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genmix/adam.hpp"
#include "genmix/attacks.hpp"
#include "genmix/data.hpp"
#include "genmix/models.hpp"

namespace genmix {

struct TrainConfig {
  int num_generators = 1;
  int init_epochs = 10;
  int train_epochs = 100;
  int batch_size = 128;
  float lr = 1e-3f;
  bool faster_init = false;
  float perturb_fraction = 0.05f;
  std::uint64_t seed = 0;
  bool per_example_winner = false;  // training-time winner granularity
  bool large_generator = false;
  bool cache_attacks = false;  // precompute attacked images once per roster entry
  int checkpoint_every = 10;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// N' generators competing against one discriminator, with per-model
// optimizer state that is never shared.
struct EnsembleState {
  std::vector<NetworkModel> generators;
  NetworkModel discriminator;
  std::vector<AdamState> gen_opt;
  AdamState disc_opt;
  std::vector<AttackSpec> roster;
  TrainConfig config;
  int epoch = 0;
};

struct StepReport {
  int epoch = 0;
  int step = 0;
  AttackKind attack = AttackKind::Fgsm;
  int winner = 0;
  std::vector<double> scores;  // batch-mean discriminator score per generator
  double loss_g = 0.0;
  double loss_d = 0.0;  // negative of the Eq.-style discriminator objective
};

// Receives per-step rows and periodic checkpoints during training.
class TrainSink {
 public:
  virtual ~TrainSink() = default;
  virtual void on_step(const StepReport&) {}
  virtual void on_checkpoint(EnsembleState&, int epoch) { (void)epoch; }
};

std::string log_header(int num_generators);
std::string log_row(const StepReport& r);

// Batch-mean argmax; ties go to the lowest index.
int select_winner(std::span<const double> scores);

struct PretrainResult {
  NetworkModel model;
  double test_accuracy = 0.0;
};

// Cross-entropy + Adam over the labeled train set; accuracy measured on the
// held-out test set in eval mode. Throws NumericError (with the epoch index)
// if the loss goes NaN.
PretrainResult pretrain_classifier(const Dataset& train, const Dataset& test, int epochs,
                                   float lr, RngStreams& rngs, int batch_size = 128);

double dataset_accuracy(NetworkModel& model, const Dataset& d, int batch_size = 256);

// Trains each generator toward reproducing its adversarial input,
// G(x') ~= x', one attack sampled per batch. The discriminator is untouched.
void identity_init(std::vector<NetworkModel>& gens, std::vector<AdamState>& opts,
                   NetworkModel& classifier, const Dataset& transformed_base,
                   std::span<const AttackSpec> roster, int init_epochs, int batch_size,
                   RngStreams& rngs);

// Identity-initializes one generator and emits num_generators copies, each
// with floor(perturb_fraction * trainable) distinct trainable weights zeroed.
// Running statistics are copied untouched.
std::vector<NetworkModel> faster_init(NetworkModel& classifier,
                                      const Dataset& transformed_base,
                                      std::span<const AttackSpec> roster,
                                      const TrainConfig& cfg, RngStreams& rngs);

// One winner-take-all step: attack the transformed batch, score every
// generator's output, update only the argmax generator against the
// discriminator, then update the discriminator on the canonical batch and on
// all (detached) generator outputs.
StepReport competitive_step(EnsembleState& ens, NetworkModel& classifier,
                            const Tensor& canon_batch, const Tensor& transf_batch,
                            RngStreams& rngs, int epoch, int step);

// Full defense training: identity (or faster) initialization followed by
// train_epochs of competitive steps over paired shuffled half-batches.
EnsembleState train_defense(const SplitPair& split, NetworkModel& classifier,
                            std::vector<AttackSpec> roster, const TrainConfig& cfg,
                            TrainSink* sink = nullptr);

// Assembles an ensemble from per-attack generator checkpoints plus a
// jointly-trained discriminator checkpoint; no further training.
EnsembleState train_separate_then_combine(const std::vector<std::filesystem::path>& gen_ckpts,
                                          const std::filesystem::path& disc_ckpt,
                                          std::vector<AttackSpec> roster);

// gen_<k>.ckpt / disc.ckpt under dir, each carrying role metadata, the
// TrainConfig and the roster.
void save_ensemble(EnsembleState& ens, const std::filesystem::path& dir);
EnsembleState load_ensemble(const std::filesystem::path& dir);

}  // namespace genmix
