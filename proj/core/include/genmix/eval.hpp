#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "genmix/defense.hpp"

namespace genmix {

struct DefendedBatch {
  Tensor defended;
  std::vector<int> winners;  // per-example argmax generator, ties to lowest index
};

// Test-time pipeline: every generator transforms the batch, the discriminator
// scores each output per example, and the highest-scored output goes through.
DefendedBatch defend_image_batch(EnsembleState& ens, const Tensor& x_adv);

struct CellStat {
  std::int64_t n = 0;
  std::int64_t correct = 0;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

struct EvaluationReport {
  std::vector<AttackSpec> roster;
  int num_generators = 0;
  int num_classes = 10;
  std::vector<std::vector<CellStat>> defended;    // attack x class
  std::vector<std::vector<CellStat>> undefended;  // attack x class baseline
  // generator x attack x class
  std::vector<std::vector<std::vector<std::int64_t>>> wins;
  std::vector<std::vector<std::vector<std::int64_t>>> win_correct;
  double overall_accuracy = 0.0;
  double baseline_attacked_accuracy = 0.0;

  double attack_accuracy(std::size_t a) const;
  double attack_undefended_accuracy(std::size_t a) const;
};

// Attacks the full test set per roster entry (true labels, white box against
// the classifier), defends, classifies, and accumulates the per-attack /
// per-class matrices and win counts. Mutates none of the models.
EvaluationReport post_defense_accuracy(EnsembleState& ens, NetworkModel& classifier,
                                       const Dataset& test,
                                       std::span<const AttackSpec> roster, RngStreams& rngs,
                                       int batch_size = 128);

struct SpecializationThresholds {
  double generalist_win_share = 0.20;      // plus wins spanning > half the attacks
  double specialist_concentration = 0.80;  // of wins on <= 2 attacks
  double specialist_accuracy = 0.70;       // on those attacks
  double marginalist_win_share = 0.05;
  double marginalist_accuracy = 0.40;
};

struct SpecializationLabel {
  std::string label;  // generalist | specialist | marginalist | unlabeled
  double win_share = 0.0;
  int attacks_spanned = 0;
  double top2_share = 0.0;
  double top2_accuracy = 0.0;
};

std::vector<SpecializationLabel> specialization_labels(
    const EvaluationReport& report, const SpecializationThresholds& thresholds = {});

// CSV schemas:
//   accuracy: attack,class,n,correct,accuracy
//   wins:     generator,attack,class,wins
//   summary:  setting,overall_accuracy,baseline_attacked_accuracy
void write_accuracy_csv(const EvaluationReport& r, const std::filesystem::path& path);
void write_wins_csv(const EvaluationReport& r, const std::filesystem::path& path);
void write_summary_csv(const EvaluationReport& r, std::string_view setting,
                       const std::filesystem::path& path);
void write_specialization_csv(std::span<const SpecializationLabel> labels,
                              const std::filesystem::path& path);

// Binary "P5" graymap; bytes are round(255 * v).
void write_pgm(const float* image, int h, int w, const std::filesystem::path& path);

// Per attack: the clean image, the attacked image and the winning generator's
// defended image as PGM tiles, plus one combined 3-row grid.
void emit_sample_grid(EnsembleState& ens, NetworkModel& classifier, const Dataset& source,
                      std::span<const AttackSpec> roster, RngStreams& rngs,
                      const std::filesystem::path& dir);

// Grayscale renderings of the report matrices (defended accuracy, and one win
// heatmap per generator), upscaled for visibility.
void emit_heatmaps(const EvaluationReport& r, const std::filesystem::path& dir);

}  // namespace genmix
