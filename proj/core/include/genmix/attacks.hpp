#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "genmix/network.hpp"
#include "genmix/rng.hpp"
#include "genmix/tensor.hpp"

namespace genmix {

enum class AttackKind { Fgsm, Pgd, Df, Aun, Bim, Agn, Ragn, Sapn, Slide };

std::string attack_kind_str(AttackKind k);
AttackKind attack_kind_from_str(std::string_view s);

// An attack is considered successful when the classifier's prediction on the
// adversarial image differs from the provided label.
struct AttackSpec {
  AttackKind kind = AttackKind::Fgsm;
  float epsilon = 0.5f;

  // Solver knobs; only the ones the kind uses matter.
  int steps = 1;
  float step_size = 0.5f;
  bool random_start = false;
  int max_repeats = 100;
  float overshoot = 0.02f;
  float quantile = 0.99f;

  // Per-kind solver defaults for a given strength.
  static AttackSpec make(AttackKind kind, float epsilon);

  // Roster syntax "KIND:EPS[:key=val,...]", e.g. "pgd:0.5:steps=20".
  static AttackSpec parse(std::string_view text);

  std::string str() const;       // "kind:eps"
  std::string full_str() const;  // with every solver field, parseable
};

// The nine attacks at their reference strengths.
std::vector<AttackSpec> default_roster();

struct AttackResult {
  Tensor adversarial;                 // same shape as the input, values in [0,1]
  std::vector<std::uint8_t> success;  // per image
  std::vector<float> norms;           // per image, in the attack's norm family
};

enum class NormKind { Linf, L2, L1 };
NormKind attack_norm_kind(AttackKind k);
std::vector<float> perturbation_norms(const Tensor& x, const Tensor& x_adv, NormKind kind);

AttackResult apply_attack(const AttackSpec& spec, NetworkModel& classifier,
                          const Tensor& x, std::span<const int> y, Rng& noise);

AttackResult attack_fgsm(NetworkModel& classifier, const Tensor& x,
                         std::span<const int> y, const AttackSpec& spec);
// Covers PGD (random start) and BIM.
AttackResult attack_iterative_linf(NetworkModel& classifier, const Tensor& x,
                                   std::span<const int> y, const AttackSpec& spec,
                                   Rng& noise);
AttackResult attack_deepfool(NetworkModel& classifier, const Tensor& x,
                             std::span<const int> y, const AttackSpec& spec);
// Covers AUN, AGN and RAGN.
AttackResult attack_noise(NetworkModel& classifier, const Tensor& x,
                          std::span<const int> y, const AttackSpec& spec, Rng& noise);
AttackResult attack_salt_pepper(NetworkModel& classifier, const Tensor& x,
                                std::span<const int> y, const AttackSpec& spec, Rng& noise);
AttackResult attack_slide(NetworkModel& classifier, const Tensor& x,
                          std::span<const int> y, const AttackSpec& spec);

// Noise of the requested base distribution rescaled so each image's slice has
// L2 norm exactly eps (before any clipping).
Tensor sample_scaled_noise(const std::vector<int>& shape, float eps, bool gaussian,
                           Rng& rng);

// Euclidean projection of v onto the L1 ball of the given radius (Duchi et
// al.); a vector already inside the ball is returned unchanged.
void project_l1_ball(std::span<float> v, float radius);

double success_rate(const AttackResult& r);

std::vector<int> predict(NetworkModel& classifier, const Tensor& x);

// Attacked-dataset cache: a checkpoint container holding tensors "images",
// "success" and optionally "labels", plus the AttackSpec in the metadata.
struct AttackCache {
  AttackSpec spec;
  Tensor images;
  std::vector<int> labels;
  std::vector<std::uint8_t> success;
};
void save_attack_cache(const std::filesystem::path& path, const AttackSpec& spec,
                       const Tensor& images, std::span<const int> labels,
                       std::span<const std::uint8_t> success);
AttackCache load_attack_cache(const std::filesystem::path& path);

}  // namespace genmix
