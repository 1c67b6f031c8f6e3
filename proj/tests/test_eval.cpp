#include <doctest.h>

#include <cmath>
#include <fstream>

#include "genmix/eval.hpp"
#include "genmix/losses.hpp"
#include "testutil.hpp"

using namespace genmix;

namespace {

EnsembleState small_ensemble(int n_gens, std::uint64_t seed) {
  RngStreams rngs(seed);
  EnsembleState ens;
  ens.config.num_generators = n_gens;
  ens.discriminator = build_discriminator(rngs.derive("init-disc", 0));
  ens.disc_opt = AdamState(ens.discriminator.parameters(), AdamConfig{});
  for (int j = 0; j < n_gens; ++j) {
    ens.generators.push_back(
        build_generator(rngs.derive("init-gen", static_cast<std::uint64_t>(j)),
                        "generator_" + std::to_string(j)));
    ens.gen_opt.emplace_back(ens.generators.back().parameters(), AdamConfig{});
  }
  return ens;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("defend_image_batch with one generator is that generator") {
  auto ens = small_ensemble(1, 41);
  const Tensor x = testutil::blob_dataset(4, 28, 101).images;
  const DefendedBatch out = defend_image_batch(ens, x);
  const Tensor direct = ens.generators[0].forward(x, Mode::Eval, false);
  CHECK(out.defended.value_checksum() == direct.value_checksum());
  for (int w : out.winners) CHECK(w == 0);
}

TEST_CASE("constant discriminator ties break to generator zero") {
  auto ens = small_ensemble(3, 42);
  auto ps = ens.discriminator.parameters();
  ps.find("fc2.weight")->tensor->fill(0.0f);
  ps.find("fc2.bias")->tensor->fill(0.0f);
  const Tensor x = testutil::blob_dataset(5, 28, 102).images;
  const DefendedBatch out = defend_image_batch(ens, x);
  for (int w : out.winners) CHECK(w == 0);
}

TEST_CASE("winner indices match an exhaustive per-image re-scoring oracle") {
  auto ens = small_ensemble(3, 43);
  const Tensor x = testutil::blob_dataset(6, 28, 103).images;
  const DefendedBatch out = defend_image_batch(ens, x);

  const std::int64_t d = x.numel() / x.dim(0);
  for (int i = 0; i < 6; ++i) {
    // Re-run every generator/discriminator pair on the single image.
    Tensor one({1, 1, 28, 28});
    std::copy_n(x.data() + i * d, d, one.data());
    double best = -1.0;
    int best_j = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      const Tensor g = ens.generators[j].forward(one, Mode::Eval, false);
      const Tensor s = ens.discriminator.forward(g, Mode::Eval, false);
      if (static_cast<double>(s.data()[0]) > best) {
        best = s.data()[0];
        best_j = static_cast<int>(j);
      }
    }
    CHECK(out.winners[static_cast<std::size_t>(i)] == best_j);
  }
}

TEST_CASE("defend_image_batch is permutation-equivariant") {
  auto ens = small_ensemble(2, 44);
  const Tensor x = testutil::blob_dataset(5, 28, 104).images;
  const DefendedBatch base = defend_image_batch(ens, x);

  const std::vector<int> perm{3, 0, 4, 1, 2};
  Tensor shuffled({5, 1, 28, 28});
  const std::int64_t d = x.numel() / 5;
  for (int i = 0; i < 5; ++i)
    std::copy_n(x.data() + perm[static_cast<std::size_t>(i)] * d, d, shuffled.data() + i * d);
  const DefendedBatch out = defend_image_batch(ens, shuffled);
  for (int i = 0; i < 5; ++i) {
    CHECK(out.winners[static_cast<std::size_t>(i)] ==
          base.winners[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(out.defended.data()[i * d + j] ==
            base.defended.data()[perm[static_cast<std::size_t>(i)] * d + j]);
  }
}

TEST_CASE("post_defense_accuracy: matrices are consistent and nothing mutates") {
  Rng crng(45);
  NetworkModel classifier = build_classifier(crng);
  auto ens = small_ensemble(2, 46);
  const Dataset test = testutil::blob_dataset(40, 28, 105);
  const std::vector<AttackSpec> roster{AttackSpec::make(AttackKind::Fgsm, 0.5f),
                                       AttackSpec::make(AttackKind::Aun, 1.0f)};
  RngStreams rngs(47);

  const std::uint64_t c_before = classifier.checksum();
  const std::uint64_t d_before = ens.discriminator.checksum();
  std::vector<std::uint64_t> g_before;
  for (auto& g : ens.generators) g_before.push_back(g.checksum());

  const EvaluationReport r = post_defense_accuracy(ens, classifier, test, roster, rngs, 16);

  CHECK(classifier.checksum() == c_before);
  CHECK(ens.discriminator.checksum() == d_before);
  for (std::size_t j = 0; j < g_before.size(); ++j)
    CHECK(ens.generators[j].checksum() == g_before[j]);

  // Row-weighted means equal per-attack accuracies; their weighted mean is
  // the overall accuracy. Win counts sum to the evaluated image count.
  std::int64_t total_n = 0, total_correct = 0, total_wins = 0;
  for (std::size_t a = 0; a < roster.size(); ++a) {
    std::int64_t row_n = 0, row_c = 0;
    for (const auto& cell : r.defended[a]) {
      row_n += cell.n;
      row_c += cell.correct;
    }
    CHECK(row_n == 40);
    CHECK(r.attack_accuracy(a) ==
          doctest::Approx(static_cast<double>(row_c) / static_cast<double>(row_n)));
    total_n += row_n;
    total_correct += row_c;
  }
  CHECK(r.overall_accuracy ==
        doctest::Approx(static_cast<double>(total_correct) / static_cast<double>(total_n)));
  for (const auto& gen : r.wins)
    for (const auto& row : gen)
      for (auto v : row) total_wins += v;
  CHECK(total_wins == total_n);

  // Purity: a second evaluation reproduces the same report.
  RngStreams rngs2(47);
  const EvaluationReport r2 = post_defense_accuracy(ens, classifier, test, roster, rngs2, 16);
  CHECK(r2.overall_accuracy == r.overall_accuracy);
  CHECK(r2.baseline_attacked_accuracy == r.baseline_attacked_accuracy);
}

TEST_CASE("an identity-quality defense tracks the undefended baseline") {
  // Pipeline sanity oracle: a generator initialized to near-identity must
  // leave post-attack accuracy materially unchanged.
  const Dataset train = testutil::blob_dataset(512, 28, 106);
  const Dataset test = testutil::blob_dataset(128, 28, 107);
  RngStreams rngs(48);
  const PretrainResult pre = pretrain_classifier(train, test, 5, 1e-3f, rngs, 64);
  REQUIRE(pre.test_accuracy >= 0.9);
  NetworkModel classifier = pre.model;

  const std::vector<AttackSpec> roster{AttackSpec::make(AttackKind::Aun, 1.0f)};
  auto ens = small_ensemble(1, 49);
  std::vector<AdamState> opts;
  opts.emplace_back(ens.generators[0].parameters(), AdamConfig{});
  std::vector<NetworkModel> gens;
  gens.push_back(std::move(ens.generators[0]));
  RngStreams init_rngs(50);
  identity_init(gens, opts, classifier, train, roster, 4, 32, init_rngs);
  ens.generators[0] = std::move(gens[0]);

  RngStreams eval_rngs(51);
  const EvaluationReport r =
      post_defense_accuracy(ens, classifier, test, roster, eval_rngs, 32);
  CHECK(std::fabs(r.overall_accuracy - r.baseline_attacked_accuracy) <= 0.05);
}

TEST_CASE("specialization labels follow the documented thresholds") {
  EvaluationReport r;
  r.roster = {AttackSpec::make(AttackKind::Fgsm, 0.5f), AttackSpec::make(AttackKind::Pgd, 0.5f),
              AttackSpec::make(AttackKind::Aun, 3.5f), AttackSpec::make(AttackKind::Agn, 100.0f)};
  r.num_generators = 4;
  r.num_classes = 10;
  const auto a = r.roster.size();
  r.defended.assign(a, std::vector<CellStat>(10, {100, 50}));
  r.undefended = r.defended;
  r.wins.assign(4, std::vector<std::vector<std::int64_t>>(a, std::vector<std::int64_t>(10, 0)));
  r.win_correct = r.wins;
  // 4000 samples total.
  // g0: wins 1200 spread over all four attacks, high accuracy -> generalist.
  for (std::size_t at = 0; at < a; ++at)
    for (int c = 0; c < 10; ++c) {
      r.wins[0][at][static_cast<std::size_t>(c)] = 30;
      r.win_correct[0][at][static_cast<std::size_t>(c)] = 27;
    }
  // g1: wins 1000, concentrated on AUN+AGN with 90% accuracy -> specialist.
  for (std::size_t at = 2; at < 4; ++at)
    for (int c = 0; c < 10; ++c) {
      r.wins[1][at][static_cast<std::size_t>(c)] = 50;
      r.win_correct[1][at][static_cast<std::size_t>(c)] = 45;
    }
  // g2: 1% win share -> marginalist.
  r.wins[2][0][0] = 40;
  r.win_correct[2][0][0] = 40;
  // g3: concentrated wins with poor accuracy -> marginalist.
  for (int c = 0; c < 10; ++c) {
    r.wins[3][2][static_cast<std::size_t>(c)] = 76;
    r.win_correct[3][2][static_cast<std::size_t>(c)] = 10;
  }

  const auto labels = specialization_labels(r);
  REQUIRE(labels.size() == 4);
  CHECK(labels[0].label == "generalist");
  CHECK(labels[1].label == "specialist");
  CHECK(labels[2].label == "marginalist");
  CHECK(labels[3].label == "marginalist");
  CHECK(labels[1].top2_share == doctest::Approx(1.0));
  CHECK(labels[1].top2_accuracy == doctest::Approx(0.9));
}

TEST_CASE("pgm files carry the exact header and quantized bytes") {
  const auto dir = testutil::fresh_temp_dir("pgm");
  float img[6] = {0.0f, 1.0f, 0.5f, 0.25f, 0.999f, 0.001f};
  write_pgm(img, 2, 3, dir / "t.pgm");
  const std::string bytes = slurp(dir / "t.pgm");
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  CHECK(bytes.substr(0, header.size()) == header);
  for (int i = 0; i < 6; ++i)
    CHECK(static_cast<unsigned char>(bytes[header.size() + static_cast<std::size_t>(i)]) ==
          static_cast<unsigned char>(std::lround(255.0f * img[i])));
  std::filesystem::remove_all(dir);
}

TEST_CASE("sample grid emits three tiles per attack plus the combined grid") {
  const auto dir = testutil::fresh_temp_dir("grid");
  Rng crng(52);
  NetworkModel classifier = build_classifier(crng);
  auto ens = small_ensemble(1, 53);
  const Dataset source = testutil::blob_dataset(2, 28, 108);
  const auto roster = default_roster();
  RngStreams rngs(54);
  emit_sample_grid(ens, classifier, source, roster, rngs, dir);

  int tiles = 0;
  for (const auto& spec : roster) {
    const std::string kind = attack_kind_str(spec.kind);
    for (const char* suffix : {"_clean.pgm", "_attacked.pgm", "_defended.pgm"}) {
      CHECK(std::filesystem::exists(dir / (kind + suffix)));
      ++tiles;
    }
  }
  CHECK(tiles == 27);
  CHECK(std::filesystem::exists(dir / "grid.pgm"));
  const std::string grid = slurp(dir / "grid.pgm");
  CHECK(grid.substr(0, 10) == "P5\n252 84\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("csv emitters pin their schemas") {
  const auto dir = testutil::fresh_temp_dir("csv");
  EvaluationReport r;
  r.roster = {AttackSpec::make(AttackKind::Fgsm, 0.5f)};
  r.num_generators = 1;
  r.num_classes = 10;
  r.defended.assign(1, std::vector<CellStat>(10, {10, 7}));
  r.undefended.assign(1, std::vector<CellStat>(10, {10, 2}));
  r.wins.assign(1, std::vector<std::vector<std::int64_t>>(1, std::vector<std::int64_t>(10, 10)));
  r.win_correct = r.wins;
  r.overall_accuracy = 0.7;
  r.baseline_attacked_accuracy = 0.2;

  write_accuracy_csv(r, dir / "accuracy.csv");
  write_wins_csv(r, dir / "wins.csv");
  write_summary_csv(r, "demo", dir / "summary.csv");
  const std::string acc = slurp(dir / "accuracy.csv");
  CHECK(acc.substr(0, acc.find('\n')) == "attack,class,n,correct,accuracy");
  CHECK(acc.find("fgsm,0,10,7,0.7") != std::string::npos);
  const std::string wins = slurp(dir / "wins.csv");
  CHECK(wins.substr(0, wins.find('\n')) == "generator,attack,class,wins");
  CHECK(wins.find("0,fgsm,9,10") != std::string::npos);
  const std::string sum = slurp(dir / "summary.csv");
  CHECK(sum == "setting,overall_accuracy,baseline_attacked_accuracy\ndemo,0.7,0.2\n");

  emit_heatmaps(r, dir);
  CHECK(std::filesystem::exists(dir / "accuracy_heatmap.pgm"));
  CHECK(std::filesystem::exists(dir / "wins_heatmap_g0.pgm"));
  std::filesystem::remove_all(dir);
}
