#include "genmix/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "genmix/losses.hpp"

namespace genmix {

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

DefendedBatch defend_image_batch(EnsembleState& ens, const Tensor& x_adv) {
  const int b = x_adv.dim(0);
  const std::int64_t d = x_adv.numel() / b;
  const auto n = ens.generators.size();
  std::vector<Tensor> outs(n);
  std::vector<Tensor> scores(n);
  for (std::size_t j = 0; j < n; ++j) {
    outs[j] = ens.generators[j].forward(x_adv, Mode::Eval, /*record=*/false);
    scores[j] = ens.discriminator.forward(outs[j], Mode::Eval, /*record=*/false);
  }
  DefendedBatch out;
  out.winners.resize(static_cast<std::size_t>(b), 0);
  out.defended = Tensor(x_adv.shape());
  for (int i = 0; i < b; ++i) {
    int best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (scores[j].data()[i] > scores[static_cast<std::size_t>(best)].data()[i])
        best = static_cast<int>(j);
    out.winners[static_cast<std::size_t>(i)] = best;
    std::copy_n(outs[static_cast<std::size_t>(best)].data() + static_cast<std::int64_t>(i) * d,
                d, out.defended.data() + static_cast<std::int64_t>(i) * d);
  }
  return out;
}

double EvaluationReport::attack_accuracy(std::size_t a) const {
  std::int64_t n = 0, c = 0;
  for (const auto& cell : defended[a]) {
    n += cell.n;
    c += cell.correct;
  }
  return n == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(n);
}

double EvaluationReport::attack_undefended_accuracy(std::size_t a) const {
  std::int64_t n = 0, c = 0;
  for (const auto& cell : undefended[a]) {
    n += cell.n;
    c += cell.correct;
  }
  return n == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(n);
}

EvaluationReport post_defense_accuracy(EnsembleState& ens, NetworkModel& classifier,
                                       const Dataset& test,
                                       std::span<const AttackSpec> roster, RngStreams& rngs,
                                       int batch_size) {
  if (!test.has_labels()) throw ConfigError("evaluation needs labeled data");
  EvaluationReport r;
  r.roster.assign(roster.begin(), roster.end());
  r.num_generators = static_cast<int>(ens.generators.size());
  const auto a_count = roster.size();
  const auto k = static_cast<std::size_t>(r.num_classes);
  r.defended.assign(a_count, std::vector<CellStat>(k));
  r.undefended.assign(a_count, std::vector<CellStat>(k));
  r.wins.assign(static_cast<std::size_t>(r.num_generators),
                std::vector<std::vector<std::int64_t>>(a_count, std::vector<std::int64_t>(k, 0)));
  r.win_correct = r.wins;

  std::vector<int> idx;
  for (std::size_t a = 0; a < a_count; ++a) {
    for (std::int64_t off = 0; off < test.size(); off += batch_size) {
      const auto n = static_cast<std::size_t>(std::min<std::int64_t>(batch_size, test.size() - off));
      idx.resize(n);
      for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(off + static_cast<std::int64_t>(i));
      const Tensor x = test.image_batch(idx);
      const auto y = test.label_batch(idx);
      AttackResult res =
          apply_attack(roster[a], classifier, x, y, rngs.named(streams::kNoise));
      const auto raw_preds = predict(classifier, res.adversarial);
      const DefendedBatch def = defend_image_batch(ens, res.adversarial);
      const auto def_preds = predict(classifier, def.defended);
      for (std::size_t i = 0; i < n; ++i) {
        const auto cls = static_cast<std::size_t>(y[i]);
        const bool raw_ok = raw_preds[i] == y[i];
        const bool def_ok = def_preds[i] == y[i];
        r.undefended[a][cls].n++;
        r.undefended[a][cls].correct += raw_ok ? 1 : 0;
        r.defended[a][cls].n++;
        r.defended[a][cls].correct += def_ok ? 1 : 0;
        const auto w = static_cast<std::size_t>(def.winners[i]);
        r.wins[w][a][cls]++;
        r.win_correct[w][a][cls] += def_ok ? 1 : 0;
      }
    }
  }
  std::int64_t n_total = 0, def_total = 0, und_total = 0;
  for (std::size_t a = 0; a < a_count; ++a)
    for (std::size_t c = 0; c < k; ++c) {
      n_total += r.defended[a][c].n;
      def_total += r.defended[a][c].correct;
      und_total += r.undefended[a][c].correct;
    }
  r.overall_accuracy = n_total == 0 ? 0.0 : static_cast<double>(def_total) / static_cast<double>(n_total);
  r.baseline_attacked_accuracy =
      n_total == 0 ? 0.0 : static_cast<double>(und_total) / static_cast<double>(n_total);
  return r;
}

std::vector<SpecializationLabel> specialization_labels(
    const EvaluationReport& report, const SpecializationThresholds& t) {
  std::vector<SpecializationLabel> out;
  const auto a_count = report.roster.size();
  std::int64_t total_samples = 0;
  for (const auto& row : report.defended)
    for (const auto& cell : row) total_samples += cell.n;

  for (std::size_t g = 0; g < report.wins.size(); ++g) {
    SpecializationLabel lab;
    std::vector<std::int64_t> per_attack(a_count, 0), per_attack_correct(a_count, 0);
    std::int64_t wins_total = 0;
    for (std::size_t a = 0; a < a_count; ++a) {
      for (std::size_t c = 0; c < report.wins[g][a].size(); ++c) {
        per_attack[a] += report.wins[g][a][c];
        per_attack_correct[a] += report.win_correct[g][a][c];
      }
      wins_total += per_attack[a];
      if (per_attack[a] > 0) ++lab.attacks_spanned;
    }
    lab.win_share =
        total_samples == 0 ? 0.0 : static_cast<double>(wins_total) / static_cast<double>(total_samples);
    std::vector<std::size_t> order(a_count);
    for (std::size_t a = 0; a < a_count; ++a) order[a] = a;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return per_attack[x] > per_attack[y]; });
    std::int64_t top2 = 0, top2_correct = 0;
    for (std::size_t i = 0; i < std::min<std::size_t>(2, a_count); ++i) {
      top2 += per_attack[order[i]];
      top2_correct += per_attack_correct[order[i]];
    }
    lab.top2_share = wins_total == 0 ? 0.0 : static_cast<double>(top2) / static_cast<double>(wins_total);
    lab.top2_accuracy = top2 == 0 ? 0.0 : static_cast<double>(top2_correct) / static_cast<double>(top2);

    if (lab.win_share < t.marginalist_win_share) {
      lab.label = "marginalist";
    } else if (lab.top2_share >= t.specialist_concentration) {
      if (lab.top2_accuracy >= t.specialist_accuracy)
        lab.label = "specialist";
      else if (lab.top2_accuracy < t.marginalist_accuracy)
        lab.label = "marginalist";
      else
        lab.label = "unlabeled";
    } else if (lab.win_share >= t.generalist_win_share &&
               lab.attacks_spanned * 2 > static_cast<int>(a_count)) {
      lab.label = "generalist";
    } else {
      lab.label = "unlabeled";
    }
    out.push_back(std::move(lab));
  }
  return out;
}

void write_accuracy_csv(const EvaluationReport& r, const std::filesystem::path& path) {
  std::string text = "attack,class,n,correct,accuracy\n";
  for (std::size_t a = 0; a < r.roster.size(); ++a)
    for (int c = 0; c < r.num_classes; ++c) {
      const auto& cell = r.defended[a][static_cast<std::size_t>(c)];
      text += attack_kind_str(r.roster[a].kind) + "," + std::to_string(c) + "," +
              std::to_string(cell.n) + "," + std::to_string(cell.correct) + "," +
              fmt(cell.accuracy()) + "\n";
    }
  write_text(path, text);
}

void write_wins_csv(const EvaluationReport& r, const std::filesystem::path& path) {
  std::string text = "generator,attack,class,wins\n";
  for (std::size_t g = 0; g < r.wins.size(); ++g)
    for (std::size_t a = 0; a < r.roster.size(); ++a)
      for (int c = 0; c < r.num_classes; ++c)
        text += std::to_string(g) + "," + attack_kind_str(r.roster[a].kind) + "," +
                std::to_string(c) + "," +
                std::to_string(r.wins[g][a][static_cast<std::size_t>(c)]) + "\n";
  write_text(path, text);
}

void write_summary_csv(const EvaluationReport& r, std::string_view setting,
                       const std::filesystem::path& path) {
  std::string text = "setting,overall_accuracy,baseline_attacked_accuracy\n";
  text += std::string(setting) + "," + fmt(r.overall_accuracy) + "," +
          fmt(r.baseline_attacked_accuracy) + "\n";
  write_text(path, text);
}

void write_specialization_csv(std::span<const SpecializationLabel> labels,
                              const std::filesystem::path& path) {
  std::string text = "generator,label,win_share,attacks_spanned,top2_share,top2_accuracy\n";
  for (std::size_t g = 0; g < labels.size(); ++g)
    text += std::to_string(g) + "," + labels[g].label + "," + fmt(labels[g].win_share) + "," +
            std::to_string(labels[g].attacks_spanned) + "," + fmt(labels[g].top2_share) + "," +
            fmt(labels[g].top2_accuracy) + "\n";
  write_text(path, text);
}

void write_pgm(const float* image, int h, int w, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
    const float v = std::min(1.0f, std::max(0.0f, image[i]));
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0f * v))));
  }
  write_text(path, out);
}

void emit_sample_grid(EnsembleState& ens, NetworkModel& classifier, const Dataset& source,
                      std::span<const AttackSpec> roster, RngStreams& rngs,
                      const std::filesystem::path& dir) {
  if (source.size() == 0) throw ConfigError("sample grid needs at least one image");
  std::filesystem::create_directories(dir);
  const int h = source.images.dim(2), w = source.images.dim(3);
  const std::vector<int> first{0};
  const Tensor clean = source.image_batch(first);
  const std::vector<int> label =
      source.has_labels() ? source.label_batch(first) : predict(classifier, clean);

  const auto a_count = static_cast<int>(roster.size());
  Tensor grid({3, 1, h, static_cast<int>(a_count) * w});
  for (int a = 0; a < a_count; ++a) {
    AttackResult res =
        apply_attack(roster[static_cast<std::size_t>(a)], classifier, clean, label,
                     rngs.named(streams::kNoise));
    const DefendedBatch def = defend_image_batch(ens, res.adversarial);
    const std::string kind = attack_kind_str(roster[static_cast<std::size_t>(a)].kind);
    write_pgm(clean.data(), h, w, dir / (kind + "_clean.pgm"));
    write_pgm(res.adversarial.data(), h, w, dir / (kind + "_attacked.pgm"));
    write_pgm(def.defended.data(), h, w, dir / (kind + "_defended.pgm"));
    const Tensor* rows[3] = {&clean, &res.adversarial, &def.defended};
    for (int row = 0; row < 3; ++row)
      for (int y = 0; y < h; ++y)
        std::memcpy(grid.data() + ((static_cast<std::int64_t>(row) * h + y) * a_count + a) * w,
                    rows[row]->data() + static_cast<std::int64_t>(y) * w,
                    static_cast<std::size_t>(w) * sizeof(float));
  }
  write_pgm(grid.data(), 3 * h, a_count * w, dir / "grid.pgm");
}

void emit_heatmaps(const EvaluationReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  constexpr int kCell = 16;
  const auto a_count = static_cast<int>(r.roster.size());
  const int k = r.num_classes;
  const auto render = [&](const std::filesystem::path& path, auto&& value_at, double scale) {
    std::vector<float> img(static_cast<std::size_t>(a_count) * kCell * k * kCell);
    for (int a = 0; a < a_count; ++a)
      for (int c = 0; c < k; ++c) {
        const auto v = static_cast<float>(scale > 0.0 ? value_at(a, c) / scale : 0.0);
        for (int y = 0; y < kCell; ++y)
          for (int x = 0; x < kCell; ++x)
            img[(static_cast<std::size_t>(a) * kCell + static_cast<std::size_t>(y)) *
                    static_cast<std::size_t>(k * kCell) +
                static_cast<std::size_t>(c) * kCell + static_cast<std::size_t>(x)] = v;
      }
    write_pgm(img.data(), a_count * kCell, k * kCell, path);
  };
  render(dir / "accuracy_heatmap.pgm",
         [&](int a, int c) {
           return r.defended[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)].accuracy();
         },
         1.0);
  for (std::size_t g = 0; g < r.wins.size(); ++g) {
    std::int64_t mx = 1;
    for (const auto& row : r.wins[g])
      for (auto v : row) mx = std::max(mx, v);
    render(dir / ("wins_heatmap_g" + std::to_string(g) + ".pgm"),
           [&](int a, int c) {
             return static_cast<double>(
                 r.wins[g][static_cast<std::size_t>(a)][static_cast<std::size_t>(c)]);
           },
           static_cast<double>(mx));
  }
}

}  // namespace genmix
