#include "genmix/defense.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "genmix/checkpoint.hpp"
#include "genmix/losses.hpp"

namespace genmix {

namespace {

// Shared by identity init and competitive training: yields the adversarial
// batch for one attack sampled uniformly from the roster, either freshly
// computed against the classifier or sliced from a precomputed cache.
class AttackProvider {
 public:
  AttackProvider(NetworkModel& classifier, std::span<const AttackSpec> roster,
                 RngStreams& rngs)
      : classifier_(classifier), roster_(roster), rngs_(rngs) {}

  // Precomputes every roster attack over the whole dataset.
  void build_cache(const Dataset& base, int batch_size) {
    cache_.clear();
    cache_.reserve(roster_.size());
    for (const auto& spec : roster_) {
      Tensor attacked(base.images.shape());
      std::vector<int> order(static_cast<std::size_t>(base.size()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      const std::int64_t d = base.images.numel() / base.size();
      for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(batch_size)) {
        const std::size_t n = std::min(order.size() - off, static_cast<std::size_t>(batch_size));
        const Tensor x = base.image_batch({order.data() + off, n});
        const auto y = predict(classifier_, x);
        AttackResult res = apply_attack(spec, classifier_, x, y, rngs_.named(streams::kNoise));
        std::copy(res.adversarial.values().begin(), res.adversarial.values().end(),
                  attacked.data() + static_cast<std::int64_t>(off) * d);
      }
      cache_.push_back(std::move(attacked));
    }
  }

  // One attack per batch, uniform over the roster.
  Tensor adversarial(const Tensor& batch, std::span<const int> dataset_indices,
                     AttackKind* kind_out) {
    const auto k = static_cast<std::size_t>(
        rngs_.named(streams::kAttackSelect).below(roster_.size()));
    if (kind_out != nullptr) *kind_out = roster_[k].kind;
    if (!cache_.empty()) {
      const Tensor& all = cache_[k];
      const std::int64_t d = all.numel() / all.dim(0);
      Tensor out(batch.shape());
      for (std::size_t i = 0; i < dataset_indices.size(); ++i)
        std::copy_n(all.data() + static_cast<std::int64_t>(dataset_indices[i]) * d, d,
                    out.data() + static_cast<std::int64_t>(i) * d);
      return out;
    }
    const auto y = predict(classifier_, batch);
    return apply_attack(roster_[k], classifier_, batch, y, rngs_.named(streams::kNoise))
        .adversarial;
  }

 private:
  NetworkModel& classifier_;
  std::span<const AttackSpec> roster_;
  RngStreams& rngs_;
  std::vector<Tensor> cache_;
};

double mean_of(const Tensor& t) {
  double s = 0.0;
  for (float v : t.values()) s += v;
  return t.numel() == 0 ? 0.0 : s / static_cast<double>(t.numel());
}

void check_finite(double loss, const std::string& context) {
  if (std::isnan(loss) || std::isinf(loss)) throw NumericError("NaN loss in " + context);
}

NetworkModel build_generator_for(const TrainConfig& cfg, RngStreams& rngs, int index) {
  Rng init = rngs.derive("init-gen", static_cast<std::uint64_t>(index));
  const std::string name = "generator_" + std::to_string(index);
  return cfg.large_generator ? build_large_generator(init, name) : build_generator(init, name);
}

// Updates one generator against the discriminator on the given adversarial
// batch; returns the generator loss.
double update_generator(NetworkModel& gen, AdamState& opt, NetworkModel& disc,
                        const Tensor& adv, const std::string& context) {
  Tensor out = gen.forward(adv, Mode::Train);
  Tensor score = disc.forward(out, Mode::Eval, /*record=*/true);
  auto [loss, dscore] = bce_toward_one(score);
  check_finite(loss, context);
  Tensor dout = disc.backward(dscore, /*param_grads=*/false);
  gen.zero_grad();
  gen.backward(dout, /*param_grads=*/true);
  auto params = gen.parameters();
  opt.step(params);
  return loss;
}

}  // namespace

void TrainConfig::validate() const {
  if (num_generators < 1) throw ConfigError("num_generators must be >= 1");
  if (init_epochs < 0 || train_epochs < 0) throw ConfigError("epoch counts must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0f)) throw ConfigError("lr must be > 0");
  if (perturb_fraction < 0.0f || perturb_fraction >= 1.0f)
    throw ConfigError("perturb_fraction must be in [0,1)");
  if (large_generator && num_generators != 1)
    throw ConfigError("the large-generator baseline uses exactly one generator");
}

std::string TrainConfig::to_json() const {
  nlohmann::json j;
  j["num_generators"] = num_generators;
  j["init_epochs"] = init_epochs;
  j["train_epochs"] = train_epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["faster_init"] = faster_init;
  j["perturb_fraction"] = perturb_fraction;
  j["seed"] = seed;
  j["per_example_winner"] = per_example_winner;
  j["large_generator"] = large_generator;
  j["cache_attacks"] = cache_attacks;
  j["checkpoint_every"] = checkpoint_every;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c;
  c.num_generators = j.value("num_generators", c.num_generators);
  c.init_epochs = j.value("init_epochs", c.init_epochs);
  c.train_epochs = j.value("train_epochs", c.train_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.faster_init = j.value("faster_init", c.faster_init);
  c.perturb_fraction = j.value("perturb_fraction", c.perturb_fraction);
  c.seed = j.value("seed", c.seed);
  c.per_example_winner = j.value("per_example_winner", c.per_example_winner);
  c.large_generator = j.value("large_generator", c.large_generator);
  c.cache_attacks = j.value("cache_attacks", c.cache_attacks);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  return c;
}

std::string log_header(int num_generators) {
  std::string h = "epoch,step,attack_kind,winner_index";
  for (int j = 0; j < num_generators; ++j) h += ",score_g" + std::to_string(j);
  h += ",loss_g,loss_d";
  return h;
}

std::string log_row(const StepReport& r) {
  char buf[64];
  std::string row = std::to_string(r.epoch) + "," + std::to_string(r.step) + "," +
                    attack_kind_str(r.attack) + "," + std::to_string(r.winner);
  for (double s : r.scores) {
    std::snprintf(buf, sizeof buf, ",%.9g", s);
    row += buf;
  }
  std::snprintf(buf, sizeof buf, ",%.9g,%.9g", r.loss_g, r.loss_d);
  row += buf;
  return row;
}

int select_winner(std::span<const double> scores) {
  int best = 0;
  for (int j = 1; j < static_cast<int>(scores.size()); ++j)
    if (scores[static_cast<std::size_t>(j)] > scores[static_cast<std::size_t>(best)]) best = j;
  return best;
}

double dataset_accuracy(NetworkModel& model, const Dataset& d, int batch_size) {
  std::int64_t correct = 0;
  std::vector<int> idx(static_cast<std::size_t>(batch_size));
  for (std::int64_t off = 0; off < d.size(); off += batch_size) {
    const auto n = static_cast<std::size_t>(std::min<std::int64_t>(batch_size, d.size() - off));
    idx.resize(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(off + static_cast<std::int64_t>(i));
    const auto preds = predict(model, d.image_batch(idx));
    for (std::size_t i = 0; i < n; ++i)
      if (preds[i] == d.labels[static_cast<std::size_t>(idx[i])]) ++correct;
  }
  return d.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(d.size());
}

PretrainResult pretrain_classifier(const Dataset& train, const Dataset& test, int epochs,
                                   float lr, RngStreams& rngs, int batch_size) {
  if (!train.has_labels() || !test.has_labels())
    throw ConfigError("classifier pretraining needs labeled data");
  Rng init = rngs.derive("init-classifier", 0);
  PretrainResult out{build_classifier(init), 0.0};
  AdamState opt(out.model.parameters(), AdamConfig{.lr = lr});
  for (int e = 0; e < epochs; ++e) {
    BatchIterator it(train, batch_size, rngs.named(streams::kShuffle));
    Tensor x;
    std::vector<int> y;
    while (it.next(x, y)) {
      try {
        Tensor logits = out.model.forward(x, Mode::Train);
        auto [loss, dlogits] = softmax_cross_entropy(logits, y);
        if (std::isnan(loss)) throw NumericError("loss is NaN");
        out.model.zero_grad();
        out.model.backward(dlogits);
        auto params = out.model.parameters();
        opt.step(params);
      } catch (const NumericError& err) {
        throw NumericError("classifier training diverged at epoch " + std::to_string(e) +
                           ": " + err.what());
      }
    }
  }
  out.test_accuracy = dataset_accuracy(out.model, test);
  return out;
}

namespace {

void identity_init_with(AttackProvider& provider, std::vector<NetworkModel>& gens,
                        std::vector<AdamState>& opts, const Dataset& transformed_base,
                        int init_epochs, int batch_size, RngStreams& rngs) {
  for (int e = 0; e < init_epochs; ++e) {
    BatchIterator it(transformed_base, batch_size, rngs.named(streams::kShuffle));
    Tensor x;
    while (it.next(x)) {
      const Tensor adv = provider.adversarial(x, it.last_indices(), nullptr);
      for (std::size_t j = 0; j < gens.size(); ++j) {
        Tensor out = gens[j].forward(adv, Mode::Train);
        auto [loss, dout] = mse_loss(out, adv);
        check_finite(loss, "identity init of " + gens[j].name() + " at epoch " +
                               std::to_string(e));
        gens[j].zero_grad();
        gens[j].backward(dout);
        auto params = gens[j].parameters();
        opts[j].step(params);
      }
    }
  }
}

}  // namespace

void identity_init(std::vector<NetworkModel>& gens, std::vector<AdamState>& opts,
                   NetworkModel& classifier, const Dataset& transformed_base,
                   std::span<const AttackSpec> roster, int init_epochs, int batch_size,
                   RngStreams& rngs) {
  AttackProvider provider(classifier, roster, rngs);
  identity_init_with(provider, gens, opts, transformed_base, init_epochs, batch_size, rngs);
}

namespace {

std::vector<NetworkModel> faster_init_with(AttackProvider& provider,
                                           const Dataset& transformed_base,
                                           const TrainConfig& cfg, RngStreams& rngs) {
  if (cfg.perturb_fraction >= 1.0f) throw ConfigError("perturb_fraction must be < 1");
  std::vector<NetworkModel> seed;
  seed.push_back(build_generator_for(cfg, rngs, 0));
  std::vector<AdamState> opts;
  opts.emplace_back(seed[0].parameters(), AdamConfig{.lr = cfg.lr});
  identity_init_with(provider, seed, opts, transformed_base, cfg.init_epochs,
                     cfg.batch_size, rngs);

  std::vector<NetworkModel> gens;
  gens.reserve(static_cast<std::size_t>(cfg.num_generators));
  for (int j = 0; j < cfg.num_generators; ++j) {
    NetworkModel copy = seed[0];
    auto params = copy.parameters();
    // Flat index space over trainable elements, in parameter order.
    std::vector<std::pair<Tensor*, std::int64_t>> slots;
    std::int64_t total = 0;
    for (auto& r : params) {
      if (!r.trainable) continue;
      slots.emplace_back(r.tensor, total);
      total += r.tensor->numel();
    }
    const auto count = static_cast<std::int64_t>(
        std::floor(static_cast<double>(cfg.perturb_fraction) * static_cast<double>(total)));
    Rng perturb = rngs.derive(streams::kPerturb, static_cast<std::uint64_t>(j));
    std::vector<std::int64_t> index(static_cast<std::size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) index[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < count; ++i) {
      const auto pick = i + static_cast<std::int64_t>(
                                perturb.below(static_cast<std::uint64_t>(total - i)));
      std::swap(index[static_cast<std::size_t>(i)], index[static_cast<std::size_t>(pick)]);
      const std::int64_t flat = index[static_cast<std::size_t>(i)];
      auto it = std::upper_bound(slots.begin(), slots.end(), flat,
                                 [](std::int64_t v, const auto& s) { return v < s.second; });
      --it;
      it->first->data()[flat - it->second] = 0.0f;
    }
    gens.push_back(std::move(copy));
  }
  return gens;
}

}  // namespace

std::vector<NetworkModel> faster_init(NetworkModel& classifier,
                                      const Dataset& transformed_base,
                                      std::span<const AttackSpec> roster,
                                      const TrainConfig& cfg, RngStreams& rngs) {
  AttackProvider provider(classifier, roster, rngs);
  return faster_init_with(provider, transformed_base, cfg, rngs);
}

namespace {

// Steps (b)-(f) on an already-attacked batch.
StepReport competitive_step_on(EnsembleState& ens, const Tensor& adv,
                               const Tensor& canon_batch, AttackKind kind, int epoch,
                               int step) {
  StepReport rep;
  rep.epoch = epoch;
  rep.step = step;
  rep.attack = kind;
  const std::string context = "competitive step (epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step) + ")";

  const auto n = ens.generators.size();
  std::vector<Tensor> outs(n);
  std::vector<Tensor> score_rows(n);
  rep.scores.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    outs[j] = ens.generators[j].forward(adv, Mode::Eval, /*record=*/false);
    score_rows[j] = ens.discriminator.forward(outs[j], Mode::Eval, /*record=*/false);
    rep.scores[j] = mean_of(score_rows[j]);
  }

  // (c)+(d) winner selection and the sole generator update.
  if (!ens.config.per_example_winner || n == 1) {
    rep.winner = select_winner(rep.scores);
    rep.loss_g = update_generator(ens.generators[static_cast<std::size_t>(rep.winner)],
                                  ens.gen_opt[static_cast<std::size_t>(rep.winner)],
                                  ens.discriminator, adv, context);
  } else {
    // Per-example mode: each example's argmax generator trains on the
    // sub-batch it won.
    const int b = adv.dim(0);
    const std::int64_t d = adv.numel() / b;
    std::vector<int> win(static_cast<std::size_t>(b), 0);
    std::vector<int> counts(n, 0);
    for (int i = 0; i < b; ++i) {
      int best = 0;
      for (std::size_t j = 1; j < n; ++j)
        if (score_rows[j].data()[i] > score_rows[static_cast<std::size_t>(best)].data()[i])
          best = static_cast<int>(j);
      win[static_cast<std::size_t>(i)] = best;
      ++counts[static_cast<std::size_t>(best)];
    }
    double loss_acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (counts[j] == 0) continue;
      Tensor sub({counts[j], adv.dim(1), adv.dim(2), adv.dim(3)});
      int row = 0;
      for (int i = 0; i < b; ++i)
        if (win[static_cast<std::size_t>(i)] == static_cast<int>(j))
          std::copy_n(adv.data() + static_cast<std::int64_t>(i) * d, d,
                      sub.data() + static_cast<std::int64_t>(row++) * d);
      loss_acc += update_generator(ens.generators[j], ens.gen_opt[j], ens.discriminator,
                                   sub, context) *
                  counts[j];
    }
    rep.loss_g = loss_acc / b;
    rep.winner = select_winner(rep.scores);
  }

  // (e) discriminator update: canonical batch toward 1, every (detached)
  // generator output toward 0 with 1/N' weight.
  ens.discriminator.zero_grad();
  {
    Tensor s = ens.discriminator.forward(canon_batch, Mode::Train);
    auto [loss, ds] = bce_toward_one(s);
    check_finite(loss, context + ", canonical term");
    ens.discriminator.backward(ds);
    rep.loss_d = loss;
  }
  const float inv_n = 1.0f / static_cast<float>(n);
  for (std::size_t j = 0; j < n; ++j) {
    Tensor s = ens.discriminator.forward(outs[j], Mode::Train);
    auto [loss, ds] = bce_toward_zero(s);
    check_finite(loss, context + ", generator term " + std::to_string(j));
    for (auto& v : ds.values()) v *= inv_n;
    ens.discriminator.backward(ds);
    rep.loss_d += loss * inv_n;
  }
  auto dparams = ens.discriminator.parameters();
  ens.disc_opt.step(dparams);
  return rep;
}

}  // namespace

StepReport competitive_step(EnsembleState& ens, NetworkModel& classifier,
                            const Tensor& canon_batch, const Tensor& transf_batch,
                            RngStreams& rngs, int epoch, int step) {
  AttackProvider provider(classifier, ens.roster, rngs);
  AttackKind kind{};
  const Tensor adv = provider.adversarial(transf_batch, {}, &kind);
  return competitive_step_on(ens, adv, canon_batch, kind, epoch, step);
}

EnsembleState train_defense(const SplitPair& split, NetworkModel& classifier,
                            std::vector<AttackSpec> roster, const TrainConfig& cfg,
                            TrainSink* sink) {
  cfg.validate();
  if (roster.empty()) throw ConfigError("attack roster is empty");
  RngStreams rngs(cfg.seed);

  EnsembleState ens;
  ens.roster = std::move(roster);
  ens.config = cfg;
  Rng disc_init = rngs.derive("init-disc", 0);
  ens.discriminator = build_discriminator(disc_init);
  ens.disc_opt = AdamState(ens.discriminator.parameters(), AdamConfig{.lr = cfg.lr});

  AttackProvider provider(classifier, ens.roster, rngs);
  if (cfg.cache_attacks) provider.build_cache(split.transformed_base, cfg.batch_size);

  if (cfg.faster_init) {
    ens.generators = faster_init_with(provider, split.transformed_base, cfg, rngs);
  } else {
    for (int j = 0; j < cfg.num_generators; ++j)
      ens.generators.push_back(build_generator_for(cfg, rngs, j));
    std::vector<AdamState> init_opts;
    for (auto& g : ens.generators)
      init_opts.emplace_back(g.parameters(), AdamConfig{.lr = cfg.lr});
    identity_init_with(provider, ens.generators, init_opts, split.transformed_base,
                       cfg.init_epochs, cfg.batch_size, rngs);
  }
  for (auto& g : ens.generators) ens.gen_opt.emplace_back(g.parameters(), AdamConfig{.lr = cfg.lr});

  for (int e = 0; e < cfg.train_epochs; ++e) {
    BatchIterator canon_it(split.canonical, cfg.batch_size, rngs.named(streams::kShuffle));
    BatchIterator transf_it(split.transformed_base, cfg.batch_size,
                            rngs.named(streams::kShuffle));
    Tensor canon, transf;
    int step = 0;
    while (canon_it.next(canon) && transf_it.next(transf)) {
      AttackKind kind{};
      const Tensor adv = provider.adversarial(transf, transf_it.last_indices(), &kind);
      const StepReport rep = competitive_step_on(ens, adv, canon, kind, e, step);
      if (sink != nullptr) sink->on_step(rep);
      ++step;
    }
    ens.epoch = e + 1;
    if (sink != nullptr && cfg.checkpoint_every > 0 && (e + 1) % cfg.checkpoint_every == 0)
      sink->on_checkpoint(ens, e + 1);
  }
  return ens;
}

EnsembleState train_separate_then_combine(const std::vector<std::filesystem::path>& gen_ckpts,
                                          const std::filesystem::path& disc_ckpt,
                                          std::vector<AttackSpec> roster) {
  if (gen_ckpts.empty()) throw ConfigError("separate-then-combine needs generator checkpoints");
  EnsembleState ens;
  ens.roster = std::move(roster);
  Rng dummy(0);
  for (std::size_t k = 0; k < gen_ckpts.size(); ++k) {
    NetworkModel g = build_generator(dummy, "generator_" + std::to_string(k));
    load_model(g, nullptr, gen_ckpts[k]);
    ens.generators.push_back(std::move(g));
  }
  ens.discriminator = build_discriminator(dummy);
  load_model(ens.discriminator, nullptr, disc_ckpt);
  for (auto& g : ens.generators) ens.gen_opt.emplace_back(g.parameters(), AdamConfig{});
  ens.disc_opt = AdamState(ens.discriminator.parameters(), AdamConfig{});
  ens.config.num_generators = static_cast<int>(ens.generators.size());
  return ens;
}

void save_ensemble(EnsembleState& ens, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["epoch"] = ens.epoch;
  meta["seed"] = ens.config.seed;
  meta["config"] = nlohmann::json::parse(ens.config.to_json());
  nlohmann::json roster = nlohmann::json::array();
  for (const auto& spec : ens.roster) roster.push_back(spec.full_str());
  meta["roster"] = roster;
  for (std::size_t j = 0; j < ens.generators.size(); ++j)
    save_model(ens.generators[j], &ens.gen_opt[j], meta.dump(),
               dir / ("gen_" + std::to_string(j) + ".ckpt"));
  save_model(ens.discriminator, &ens.disc_opt, meta.dump(), dir / "disc.ckpt");
}

EnsembleState load_ensemble(const std::filesystem::path& dir) {
  EnsembleState ens;
  Rng dummy(0);
  ens.discriminator = build_discriminator(dummy);
  ens.disc_opt = AdamState(ens.discriminator.parameters(), AdamConfig{});
  const std::string meta_text = load_model(ens.discriminator, &ens.disc_opt, dir / "disc.ckpt");
  const auto meta = nlohmann::json::parse(meta_text);
  ens.epoch = meta.value("epoch", 0);
  if (meta.contains("config")) ens.config = TrainConfig::from_json(meta["config"].dump());
  for (const auto& item : meta.value("roster", nlohmann::json::array()))
    ens.roster.push_back(AttackSpec::parse(item.get<std::string>()));
  for (int j = 0;; ++j) {
    const auto path = dir / ("gen_" + std::to_string(j) + ".ckpt");
    if (!std::filesystem::exists(path)) break;
    NetworkModel g = ens.config.large_generator
                         ? build_large_generator(dummy, "generator_" + std::to_string(j))
                         : build_generator(dummy, "generator_" + std::to_string(j));
    AdamState opt(g.parameters(), AdamConfig{.lr = ens.config.lr});
    load_model(g, &opt, path);
    ens.generators.push_back(std::move(g));
    ens.gen_opt.push_back(std::move(opt));
  }
  if (ens.generators.empty())
    throw IoError("no generator checkpoints found under " + dir.string());
  return ens;
}

}  // namespace genmix
