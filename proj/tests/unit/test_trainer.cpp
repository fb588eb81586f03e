// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "unipde/common.hpp"
#include "unipde/trainer/adam.hpp"
#include "unipde/trainer/dataset.hpp"
#include "unipde/trainer/losses.hpp"
#include "unipde/trainer/train.hpp"

using namespace unipde;
using namespace unipde::train;
using gk::Tensor;
using gk::Var;
using testsupport::random_tensor;

namespace {

double brute_mmd(const Tensor& a, const Tensor& b, double sigma) {
  auto k = [&](const Tensor& x, std::size_t i, const Tensor& y, std::size_t j) {
    double d = 0;
    for (std::size_t c = 0; c < x.dim(1); ++c) {
      const double diff = x.at({i, c}) - y.at({j, c});
      d += diff * diff;
    }
    return std::exp(-d / (2.0 * sigma * sigma));
  };
  const std::size_t na = a.dim(0), nb = b.dim(0);
  double xx = 0, xy = 0, yy = 0;
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j) xx += k(a, i, a, j);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j) xy += k(a, i, b, j);
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j < nb; ++j) yy += k(b, i, b, j);
  return xx / double(na * na) - 2.0 * xy / double(na * nb) + yy / double(nb * nb);
}

double mmd_value(const Tensor& a, const Tensor& b, double sigma) {
  gk::Tape t;
  return mmd_loss(t.constant(a), t.constant(b), sigma).value()[0];
}

double nrmse_value(const Tensor& p, const Tensor& t, const Tensor& m, const std::vector<std::size_t>& g = {}) {
  gk::Tape tape;
  return nrmse_loss(tape.constant(p), t, m, g).value()[0];
}

net::ModelConfig toy_model() {
  net::ModelConfig c;
  c.n = 16;
  c.channels = 4;
  c.embed = 16;
  c.fno_depth = 1;
  c.body_depth = 1;
  c.modes = 4;
  c.heads = 2;
  return c;
}

FamilySplit toy_family(pde::Family f, std::uint64_t seed, std::size_t traj = 6) {
  pde::GenSpec g;
  g.family = f;
  g.n = 16;
  g.timesteps = 4;
  g.num_traj = traj;
  g.seed = seed;
  g.t_final = 0.3;
  return split_family(pde::generate_family(g), 0.34);
}

TrainConfig toy_train() {
  TrainConfig c;
  c.batch_size = 4;
  c.lr = 1e-3;
  c.stage1_epochs = 2;
  c.stage2_epochs = 3;
  c.fewshot_epochs = 1;
  c.seed = 5;
  return c;
}

const std::vector<std::string> kCorpus{"the quick brown fox", "a b c", "numbers 1 2 3", "hello world", "x"};

bool same_params(const gk::NamedTensors& a, const gk::NamedTensors& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    const auto it = b.find(name);
    if (it == b.end() || !std::equal(t.data().begin(), t.data().end(), it->second.data().begin())) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("nrmse basic values and scale invariance") {
  Tensor t = random_tensor({3, 2, 4, 4}, 1);
  Tensor m = Tensor::full(t.shape(), 1.0);
  CHECK(nrmse_value(t, t, m) == 0.0);
  CHECK(nrmse_value(Tensor(t.shape()), t, m) == doctest::Approx(1.0).epsilon(1e-15));
  Tensor p = random_tensor(t.shape(), 2);
  const double base = nrmse_value(p, t, m);
  for (double c : {-3.0, 0.01, 250.0}) {
    Tensor ps = p, ts = t;
    for (double& v : ps.data()) v *= c;
    for (double& v : ts.data()) v *= c;
    CHECK(std::abs(nrmse_value(ps, ts, m) - base) < 1e-12);
  }
  const auto per = per_sample_nrmse(p, t, m);
  double mean = 0;
  for (double v : per) mean += v / 3.0;
  CHECK(std::abs(mean - base) < 1e-14);
}

TEST_CASE("nrmse averages within groups and then over groups") {
  Tensor t = random_tensor({4, 1, 2, 2}, 3);
  Tensor p = random_tensor({4, 1, 2, 2}, 4);
  Tensor m = Tensor::full(t.shape(), 1.0);
  const auto per = per_sample_nrmse(p, t, m);
  const double expect = 0.5 * (per[0] + (per[1] + per[2] + per[3]) / 3.0);
  CHECK(std::abs(nrmse_value(p, t, m, {7, 2, 2, 2}) - expect) < 1e-14);
}

TEST_CASE("nrmse skips zero-norm targets") {
  Tensor t = random_tensor({2, 1, 2, 2}, 3);
  for (std::size_t i = 4; i < 8; ++i) t[i] = 0.0;
  Tensor p = random_tensor(t.shape(), 4);
  Tensor m = Tensor::full(t.shape(), 1.0);
  const auto per = per_sample_nrmse(p, t, m);
  CHECK(std::isnan(per[1]));
  CHECK(nrmse_value(p, t, m) == doctest::Approx(per[0]).epsilon(1e-15));
  Tensor z(t.shape());
  CHECK_THROWS_AS(nrmse_value(p, z, m), NumericalError);
}

TEST_CASE("masked entries change neither the loss nor receive gradient") {
  Tensor t = random_tensor({2, 4, 4, 4}, 5);
  Tensor p = random_tensor(t.shape(), 6);
  Tensor m(t.shape());
  // Active: channel 0, row 0 only (1D layout) plus channel 2 fully.
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t q = 0; q < 4; ++q) m.at({s, 0, 0, q}) = 1.0;
    for (std::size_t i = 0; i < 16; ++i) m[(s * 4 + 2) * 16 + i] = 1.0;
  }
  const double base = nrmse_value(p, t, m);
  Tensor q = p;
  for (std::size_t i = 0; i < q.numel(); ++i) {
    if (m[i] == 0.0) q[i] += 1e3 * std::sin(double(i));
  }
  CHECK(nrmse_value(q, t, m) == base);
  gk::Tape tape;
  Var pv = tape.param("p", q);
  auto g = tape.backward(nrmse_loss(pv, t, m));
  const Tensor& gp = g.at("p");
  std::size_t nonzero_active = 0;
  for (std::size_t i = 0; i < gp.numel(); ++i) {
    if (m[i] == 0.0) {
      CHECK(gp[i] == 0.0);
    } else if (gp[i] != 0.0) {
      ++nonzero_active;
    }
  }
  CHECK(nonzero_active > 0);
}

TEST_CASE("nrmse gradient matches central differences") {
  Tensor t = random_tensor({3, 2, 3, 3}, 8);
  Tensor m = Tensor::full(t.shape(), 1.0);
  m[0] = 0.0;
  const double err = testsupport::gradient_error(
      [&](gk::Tape&, const std::vector<Var>& v) { return nrmse_loss(v[0], t, m, {0, 1, 1}); }, {random_tensor(t.shape(), 9)});
  CHECK(err < 1e-7);
}

TEST_CASE("mmd matches the brute-force double loop") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Tensor a = random_tensor({5, 3}, 100 + s);
    Tensor b = random_tensor({4 + s % 3, 3}, 200 + s, -0.5, 1.5);
    const double sigma = 0.3 + 0.1 * static_cast<double>(s);
    CHECK(std::abs(mmd_value(a, b, sigma) - brute_mmd(a, b, sigma)) < 1e-12);
    CHECK(std::abs(mmd_value(a, b, sigma) - mmd_value(b, a, sigma)) < 1e-12);
  }
}

TEST_CASE("mmd is zero on identical sets and never negative") {
  Tensor a = random_tensor({6, 4}, 1);
  CHECK(mmd_value(a, a, 0.7) == 0.0);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t na = 2 + rng() % 6, nb = 2 + rng() % 6;
    Tensor x = random_tensor({na, 3}, rng());
    Tensor y = random_tensor({nb, 3}, rng());
    CHECK(mmd_value(x, y, median_bandwidth(x, y)) >= 0.0);
  }
  CHECK_THROWS(mmd_value(random_tensor({1, 3}, 1), a.reshaped({8, 3}), 1.0));
}

TEST_CASE("median bandwidth is the median pairwise distance") {
  Tensor a = Tensor::from({2, 1}, {0.0, 1.0});
  Tensor b = Tensor::from({2, 1}, {3.0, 7.0});
  // distances: 1 3 7 2 6 4 -> sorted 1 2 3 4 6 7, median 3.5
  CHECK(median_bandwidth(a, b) == doctest::Approx(3.5));
  // distances: 1 5 4 -> median 4
  CHECK(median_bandwidth(Tensor::from({1, 1}, {0.0}), Tensor::from({2, 1}, {1.0, 5.0})) == doctest::Approx(4.0));
  Tensor same = Tensor::full({3, 2}, 1.0);
  CHECK(median_bandwidth(same, same) == kBandwidthFloor);
}

TEST_CASE("mmd gradient matches central differences") {
  const double err = testsupport::gradient_error(
      [](gk::Tape&, const std::vector<Var>& v) { return mmd_loss(v[0], v[1], 0.9); },
      {random_tensor({4, 3}, 11), random_tensor({5, 3}, 12)});
  CHECK(err < 1e-7);
}

TEST_CASE("reference features pool the metadata embedding") {
  net::Model m(toy_model(), 2);
  Tensor f = reference_features({"same line", "", "same line"}, m);
  REQUIRE(f.dim(0) == 2);
  const std::size_t e = f.dim(1);
  CHECK(std::equal(f.ptr(), f.ptr() + e, f.ptr() + e));
  const Tensor& table = m.params().at("meta.embedding");
  const std::string text = "same line";
  for (std::size_t k = 0; k < e; ++k) {
    double s = table[net::kBosToken * e + k] + table[net::kEosToken * e + k];
    for (unsigned char ch : text) s += table[ch * e + k];
    CHECK(std::abs(f[k] - s / double(text.size() + 2)) < 1e-12);
  }
  Tensor again = reference_features({"same line"}, m);
  CHECK(std::equal(again.ptr(), again.ptr() + e, f.ptr()));
}

TEST_CASE("adam matches a hand-computed update") {
  gk::NamedTensors p{{"w", Tensor::scalar(2.0)}};
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  Adam opt;
  // loss w^2: g = 2w = 4. m = 0.4, v = 0.016, mh = 4, vh = 16
  opt.step(p, {{"w", Tensor::scalar(4.0)}}, cfg);
  CHECK(std::abs(p.at("w")[0] - (2.0 - 0.1 * 4.0 / (4.0 + 1e-8))) < 1e-12);
  const double w1 = p.at("w")[0];
  const double g2 = 2.0 * w1;
  const double m2 = 0.9 * 0.4 + 0.1 * g2, v2 = 0.999 * 0.016 + 0.001 * g2 * g2;
  const double mh = m2 / (1 - 0.81), vh = v2 / (1 - 0.999 * 0.999);
  opt.step(p, {{"w", Tensor::scalar(g2)}}, cfg);
  CHECK(std::abs(p.at("w")[0] - (w1 - 0.1 * mh / (std::sqrt(vh) + 1e-8))) < 1e-12);
  CHECK(opt.steps() == 2);
}

TEST_CASE("adam with zero gradient only applies decoupled decay") {
  gk::NamedTensors p{{"w", random_tensor({5}, 1)}, {"frozen", random_tensor({2}, 2)}};
  const auto before = p;
  AdamConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.0;
  Adam opt;
  opt.step(p, {{"w", Tensor({5})}}, cfg);
  CHECK(same_params(p, before));
  cfg.weight_decay = 0.5;
  for (int s = 0; s < 3; ++s) opt.step(p, {{"w", Tensor({5})}}, cfg);
  for (std::size_t i = 0; i < 5; ++i) {
    double expect = before.at("w")[i];
    for (int s = 0; s < 3; ++s) expect *= 1.0 - 0.01 * 0.5;
    CHECK(p.at("w")[i] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK(same_params({{"f", p.at("frozen")}}, {{"f", before.at("frozen")}}));
}

TEST_CASE("adam rejects non-finite gradients and clips by global norm") {
  gk::NamedTensors p{{"w", Tensor::from({2}, {1.0, 1.0})}};
  const auto before = p;
  Adam opt;
  AdamConfig cfg;
  CHECK_THROWS_AS(opt.step(p, {{"w", Tensor::from({2}, {1.0, NAN})}}, cfg), NumericalError);
  CHECK(same_params(p, before));
  CHECK(opt.steps() == 0);
  // Clipping rescales the gradient, Adam's first step is scale free.
  cfg.grad_clip = 1e-3;
  cfg.weight_decay = 0;
  opt.step(p, {{"w", Tensor::from({2}, {30.0, -40.0})}}, cfg);
  CHECK(opt.first_moments().at("w")[0] == doctest::Approx(0.1 * 30.0 * 1e-3 / 50.0));
}

TEST_CASE("split keeps the last trajectories for testing with train statistics") {
  pde::GenSpec g;
  g.family = pde::Family::kAdvection;
  g.n = 16;
  g.timesteps = 3;
  g.num_traj = 10;
  g.seed = 2;
  const auto set = pde::generate_family(g);
  const auto split = split_family(set, 0.2);
  CHECK(split.train.num_traj == 8);
  CHECK(split.test.num_traj == 2);
  const auto stats = rep::compute_stats(set.subset(0, 8), rep::default_quantity_map(set));
  CHECK(split.test.stats[0].mean == stats[0].mean);
  CHECK(split.test.stats[0].std == stats[0].std);
  CHECK(split.train.name == "advection beta=0.4");
  CHECK_THROWS_AS(split_family(set, 0.0), ConfigError);
}

TEST_CASE("shuffle depends only on the engine state") {
  std::vector<rep::BatchItem> a, b;
  for (std::uint32_t i = 0; i < 50; ++i) a.push_back({i % 3, {i, i}});
  b = a;
  std::mt19937_64 r1(9), r2(9);
  shuffle_items(a, r1);
  shuffle_items(b, r2);
  CHECK(a.size() == b.size());
  bool moved = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].pair == b[i].pair);
    moved = moved || a[i].pair.traj != i;
  }
  CHECK(moved);
}

TEST_CASE("stage 1 trains the embedder and leaves the body bit-identical") {
  auto adv = toy_family(pde::Family::kAdvection, 1);
  auto bur = toy_family(pde::Family::kBurgers, 2);
  net::Model model(toy_model(), 3);
  const auto before = model.params();
  TrainConfig cfg = toy_train();
  TrainState st = initial_state(cfg);
  stage1_train(model, {&adv.train, &bur.train}, kCorpus, cfg, st);
  CHECK(st.stage == 2);
  CHECK(st.epoch == 0);
  REQUIRE(st.history.size() == 2);
  CHECK(std::isfinite(st.history[0].loss_align));
  CHECK(std::isfinite(st.history[0].loss_task));
  bool embed_changed = false;
  for (const auto& [name, t] : model.params()) {
    const bool same = std::equal(t.data().begin(), t.data().end(), before.at(name).data().begin());
    if (net::Model::is_body_param(name)) {
      CHECK_MESSAGE(same, name);
    } else if (!same) {
      embed_changed = true;
    }
  }
  CHECK(embed_changed);
  // Predictor frozen too under embedder_only.
  net::Model m2(toy_model(), 3);
  cfg.stage1_trainable = Stage1Trainable::kEmbedderOnly;
  TrainState s2 = initial_state(cfg);
  stage1_train(m2, {&adv.train}, kCorpus, cfg, s2);
  CHECK(same_params({{"p", m2.params().at("predictor.weight")}}, {{"p", before.at("predictor.weight")}}));
}

TEST_CASE("loss weights select the stage 1 terms") {
  auto adv = toy_family(pde::Family::kAdvection, 1);
  TrainConfig cfg = toy_train();
  cfg.stage1_epochs = 1;
  cfg.align_weight = 0.0;
  net::Model m(toy_model(), 1);
  TrainState s = initial_state(cfg);
  stage1_train(m, {&adv.train}, {}, cfg, s);
  CHECK(std::isnan(s.history.at(0).loss_align));
  CHECK(s.reference.empty());
  cfg.align_weight = 1.0;
  cfg.task_weight = 0.0;
  net::Model m2(toy_model(), 1);
  TrainState s2 = initial_state(cfg);
  stage1_train(m2, {&adv.train}, kCorpus, cfg, s2);
  CHECK(std::isnan(s2.history.at(0).loss_task));
  CHECK(std::isfinite(s2.history.at(0).loss_align));
  cfg.align_weight = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("training is deterministic and resumes bit-exactly") {
  auto adv = toy_family(pde::Family::kAdvection, 1);
  auto bur = toy_family(pde::Family::kBurgers, 2);
  const std::vector<const rep::UnifiedDataset*> sets{&adv.train, &bur.train};
  TrainConfig cfg = toy_train();
  cfg.checkpoint_every = 1;
  const auto dir = std::filesystem::temp_directory_path() / "unipde_resume_test";
  std::filesystem::remove_all(dir);

  auto full_run = [&](const std::filesystem::path& ckdir) {
    net::Model m(toy_model(), 4);
    TrainState s = initial_state(cfg);
    TrainHooks h;
    h.checkpoint_dir = ckdir;
    stage1_train(m, sets, kCorpus, cfg, s, h);
    stage2_train(m, sets, cfg, s, h);
    return std::make_pair(m, s);
  };
  auto [ma, sa] = full_run(dir);
  auto [mb, sb] = full_run({});
  CHECK(same_params(ma.params(), mb.params()));

  net::Model mc(toy_model(), 99);
  TrainState sc;
  load_checkpoint(dir / "stage2_epoch1", mc, sc);
  CHECK(sc.stage == 2);
  CHECK(sc.epoch == 1);
  stage2_train(mc, sets, cfg, sc);
  CHECK(same_params(ma.params(), mc.params()));
  REQUIRE(sc.history.size() == sa.history.size());
  for (std::size_t i = 0; i < sa.history.size(); ++i) {
    CHECK(sc.history[i].loss_task == sa.history[i].loss_task);
  }
  CHECK(sc.adam.steps() == sa.adam.steps());

  net::Model other(toy_model(), 1);
  net::ModelConfig wrong = toy_model();
  wrong.embed = 8;
  net::Model mw(wrong, 1);
  CHECK_THROWS_AS(load_checkpoint(dir / "stage2_epoch1", mw, sc), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("stopping after a few epochs and continuing matches one long call") {
  auto adv = toy_family(pde::Family::kAdvection, 1);
  TrainConfig cfg = toy_train();
  net::Model a(toy_model(), 2), b(toy_model(), 2);
  TrainState sa = initial_state(cfg), sb = initial_state(cfg);
  stage2_train(a, {&adv.train}, cfg, sa);
  TrainHooks h;
  h.max_epochs = 1;
  stage2_train(b, {&adv.train}, cfg, sb, h);
  CHECK(sb.epoch == 1);
  stage2_train(b, {&adv.train}, cfg, sb);
  CHECK(same_params(a.params(), b.params()));
}

TEST_CASE("few-shot adaptation copies the model") {
  auto rd = toy_family(pde::Family::kReactionDiffusion1D, 3, 8);
  net::Model base(toy_model(), 6);
  const auto before = base.params();
  TrainConfig cfg = toy_train();
  net::Model zero = fewshot_adapt(base, rd.train, 0, cfg);
  CHECK(same_params(zero.params(), before));
  net::Model adapted = fewshot_adapt(base, rd.train, 2, cfg);
  CHECK_FALSE(same_params(adapted.params(), before));
  CHECK(same_params(base.params(), before));
  CHECK_THROWS_AS(fewshot_adapt(base, rd.train, rd.train.num_traj + 1, cfg), ConfigError);
}

TEST_CASE("non-finite data aborts training with a numerical error") {
  auto adv = toy_family(pde::Family::kAdvection, 1);
  adv.train.data[5] = std::numeric_limits<float>::infinity();
  net::Model m(toy_model(), 1);
  TrainConfig cfg = toy_train();
  TrainState s = initial_state(cfg);
  CHECK_THROWS_AS(stage2_train(m, {&adv.train}, cfg, s), NumericalError);
}
