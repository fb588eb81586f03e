// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "support.hpp"
#include "unipde/common.hpp"
#include "unipde/gradkit/serialize.hpp"
#include "unipde/upsnet/model.hpp"
#include "unipde/upsnet/tokenizer.hpp"

using namespace unipde;
using namespace unipde::net;
using gk::Tensor;
using gk::Var;
using testsupport::random_complex;
using testsupport::random_tensor;

namespace {

ModelConfig toy_config() {
  ModelConfig c;
  c.n = 16;
  c.channels = 4;
  c.embed = 32;
  c.fno_depth = 2;
  c.body_depth = 2;
  c.modes = 4;
  c.heads = 4;
  c.max_meta_len = 32;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("unipde_model_" + name);
}

// Band-limited field sampled on the periodic grid j / n.
Tensor smooth_field(std::size_t channels, std::size_t n, std::size_t max_k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor out({1, channels, n, n});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t kx = 0; kx <= max_k; ++kx) {
      for (std::size_t ky = 0; ky <= max_k; ++ky) {
        const double a = d(rng), ph = d(rng) * std::numbers::pi;
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t q = 0; q < n; ++q) {
            const double x = static_cast<double>(q) / static_cast<double>(n);
            const double y = static_cast<double>(r) / static_cast<double>(n);
            out[(c * n + r) * n + q] += a * std::cos(2.0 * std::numbers::pi * (kx * x + ky * y) + ph);
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("parameter count matches the allocated tensors") {
  for (auto c : {toy_config(), ModelConfig{}}) {
    Model m(c, 3);
    std::size_t total = 0;
    for (const auto& [name, t] : m.params()) total += t.data().size();
    CHECK(total == parameter_count(c));
  }
  ModelConfig c = toy_config();
  c.body_depth = 0;
  c.use_coords = false;
  Model m(c, 1);
  std::size_t total = 0;
  for (const auto& [name, t] : m.params()) total += t.data().size();
  CHECK(total == parameter_count(c));
}

TEST_CASE("initialisation is a function of the seed") {
  Model a(toy_config(), 5), b(toy_config(), 5), c(toy_config(), 6);
  for (const auto& [name, t] : a.params()) {
    CHECK(t.data().size() == b.params().at(name).data().size());
    CHECK(std::equal(t.data().begin(), t.data().end(), b.params().at(name).data().begin()));
  }
  CHECK_FALSE(std::equal(a.params().at("proj.weight").data().begin(), a.params().at("proj.weight").data().end(),
                         c.params().at("proj.weight").data().begin()));
}

TEST_CASE("config validation and json round trip") {
  ModelConfig c = toy_config();
  c.use_metadata = false;
  CHECK(ModelConfig::from_json(c.to_json()) == c);
  auto bad = toy_config();
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy_config();
  bad.modes = 9;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy_config();
  bad.n = 24;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::from_json("{\"channels\": 2}"), FormatError);
}

TEST_CASE("forward shapes and segment layout") {
  const ModelConfig c = toy_config();
  Model m(c, 2);
  const std::size_t b = 3;
  Tensor x = random_tensor({b, c.input_channels(), c.n, c.n}, 9);
  std::vector<std::string> meta{"advection beta=0.4", "burgers nu=0.001", "x"};
  gk::Tape tape;
  ParamBinder p(tape, m.params());
  auto r = m.forward(p, x, meta);
  CHECK(r.prediction.shape() == gk::Shape{b, c.quantities, c.n, c.n});
  CHECK(r.pooled_mix.shape() == gk::Shape{b, c.embed});
  REQUIRE(r.segments.size() == b);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < b; ++i) {
    CHECK(r.segments[i].offset == offset);
    CHECK(r.segments[i].length == meta[i].size() + 2 + c.channels);
    offset += r.segments[i].length;
  }
  CHECK(r.mix.shape() == gk::Shape{offset, c.embed});

  Tensor direct = m.predict_tensor(x, meta);
  CHECK(std::equal(direct.data().begin(), direct.data().end(), r.prediction.value().data().begin()));
}

TEST_CASE("without metadata each sample holds exactly the PDE tokens") {
  ModelConfig c = toy_config();
  c.use_metadata = false;
  Model m(c, 2);
  Tensor x = random_tensor({2, c.input_channels(), c.n, c.n}, 4);
  gk::Tape tape;
  ParamBinder p(tape, m.params());
  auto r = m.forward(p, x, {});
  REQUIRE(r.segments.size() == 2);
  CHECK(r.segments[0].length == c.channels);
  CHECK(r.segments[1].offset == c.channels);
  CHECK(r.mix.shape() == gk::Shape{2 * c.channels, c.embed});
}

TEST_CASE("assembled tokens are normalised and position dependent") {
  const ModelConfig c = toy_config();
  Model m(c, 8);
  gk::Tape tape;
  ParamBinder p(tape, m.params());
  // Identical PDE tokens: any difference after assembly comes from position.
  Tensor same({c.channels, c.embed});
  for (std::size_t r = 0; r < c.channels; ++r) {
    for (std::size_t k = 0; k < c.embed; ++k) same[r * c.embed + k] = std::sin(0.3 * static_cast<double>(k));
  }
  std::vector<gk::Segment> segs;
  Var mix = m.assemble(p, tape.constant(same), {"burgers nu=0.001"}, &segs);
  const Tensor& v = mix.value();
  const std::size_t rows = v.dim(0), e = c.embed;
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0, var = 0;
    for (std::size_t k = 0; k < e; ++k) mean += v[r * e + k];
    mean /= static_cast<double>(e);
    for (std::size_t k = 0; k < e; ++k) var += (v[r * e + k] - mean) * (v[r * e + k] - mean);
    var /= static_cast<double>(e);
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
  }
  const std::size_t first_pde = segs[0].length - c.channels;
  double diff = 0;
  for (std::size_t k = 0; k < e; ++k) diff += std::abs(v[first_pde * e + k] - v[(first_pde + 1) * e + k]);
  CHECK(diff > 1e-3);
}

TEST_CASE("attention rows are distributions over the own segment") {
  const ModelConfig c = toy_config();
  Model m(c, 1);
  gk::Tape tape;
  ParamBinder p(tape, m.params());
  Tensor x = random_tensor({2, c.input_channels(), c.n, c.n}, 2);
  auto r = m.forward(p, x, {"a", "burgers nu=0.01"});
  std::vector<Tensor> probs;
  m.body_forward(p, r.mix, r.segments, &probs);
  REQUIRE(probs.size() == c.body_depth * r.segments.size() * c.heads);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const Tensor& a = probs[i];
    const std::size_t len = r.segments[(i / c.heads) % r.segments.size()].length;
    REQUIRE(a.numel() == len * len);
    for (std::size_t row = 0; row < len; ++row) {
      double s = 0;
      for (std::size_t col = 0; col < len; ++col) {
        CHECK(a[row * len + col] >= 0.0);
        s += a[row * len + col];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("samples in a batch do not interact") {
  const ModelConfig c = toy_config();
  Model m(c, 4);
  Tensor x = random_tensor({2, c.input_channels(), c.n, c.n}, 12);
  Tensor y = m.predict_tensor(x, {"advection beta=0.4", "burgers nu=0.001"});
  Tensor first({1, c.input_channels(), c.n, c.n});
  std::copy_n(x.ptr(), first.numel(), first.ptr());
  Tensor y0 = m.predict_tensor(first, {"advection beta=0.4"});
  const std::size_t per = y0.numel();
  double worst = 0;
  for (std::size_t i = 0; i < per; ++i) worst = std::max(worst, std::abs(y[i] - y0[i]));
  CHECK(worst < 1e-12);
}

TEST_CASE("metadata changes the prediction") {
  const ModelConfig c = toy_config();
  Model m(c, 4);
  Tensor x = random_tensor({1, c.input_channels(), c.n, c.n}, 12);
  Tensor a = m.predict_tensor(x, {"advection beta=0.4"});
  Tensor b = m.predict_tensor(x, {"advection beta=0.1"});
  double diff = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) diff += std::abs(a[i] - b[i]);
  CHECK(diff > 1e-6);
}

TEST_CASE("fno block is consistent across resolutions on band-limited input") {
  const std::size_t cin = 3, cout = 5, m = 4;
  Tensor w = random_complex({cin, cout, 2 * m, m}, 21);
  Tensor pw = random_tensor({cout, cin}, 22);
  Tensor pb = random_tensor({cout}, 23);
  Tensor coarse = smooth_field(cin, 32, 3, 24);
  Tensor fine = smooth_field(cin, 64, 3, 24);
  auto run = [&](const Tensor& x) {
    gk::Tape t;
    return fno_block(t.constant(x), t.constant(w), t.constant(pw), t.constant(pb), m).value();
  };
  Tensor yc = run(coarse), yf = run(fine);
  double worst = 0;
  for (std::size_t ch = 0; ch < cout; ++ch) {
    for (std::size_t r = 0; r < 32; ++r) {
      for (std::size_t q = 0; q < 32; ++q) {
        worst = std::max(worst, std::abs(yc[(ch * 32 + r) * 32 + q] - yf[(ch * 64 + 2 * r) * 64 + 2 * q]));
      }
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("spectral convolution ignores modes above the cutoff") {
  const std::size_t n = 16, m = 3;
  Tensor x({1, 2, n, n});
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t q = 0; q < n; ++q) {
        const double th = 2.0 * std::numbers::pi / static_cast<double>(n);
        x[(c * n + r) * n + q] = std::cos(th * 5.0 * q) + std::sin(th * 4.0 * r + th * 6.0 * q);
      }
    }
  }
  gk::Tape t;
  Tensor y = spectral_conv2d(t.constant(x), t.constant(random_complex({2, 2, 2 * m, m}, 5)), m).value();
  double worst = 0;
  for (double v : y.data()) worst = std::max(worst, std::abs(v));
  CHECK(worst < 1e-12);
}

TEST_CASE("zero weights give a bias-only prediction") {
  const ModelConfig c = toy_config();
  Model m(c, 4);
  for (double& v : m.params().at("predictor.weight").data()) v = 0.0;
  Tensor x = random_tensor({1, c.input_channels(), c.n, c.n}, 1);
  Tensor y = m.predict_tensor(x, {"burgers nu=0.001"});
  const Tensor& b = m.params().at("predictor.bias");
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == b[i]);
}

TEST_CASE("weights save and load bit-identically") {
  const ModelConfig c = toy_config();
  Model a(c, 10), b(c, 11);
  const auto path = temp_path("roundtrip.upsw");
  a.save(path);
  b.load(path);
  for (const auto& [name, t] : a.params()) {
    const auto& u = b.params().at(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }
  Tensor x = random_tensor({1, c.input_channels(), c.n, c.n}, 3);
  Tensor ya = a.predict_tensor(x, {"k"}), yb = b.predict_tensor(x, {"k"});
  CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
  std::filesystem::remove(path);
}

TEST_CASE("loading mismatched weights fails and leaves the model untouched") {
  ModelConfig small = toy_config();
  ModelConfig other = toy_config();
  other.embed = 16;
  Model a(other, 1), b(small, 2);
  const auto path = temp_path("mismatch.upsw");
  a.save(path);
  const auto before = b.params();
  CHECK_THROWS_AS(b.load(path), FormatError);
  for (const auto& [name, t] : before) {
    const auto& u = b.params().at(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  }
  std::filesystem::remove(path);
}

TEST_CASE("body weights transfer without touching the rest") {
  const ModelConfig c = toy_config();
  Model src(c, 1), dst(c, 2);
  const auto path = temp_path("body.upsw");
  src.save(path);
  const auto before = dst.params();
  dst.load_body_weights(path);
  for (const auto& [name, t] : dst.params()) {
    const Tensor& expect = Model::is_body_param(name) ? src.params().at(name) : before.at(name);
    CHECK(std::equal(t.data().begin(), t.data().end(), expect.data().begin()));
  }
  std::filesystem::remove(path);
}

TEST_CASE("text embedding pools the metadata table") {
  const ModelConfig c = toy_config();
  Model m(c, 1);
  Tensor e = m.pooled_text_embedding("ab");
  const Tensor& table = m.params().at("meta.embedding");
  for (std::size_t k = 0; k < c.embed; ++k) {
    const double expect = (table[kBosToken * c.embed + k] + table['a' * c.embed + k] + table['b' * c.embed + k] +
                           table[kEosToken * c.embed + k]) / 4.0;
    CHECK(e[k] == doctest::Approx(expect).epsilon(1e-14));
  }
  CHECK_THROWS(m.pooled_text_embedding(""));
}

TEST_CASE("toy model gradients match central differences") {
  const ModelConfig c = toy_config();
  Model m(c, 17);
  // Non-trivial norm parameters so their gradients are exercised as well.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.5, 1.5);
  for (auto& [name, t] : m.params()) {
    if (name.find("gamma") != std::string::npos) {
      for (double& v : t.data()) v = d(rng);
    }
  }
  Tensor x = random_tensor({2, c.input_channels(), c.n, c.n}, 5);
  const std::vector<std::string> meta{"burgers nu=0.001", "advection beta=0.4"};
  testsupport::ParamLoss build = [&](gk::Tape& tape, const gk::NamedTensors& params) {
    ParamBinder p(tape, params);
    auto r = m.forward(p, x, meta);
    return gk::add(testsupport::project(r.prediction, 31), testsupport::project(r.pooled_mix, 32));
  };
  std::string worst_name;
  const double err = testsupport::sampled_gradient_error(build, m.params(), 6, 99, 1e-6, &worst_name);
  CAPTURE(worst_name);
  CHECK(err < 1e-4);
}
