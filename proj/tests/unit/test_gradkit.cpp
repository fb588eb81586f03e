// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>

#include "support.hpp"
#include "unipde/common.hpp"
#include "unipde/gradkit/fft.hpp"
#include "unipde/gradkit/gradcheck.hpp"
#include "unipde/gradkit/ops.hpp"
#include "unipde/gradkit/serialize.hpp"

using namespace unipde;
using namespace unipde::gk;
using testsupport::gradient_error;
using testsupport::project;
using testsupport::random_complex;
using testsupport::random_tensor;

TEST_CASE("tensor shape contract") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.data().size() == 6);
  Tensor c({2, 3}, DType::kComplex);
  CHECK(c.data().size() == 12);
  CHECK_THROWS(Tensor({2, 0}));
  CHECK_THROWS(t.reshaped({4}));
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("matmul values and errors") {
  Tape tape;
  Var i2 = tape.constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
  CHECK(matmul(i2, m).value() == m.value());
  Var a = tape.constant(Tensor::from({1, 2}, {1, 2}));
  Var b = tape.constant(Tensor::from({2, 1}, {3, 4}));
  CHECK(matmul(a, b).value()[0] == 11.0);
  try {
    matmul(a, a);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[1x2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum matches finite differences") {
  auto err = gradient_error([](Tape&, const std::vector<Var>& v) { return sum(matmul(v[0], v[1])); },
                            {random_tensor({5, 7}, 1), random_tensor({7, 3}, 2)});
  CHECK(err < 1e-6);
}

TEST_CASE("fft2 against direct DFT and properties") {
  SUBCASE("constant field is DC only") {
    Tensor x = Tensor::full({1, 8, 8}, 2.5);
    Tensor s = fft2(x);
    CHECK(s.cget(0).real() == doctest::Approx(2.5 * 64).epsilon(1e-14));
    for (std::size_t k = 1; k < 64; ++k) CHECK(std::abs(s.cget(k)) < 1e-12);
  }
  SUBCASE("round trip") {
    Tensor x = random_tensor({8, 8}, 3);
    CHECK(max_abs_diff(real_part(ifft2(fft2(x))), x) < 1e-12);
  }
  SUBCASE("direct DFT oracle") {
    Tensor x = random_tensor({1, 8, 8}, 4);
    std::vector<std::complex<double>> plane(x.data().begin(), x.data().end());
    auto ref = testsupport::direct_dft2(plane, 8);
    Tensor s = fft2(x);
    double worst = 0;
    for (std::size_t k = 0; k < 64; ++k) worst = std::max(worst, std::abs(s.cget(k) - ref[k]));
    CHECK(worst < 1e-10);
  }
  SUBCASE("linearity and Parseval") {
    Tensor x = random_tensor({2, 16, 16}, 5), y = random_tensor({2, 16, 16}, 6);
    Tensor comb(x.shape());
    for (std::size_t i = 0; i < comb.numel(); ++i) comb[i] = 0.7 * x[i] - 1.3 * y[i];
    Tensor fx = fft2(x), fy = fft2(y), fc = fft2(comb);
    double worst = 0;
    for (std::size_t i = 0; i < fc.data().size(); ++i) worst = std::max(worst, std::abs(fc.data()[i] - (0.7 * fx.data()[i] - 1.3 * fy.data()[i])));
    CHECK(worst < 1e-10);
    double ex = 0, es = 0;
    for (double v : x.data()) ex += v * v;
    for (double v : fx.data()) es += v * v;
    CHECK(std::abs(ex - es / 256.0) / ex < 1e-8);
  }
  SUBCASE("non power of two throws") { CHECK_THROWS_AS(fft2(Tensor({6, 6})), std::invalid_argument); }
}

TEST_CASE("elementwise suite values") {
  Tape tape;
  Var z = tape.constant(Tensor::from({1, 3}, {0, 0, 0}));
  Var s = softmax(z, 1);
  for (int i = 0; i < 3; ++i) CHECK(s.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  Var c = tape.constant(Tensor::full({2, 5}, 3.7));
  Var ln = layernorm(c, 1, 1e-5);
  CHECK(ln.value().max_abs() < 1e-3);
  Var r = tape.constant(random_tensor({4, 6}, 9));
  Var ln2 = layernorm(r, 1);
  for (std::size_t row = 0; row < 4; ++row) {
    double m = 0, v = 0;
    for (std::size_t j = 0; j < 6; ++j) m += ln2.value()[row * 6 + j];
    m /= 6;
    for (std::size_t j = 0; j < 6; ++j) v += std::pow(ln2.value()[row * 6 + j] - m, 2);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK_THROWS(softmax(r, 2));
  CHECK_THROWS(mean(r, -3));
}

TEST_CASE("elementwise gradients match finite differences") {
  const double tol = 1e-6;
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(gelu(v[0]), 11); },
                       {random_tensor({17}, 10, -3, 3)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(add(v[0], v[1]), 12); },
                       {random_tensor({3, 4}, 1), random_tensor({3, 4}, 2)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(sub(v[0], v[1]), 12); },
                       {random_tensor({3, 4}, 1), random_tensor({3, 4}, 2)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(mul(v[0], v[1]), 13); },
                       {random_tensor({3, 4}, 3), random_tensor({3, 4}, 4)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(scale(v[0], -2.5), 14); },
                       {random_tensor({6}, 5)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(softmax(v[0], 1), 15); },
                       {random_tensor({3, 5}, 6)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(softmax(v[0], 0), 15); },
                       {random_tensor({3, 5}, 6)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(layernorm(v[0], 1), 16); },
                       {random_tensor({3, 5}, 7)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(affine(v[0], v[1], v[2]), 17); },
                       {random_tensor({3, 5}, 8), random_tensor({5}, 9), random_tensor({5}, 10)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(mean(v[0], 0), 18); },
                       {random_tensor({4, 3, 2}, 11)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(mean(v[0], 1), 18); },
                       {random_tensor({4, 3, 2}, 11)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(reshape(v[0], {6, 4}), 19); },
                       {random_tensor({4, 3, 2}, 12)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(concat({v[0], v[1]}, 0), 20); },
                       {random_tensor({2, 3}, 13), random_tensor({4, 3}, 14)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(concat({v[0], v[1]}, 1), 20); },
                       {random_tensor({2, 3}, 13), random_tensor({2, 1}, 14)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(slice(v[0], 1, 1, 3), 21); },
                       {random_tensor({2, 4, 3}, 15)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(transpose(v[0]), 22); },
                       {random_tensor({2, 5}, 16)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(linear(v[0], v[1], v[2]), 23); },
                       {random_tensor({4, 3}, 17), random_tensor({3, 5}, 18), random_tensor({5}, 19)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(gather_rows(v[0], {2, 0, 2, 1}), 24); },
                       {random_tensor({3, 4}, 20)}) < tol);
  CHECK(gradient_error(
            [](Tape&, const std::vector<Var>& v) {
              return project(channel_mix(v[0], v[1], v[2]), 25);
            },
            {random_tensor({2, 3, 5}, 21), random_tensor({4, 3}, 22), random_tensor({4}, 23)}) < tol);
  CHECK(gradient_error(
            [](Tape&, const std::vector<Var>& v) { return project(segment_mean(v[0], {{0, 2}, {2, 3}}), 26); },
            {random_tensor({5, 3}, 24)}) < tol);
}

TEST_CASE("complex op gradients match finite differences") {
  const double tol = 1e-6;
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(cmul(v[0], v[1]), 30); },
                       {random_complex({3, 2}, 31), random_complex({3, 2}, 32)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(fft2(v[0]), 33); },
                       {random_tensor({2, 4, 4}, 34)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(ifft2(v[0]), 35); },
                       {random_complex({1, 4, 4}, 36)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(rfft2_trunc(v[0], 2), 37); },
                       {random_tensor({2, 8, 8}, 38)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(irfft2_trunc(v[0], 8), 39); },
                       {random_complex({2, 6, 3}, 40)}) < tol);
  CHECK(gradient_error([](Tape&, const std::vector<Var>& v) { return project(spectral_mix(v[0], v[1]), 41); },
                       {random_complex({2, 3, 4, 2}, 42), random_complex({3, 2, 4, 2}, 43)}) < tol);
}

TEST_CASE("self attention rows sum to one and gradient") {
  Tape tape;
  Var q = tape.constant(random_tensor({7, 8}, 50));
  Var k = tape.constant(random_tensor({7, 8}, 51));
  Var v = tape.constant(random_tensor({7, 8}, 52));
  std::vector<Tensor> probs;
  self_attention(q, k, v, {{0, 3}, {3, 4}}, 2, &probs);
  REQUIRE(probs.size() == 4);
  for (const auto& p : probs) {
    const std::size_t len = p.dim(0);
    for (std::size_t r = 0; r < len; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < len; ++c) s += p[r * len + c];
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK(gradient_error(
            [](Tape&, const std::vector<Var>& x) {
              return project(self_attention(x[0], x[1], x[2], {{0, 3}, {3, 4}}, 2), 53);
            },
            {random_tensor({7, 8}, 54), random_tensor({7, 8}, 55), random_tensor({7, 8}, 56)}) < 1e-6);
}

TEST_CASE("backward contracts") {
  Tensor w = random_tensor({3, 2}, 60);
  Tensor unused = random_tensor({4}, 61);
  Tape tape;
  Var wv = tape.param("w", w);
  tape.param("unused", unused);
  auto g = tape.backward(sum(wv));
  for (double x : g.at("w").data()) CHECK(x == 1.0);
  for (double x : g.at("unused").data()) CHECK(x == 0.0);

  Tape t2;
  Var w2 = t2.param("w", w);
  auto g2 = t2.backward(scale(sum(gelu(w2)), 0.0));
  for (double x : g2.at("w").data()) CHECK(x == 0.0);

  Tape t3;
  Var w3 = t3.param("w", w);
  CHECK_THROWS(t3.backward(w3));
}

TEST_CASE("frozen parameters receive no gradient") {
  Tensor w = random_tensor({3}, 62), f = random_tensor({3}, 63);
  Tape tape;
  Var a = tape.param("w", w);
  Var b = tape.param("f", f, false);
  auto g = tape.backward(sum(mul(a, b)));
  CHECK(g.count("f") == 0);
  CHECK(g.at("w").max_abs() > 0);
}

TEST_CASE("weight file round trip and errors") {
  NamedTensors t;
  t["a.weight"] = random_tensor({3, 4}, 70);
  t["b"] = random_complex({2, 2}, 71);
  Tensor f = random_tensor({5}, 72);
  f.set_dtype_tag(DType::kReal32);
  for (double& v : f.data()) v = static_cast<float>(v);
  t["c32"] = f;
  const auto bytes = encode_weights(t);
  CHECK(bytes.substr(0, 4) == "UPSW");
  auto back = decode_weights(bytes);
  REQUIRE(back.size() == 3);
  for (const auto& [k, v] : t) CHECK(back.at(k) == v);
  CHECK_THROWS_AS(decode_weights(bytes.substr(0, bytes.size() - 3)), FormatError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_weights(bad), FormatError);
  std::string badv = bytes;
  badv[4] = 9;
  CHECK_THROWS_AS(decode_weights(badv), FormatError);
  const auto path = std::filesystem::temp_directory_path() / "unipde_weights_test.upsw";
  write_weights(path, t);
  CHECK(read_weights(path).at("a.weight") == t.at("a.weight"));
  std::filesystem::remove(path);
}

TEST_CASE("library gradient checker agrees with tape on a composed function") {
  Tensor x = random_tensor({3, 4}, 80), w = random_tensor({4, 2}, 81);
  auto loss_of = [&](std::map<std::string, Tensor>* grads) {
    Tape tape;
    Var xv = tape.param("x", x), wv = tape.param("w", w);
    Var l = sum(gelu(matmul(xv, wv)));
    if (grads) *grads = tape.backward(l);
    return l.value()[0];
  };
  std::map<std::string, Tensor> g;
  loss_of(&g);
  auto res = finite_difference_check([&] { return loss_of(nullptr); }, {{"x", &x}, {"w", &w}}, g);
  for (const auto& e : res) CHECK(e.rel_error < 1e-7);
}

TEST_CASE("deterministic ops under fixed inputs") {
  auto run = [] {
    Tape tape;
    Var x = tape.constant(random_tensor({2, 3, 8, 8}, 90));
    Var w = tape.constant(random_complex({3, 2, 4, 2}, 91));
    return irfft2_trunc(spectral_mix(rfft2_trunc(x, 2), w), 8).value();
  };
  CHECK(run() == run());
}
