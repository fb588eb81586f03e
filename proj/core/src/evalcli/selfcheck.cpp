// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/evalcli/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "unipde/gradkit/gradcheck.hpp"
#include "unipde/gradkit/ops.hpp"
#include "unipde/gradkit/tape.hpp"
#include "unipde/trainer/losses.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::eval {

using gk::Tape;
using gk::Tensor;
using gk::Var;

namespace {

constexpr double kStep = 1e-6;

Tensor random_real(const gk::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = d(rng);
  return t;
}

Tensor random_cplx(const gk::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(2 * gk::shape_numel(shape));
  for (double& x : v) x = d(rng);
  return Tensor::complex_from(shape, std::move(v));
}

// Scalar with a generic gradient: <x, w> for a fixed random w.
Var project(Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Tensor& v = x.value();
  if (v.is_complex()) return gk::sum(gk::real(gk::cmul(x, x.tape->constant(random_cplx(v.shape(), rng)))));
  return gk::sum(gk::mul_const(x, random_real(v.shape(), rng)));
}

using Builder = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

GradientCheck check(const std::string& name, std::map<std::string, Tensor>& tensors, const Builder& build,
                    std::size_t samples, bool register_params = true) {
  auto run = [&](std::map<std::string, Tensor>* grads) {
    Tape tape;
    std::map<std::string, Var> vars;
    if (register_params) {
      for (auto& [k, t] : tensors) vars[k] = tape.param(k, t);
    }
    Var loss = build(tape, vars);
    if (grads) *grads = tape.backward(loss);
    return loss.value()[0];
  };
  std::map<std::string, Tensor> analytic;
  run(&analytic);
  double largest = 0.0;
  for (const auto& [k, g] : analytic) largest = std::max(largest, g.norm2());
  GradientCheck out;
  out.name = name;
  for (auto& [k, t] : tensors) {
    auto it = analytic.find(k);
    if (it == analytic.end()) {
      analytic[k] = t.is_complex() ? Tensor::complex_from(t.shape(), std::vector<double>(t.numel() * 2, 0.0))
                                   : Tensor(t.shape());
    }
    const std::size_t values = t.data().size();
    const std::size_t stride = std::max<std::size_t>(1, values / std::max<std::size_t>(samples, 1));
    const auto entries = gk::finite_difference_check([&] { return run(nullptr); }, {{k, &t}}, {{k, analytic.at(k)}},
                                                     kStep, stride, 1e-3 * largest);
    for (const auto& e : entries) {
      out.checked += e.checked;
      if (e.rel_error >= out.rel_error) {
        out.rel_error = e.rel_error;
        out.worst_tensor = k;
      }
    }
  }
  return out;
}

GradientCheck primitive(const std::string& name, std::vector<Tensor> inputs,
                        const std::function<Var(const std::vector<Var>&)>& op, std::uint64_t seed) {
  std::map<std::string, Tensor> tensors;
  for (std::size_t i = 0; i < inputs.size(); ++i) tensors["in" + std::to_string(i)] = std::move(inputs[i]);
  return check(name, tensors,
               [&](Tape&, const std::map<std::string, Var>& v) {
                 std::vector<Var> args;
                 for (std::size_t i = 0; i < v.size(); ++i) args.push_back(v.at("in" + std::to_string(i)));
                 return project(op(args), seed);
               },
               1u << 20);
}

}  // namespace

std::vector<GradientCheck> gradient_suite(std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto R = [&](const gk::Shape& s) { return random_real(s, rng); };
  auto C = [&](const gk::Shape& s) { return random_cplx(s, rng); };
  std::vector<GradientCheck> out;
  using V = std::vector<Var>;
  const std::uint64_t p = seed + 1000;
  out.push_back(primitive("add", {R({3, 4}), R({3, 4})}, [](const V& v) { return gk::add(v[0], v[1]); }, p));
  out.push_back(primitive("sub", {R({3, 4}), R({3, 4})}, [](const V& v) { return gk::sub(v[0], v[1]); }, p));
  out.push_back(primitive("mul", {R({3, 4}), R({3, 4})}, [](const V& v) { return gk::mul(v[0], v[1]); }, p));
  out.push_back(primitive("scale", {R({6})}, [](const V& v) { return gk::scale(v[0], -2.5); }, p));
  out.push_back(primitive("mul_const", {R({2, 3})}, [](const V& v) {
    return gk::mul_const(v[0], Tensor::from({2, 3}, {1, 0, -2, 0.5, 3, 0}));
  }, p));
  out.push_back(primitive("matmul", {R({3, 4}), R({4, 2})}, [](const V& v) { return gk::matmul(v[0], v[1]); }, p));
  out.push_back(primitive("transpose", {R({2, 5})}, [](const V& v) { return gk::transpose(v[0]); }, p));
  out.push_back(primitive("linear", {R({4, 3}), R({3, 5}), R({5})},
                          [](const V& v) { return gk::linear(v[0], v[1], v[2]); }, p));
  out.push_back(primitive("gelu", {R({17})}, [](const V& v) { return gk::gelu(gk::scale(v[0], 3.0)); }, p));
  out.push_back(primitive("softmax", {R({3, 5})}, [](const V& v) { return gk::softmax(v[0], 1); }, p));
  out.push_back(primitive("layernorm", {R({3, 5})}, [](const V& v) { return gk::layernorm(v[0], 1); }, p));
  out.push_back(primitive("affine", {R({3, 5}), R({5}), R({5})},
                          [](const V& v) { return gk::affine(v[0], v[1], v[2]); }, p));
  out.push_back(primitive("mean", {R({4, 3, 2})}, [](const V& v) { return gk::mean(v[0], 1); }, p));
  out.push_back(primitive("sum", {R({4, 3})}, [](const V& v) { return gk::scale(gk::sum(v[0]), 0.7); }, p));
  out.push_back(primitive("reshape", {R({4, 3, 2})}, [](const V& v) { return gk::reshape(v[0], {6, 4}); }, p));
  out.push_back(primitive("concat", {R({2, 3}), R({4, 3})}, [](const V& v) { return gk::concat({v[0], v[1]}, 0); }, p));
  out.push_back(primitive("slice", {R({2, 4, 3})}, [](const V& v) { return gk::slice(v[0], 1, 1, 3); }, p));
  out.push_back(primitive("gather_rows", {R({3, 4})}, [](const V& v) { return gk::gather_rows(v[0], {2, 0, 2, 1}); }, p));
  out.push_back(primitive("cmul", {C({3, 2}), C({3, 2})}, [](const V& v) { return gk::cmul(v[0], v[1]); }, p));
  out.push_back(primitive("fft2", {R({2, 4, 4})}, [](const V& v) { return gk::fft2(v[0]); }, p));
  out.push_back(primitive("ifft2", {C({1, 4, 4})}, [](const V& v) { return gk::ifft2(v[0]); }, p));
  out.push_back(primitive("real", {C({3, 2})}, [](const V& v) { return gk::real(v[0]); }, p));
  out.push_back(primitive("rfft2_trunc", {R({2, 8, 8})}, [](const V& v) { return gk::rfft2_trunc(v[0], 3); }, p));
  out.push_back(primitive("irfft2_trunc", {C({2, 6, 3})}, [](const V& v) { return gk::irfft2_trunc(v[0], 8); }, p));
  out.push_back(primitive("spectral_mix", {C({2, 3, 4, 2}), C({3, 2, 4, 2})},
                          [](const V& v) { return gk::spectral_mix(v[0], v[1]); }, p));
  out.push_back(primitive("channel_mix", {R({2, 3, 5}), R({4, 3}), R({4})},
                          [](const V& v) { return gk::channel_mix(v[0], v[1], v[2]); }, p));
  out.push_back(primitive("self_attention", {R({7, 8}), R({7, 8}), R({7, 8})},
                          [](const V& v) { return gk::self_attention(v[0], v[1], v[2], {{0, 3}, {3, 4}}, 2); }, p));
  out.push_back(primitive("segment_mean", {R({5, 3})},
                          [](const V& v) { return gk::segment_mean(v[0], {{0, 2}, {2, 3}}); }, p));
  out.push_back(primitive("spectral_conv2d", {R({2, 3, 8, 8}), C({3, 2, 6, 3})},
                          [](const V& v) { return net::spectral_conv2d(v[0], v[1], 3); }, p));
  {
    const Tensor target = R({3, 2, 4, 4});
    Tensor mask({3, 2, 4, 4});
    for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = (i / 16) % 2 == 0 ? 1.0 : 0.0;
    out.push_back(primitive("nrmse_loss", {R({3, 2, 4, 4})},
                            [&](const V& v) { return train::nrmse_loss(v[0], target, mask, {0, 1, 0}); }, p));
  }
  out.push_back(primitive("mmd_loss", {R({4, 3}), R({5, 3})},
                          [](const V& v) { return train::mmd_loss(v[0], v[1], 0.8); }, p));

  // Toy model under the training objective.
  net::ModelConfig c;
  c.n = 16;
  c.channels = 4;
  c.embed = 32;
  c.fno_depth = 2;
  c.body_depth = 2;
  c.modes = 4;
  c.heads = 4;
  c.max_meta_len = 32;
  net::Model model(c, seed + 7);
  std::uniform_real_distribution<double> gam(0.5, 1.5);
  for (auto& [name, t] : model.params()) {
    if (name.find("gamma") != std::string::npos) {
      for (double& v : t.data()) v = gam(rng);
    }
  }
  const Tensor inputs = R({2, c.input_channels(), c.n, c.n});
  const Tensor targets = R({2, c.quantities, c.n, c.n});
  const Tensor mask = Tensor::full({2, c.quantities, c.n, c.n}, 1.0);
  const Tensor reference = R({3, c.embed});
  const std::vector<std::string> meta{"burgers nu=0.001", "advection beta=0.4"};
  std::map<std::string, Tensor>& params = model.params();
  out.push_back(check(
      "toy_model", params,
      [&](Tape& tape, const std::map<std::string, Var>&) {
        net::ParamBinder b(tape, params);
        const net::ForwardResult r = model.forward(b, inputs, meta);
        Var task = train::nrmse_loss(r.prediction, targets, mask);
        Var align = train::mmd_loss(r.pooled_mix, tape.constant(reference), 2.0);
        return gk::add(task, align);
      },
      samples, false));
  return out;
}

}  // namespace unipde::eval
