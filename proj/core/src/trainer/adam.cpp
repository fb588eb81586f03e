// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/trainer/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "unipde/common.hpp"

namespace unipde::train {

namespace {
constexpr const char* kMomentM = "adam.m/";
constexpr const char* kMomentV = "adam.v/";
}  // namespace

void Adam::step(gk::NamedTensors& params, const gk::NamedTensors& grads, const AdamConfig& cfg) {
  double norm_sq = 0.0;
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::out_of_range("adam: gradient for unknown parameter '" + name + "'");
    if (it->second.data().size() != g.data().size()) throw std::invalid_argument("adam: shape mismatch for '" + name + "'");
    for (double v : g.data()) {
      if (!std::isfinite(v)) throw NumericalError("adam: non-finite gradient in '" + name + "'");
      norm_sq += v * v;
    }
  }
  double clip = 1.0;
  if (cfg.grad_clip > 0.0) {
    const double norm = std::sqrt(norm_sq);
    if (norm > cfg.grad_clip) clip = cfg.grad_clip / norm;
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double decay = 1.0 - cfg.lr * cfg.weight_decay;
  for (const auto& [name, g] : grads) {
    auto p = params.at(name).data();
    auto [mit, fresh_m] = m_.try_emplace(name, params.at(name).shape(), params.at(name).dtype());
    auto [vit, fresh_v] = v_.try_emplace(name, params.at(name).shape(), params.at(name).dtype());
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = clip * gd[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] = decay * p[i] - cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

void Adam::export_to(gk::NamedTensors& out) const {
  for (const auto& [name, t] : m_) out[kMomentM + name] = t;
  for (const auto& [name, t] : v_) out[kMomentV + name] = t;
}

void Adam::import_from(const gk::NamedTensors& in, std::uint64_t steps) {
  m_.clear();
  v_.clear();
  const std::string pm = kMomentM, pv = kMomentV;
  for (const auto& [name, t] : in) {
    if (name.rfind(pm, 0) == 0) m_[name.substr(pm.size())] = t;
    if (name.rfind(pv, 0) == 0) v_[name.substr(pv.size())] = t;
  }
  step_ = steps;
}

}  // namespace unipde::train
