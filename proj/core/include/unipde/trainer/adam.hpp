// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "unipde/gradkit/serialize.hpp"

namespace unipde::train {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // decoupled
  double grad_clip = -1.0;     // global L2 norm; <= 0 disables
};

/// Adam with bias correction and decoupled weight decay. Only parameters
/// present in the gradient map are touched; moments are created on first use.
class Adam {
 public:
  /// Throws NumericalError on a non-finite gradient before changing anything.
  void step(gk::NamedTensors& params, const gk::NamedTensors& grads, const AdamConfig& cfg);

  std::uint64_t steps() const { return step_; }
  const gk::NamedTensors& first_moments() const { return m_; }
  const gk::NamedTensors& second_moments() const { return v_; }

  /// Moments under "adam.m/<name>" and "adam.v/<name>".
  void export_to(gk::NamedTensors& out) const;
  /// Inverse of export_to; other entries are ignored.
  void import_from(const gk::NamedTensors& in, std::uint64_t steps);

 private:
  gk::NamedTensors m_;
  gk::NamedTensors v_;
  std::uint64_t step_ = 0;
};

}  // namespace unipde::train
