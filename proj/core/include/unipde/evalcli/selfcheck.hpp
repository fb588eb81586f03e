// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace unipde::eval {

struct GradientCheck {
  std::string name;
  double rel_error = 0.0;
  std::size_t checked = 0;   // perturbed entries
  std::string worst_tensor;
};

/// Central-difference checks of every differentiable primitive on small
/// random inputs, of both training losses, and of a toy model
/// (n=16, l=4, e=32, two FNO blocks, two body layers) under the combined
/// task plus alignment loss. Large tensors are checked on about samples
/// evenly strided entries.
std::vector<GradientCheck> gradient_suite(std::size_t samples = 8, std::uint64_t seed = 0);

}  // namespace unipde::eval
