// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "unipde/gradkit/tensor.hpp"

namespace unipde::gk {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double rel_error = 0.0;   // ||analytic - numeric|| / max(||analytic||, ||numeric||, abs_floor)
  double max_abs_error = 0.0;
};

/// Central finite differences of loss() with respect to every stored value
/// (real and imaginary parts separately for complex tensors) of each tensor
/// in params, compared against the analytic gradients. loss() must read the
/// tensors through the same pointers. When stride > 1 only every stride-th
/// entry is perturbed. abs_floor bounds the denominator from below, for
/// tensors whose gradient vanishes analytically.
std::vector<GradCheckEntry> finite_difference_check(const std::function<double()>& loss,
                                                    const std::map<std::string, Tensor*>& params,
                                                    const std::map<std::string, Tensor>& analytic, double h = 1e-5,
                                                    std::size_t stride = 1, double abs_floor = 0.0);

}  // namespace unipde::gk
