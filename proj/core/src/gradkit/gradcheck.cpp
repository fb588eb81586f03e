// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace unipde::gk {

std::vector<GradCheckEntry> finite_difference_check(const std::function<double()>& loss,
                                                    const std::map<std::string, Tensor*>& params,
                                                    const std::map<std::string, Tensor>& analytic, double h,
                                                    std::size_t stride, double abs_floor) {
  std::vector<GradCheckEntry> out;
  stride = std::max<std::size_t>(stride, 1);
  for (const auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw std::invalid_argument("no analytic gradient for " + name);
    const Tensor& ga = it->second;
    if (ga.data().size() != tensor->data().size()) throw std::invalid_argument("gradient shape mismatch for " + name);
    GradCheckEntry e;
    e.name = name;
    double diff2 = 0.0, an2 = 0.0, nu2 = 0.0;
    auto d = tensor->data();
    for (std::size_t i = 0; i < d.size(); i += stride) {
      const double orig = d[i];
      d[i] = orig + h;
      const double fp = loss();
      d[i] = orig - h;
      const double fm = loss();
      d[i] = orig;
      const double num = (fp - fm) / (2.0 * h);
      const double an = ga.data()[i];
      diff2 += (an - num) * (an - num);
      an2 += an * an;
      nu2 += num * num;
      e.max_abs_error = std::max(e.max_abs_error, std::abs(an - num));
      ++e.checked;
    }
    const double denom = std::max({std::sqrt(an2), std::sqrt(nu2), abs_floor});
    e.rel_error = denom > 1e-300 ? std::sqrt(diff2) / denom : 0.0;
    out.push_back(e);
  }
  return out;
}

}  // namespace unipde::gk
