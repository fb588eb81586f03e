// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/tape.hpp"

#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace unipde::gk {
namespace {

// Tape tensors are large and short-lived. Keeping them on the heap instead of
// fresh mmaps avoids re-faulting every page on each step.
[[maybe_unused]] const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
  return true;
}();

}  // namespace

const Tensor& Var::value() const {
  if (!tape) throw std::logic_error("Var is not bound to a tape");
  return tape->value(id);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(const std::string& name, const Tensor& value, bool trainable) {
  if (auto it = params_.find(name); it != params_.end()) return {this, it->second};
  Node n;
  n.external = &value;
  n.requires_grad = trainable;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size() - 1);
  params_.emplace(name, id);
  return {this, id};
}

Var Tape::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (int in : inputs) {
    if (in < 0 || in >= static_cast<int>(nodes_.size())) throw std::logic_error("dangling tape input");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

const Tensor& Tape::value(int id) const { return nodes_.at(id).value(); }

Tensor* Tape::grad_sink(int id) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(n.value().shape(), n.value().is_complex() ? DType::kComplex : DType::kReal64);
    n.has_grad = true;
  }
  return &n.grad;
}

std::map<std::string, Tensor> Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("loss belongs to a different tape");
  const Tensor& lv = value(loss.id);
  if (lv.numel() != 1 || lv.is_complex()) {
    throw std::invalid_argument("backward needs a real scalar loss, got shape " + shape_str(lv.shape()));
  }
  if (Tensor* g = grad_sink(loss.id)) (*g)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  std::map<std::string, Tensor> grads;
  for (const auto& [name, id] : params_) {
    Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    grads.emplace(name, n.has_grad ? n.grad
                                   : Tensor(n.value().shape(), n.value().is_complex() ? DType::kComplex
                                                                                      : DType::kReal64));
  }
  return grads;
}

}  // namespace unipde::gk
