// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "unipde/gradkit/tensor.hpp"

namespace unipde::gk {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Append-only reverse-mode tape. A tape is built for one forward pass and
/// discarded afterwards. Nodes only reference earlier nodes, so the graph is
/// acyclic by construction and backward is a single reverse sweep.
class Tape {
 public:
  /// Called during backward with the gradient of this node's output. The
  /// closure pulls input gradients through grad_sink().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Non-differentiable input. The tensor is copied onto the tape.
  Var constant(Tensor value);

  /// Named parameter leaf referencing caller-owned storage. The tensor must
  /// outlive the tape. Registering the same name twice returns the first node.
  Var param(const std::string& name, const Tensor& value, bool trainable = true);

  /// Records an op output. requires_grad is inferred from the inputs.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const;
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }

  /// Gradient buffer for node id, zero-initialised on first use. Returns
  /// nullptr for nodes that do not require a gradient.
  Tensor* grad_sink(int id);

  /// Reverse sweep from a scalar loss. Returns the gradient of every
  /// trainable parameter registered on this tape; parameters the loss does
  /// not depend on receive zeros. Throws if the loss is not a real scalar.
  std::map<std::string, Tensor> backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_name;
    Tensor grad;
    bool has_grad = false;

    const Tensor& value() const { return external ? *external : owned; }
  };

  std::deque<Node> nodes_;
  std::map<std::string, int> params_;
};

}  // namespace unipde::gk
