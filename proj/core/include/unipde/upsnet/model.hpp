// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "unipde/gradkit/ops.hpp"
#include "unipde/gradkit/serialize.hpp"
#include "unipde/gradkit/tape.hpp"
#include "unipde/upsnet/tokenizer.hpp"

namespace unipde::net {

struct ModelConfig {
  std::size_t channels = 32;     // FNO width, also the number of PDE tokens
  std::size_t modes = 12;        // retained Fourier modes per axis
  std::size_t fno_depth = 3;
  std::size_t embed = 128;       // token width
  std::size_t body_depth = 4;
  std::size_t heads = 4;
  std::size_t n = 64;
  std::size_t quantities = 4;
  bool use_coords = true;        // feed the two coordinate channels to the FNO
  bool use_metadata = true;
  std::size_t max_meta_len = 64;
  std::size_t vocab = kVocabSize;
  std::size_t mlp_ratio = 4;

  std::size_t input_channels() const { return quantities + (use_coords ? 2 : 0); }
  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form count of real scalars (complex weights count twice):
///   fno:   2 c_in l 2m^2 + l c_in + l, then (depth-1) (2 l^2 2m^2 + l^2 + l)
///   proj:  n^2 e + e;  meta table: V e;  embed norm: 2e
///   body:  depth (12 e^2 + 13 e) for r = 4, plus final norm 2e
///   head:  e N n^2 + N n^2
std::size_t parameter_count(const ModelConfig& cfg);

/// Tape-side view of a parameter map: registers tensors on first use and
/// decides which are trainable.
class ParamBinder {
 public:
  using Filter = std::function<bool(const std::string&)>;
  ParamBinder(gk::Tape& tape, const gk::NamedTensors& params, Filter trainable = {})
      : tape_(tape), params_(params), trainable_(std::move(trainable)) {}
  gk::Var operator()(const std::string& name);
  gk::Tape& tape() { return tape_; }

 private:
  gk::Tape& tape_;
  const gk::NamedTensors& params_;
  Filter trainable_;
};

/// Spectral convolution: x[B, c_in, n, n] -> [B, c_out, n, n] using the
/// retained half spectrum and complex weights w[c_in, c_out, 2m, m].
gk::Var spectral_conv2d(gk::Var x, gk::Var weights, std::size_t modes);
/// gelu(spectral_conv2d(x) + pointwise(x)).
gk::Var fno_block(gk::Var x, gk::Var spectral, gk::Var pointwise_w, gk::Var pointwise_b, std::size_t modes);

/// Fixed sinusoidal encoding table [len x width].
gk::Tensor positional_encoding(std::size_t len, std::size_t width);

struct ForwardResult {
  gk::Var prediction;            // [B, N, n, n]
  gk::Var pooled_mix;            // [B, e] mean of the assembled sequence
  gk::Var mix;                   // packed assembled sequence [rows, e]
  std::vector<gk::Segment> segments;
};

class Model {
 public:
  Model() = default;
  explicit Model(const ModelConfig& cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }
  gk::NamedTensors& params() { return params_; }
  const gk::NamedTensors& params() const { return params_; }

  /// Deterministic initialisation from seed.
  void init(std::uint64_t seed);

  /// FNO stack and projection: inputs[B, C, n, n] -> packed [B*l, e].
  gk::Var embed_pde(ParamBinder& p, gk::Var inputs) const;
  /// Token embedding of one metadata string: [m, e].
  gk::Var embed_meta(ParamBinder& p, const std::string& metadata) const;
  /// Concatenates metadata tokens (if enabled) before the PDE tokens of each
  /// sample, adds positional encoding and applies layernorm per token.
  gk::Var assemble(ParamBinder& p, gk::Var h_pde, const std::vector<std::string>& metadata,
                   std::vector<gk::Segment>* segments) const;
  /// Pre-norm transformer encoder with full attention inside each segment.
  gk::Var body_forward(ParamBinder& p, gk::Var mix, const std::vector<gk::Segment>& segments,
                       std::vector<gk::Tensor>* attention = nullptr) const;
  /// Segment mean, linear head, reshape to [B, N, n, n].
  gk::Var predict(ParamBinder& p, gk::Var hidden, const std::vector<gk::Segment>& segments) const;

  ForwardResult forward(ParamBinder& p, const gk::Tensor& inputs, const std::vector<std::string>& metadata) const;
  /// Forward without gradients.
  gk::Tensor predict_tensor(const gk::Tensor& inputs, const std::vector<std::string>& metadata) const;

  /// Mean-pooled token embeddings of a text line: [e]. Empty text is an error.
  gk::Tensor pooled_text_embedding(const std::string& text) const;

  void save(const std::filesystem::path& weights_path) const;
  /// Replaces all parameters. Throws FormatError on any missing or
  /// mis-shaped entry; the model is unchanged in that case.
  void load(const std::filesystem::path& weights_path);
  /// As load, from tensors in memory. Entries that are not parameters are ignored.
  void assign(const gk::NamedTensors& tensors);
  /// Replaces only the transformer body parameters ("body.*").
  void load_body_weights(const std::filesystem::path& weights_path);

  static bool is_body_param(const std::string& name) { return name.rfind("body.", 0) == 0; }

 private:
  ModelConfig cfg_;
  gk::NamedTensors params_;
};

}  // namespace unipde::net
