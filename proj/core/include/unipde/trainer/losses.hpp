// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "unipde/gradkit/tape.hpp"
#include "unipde/gradkit/tensor.hpp"
#include "unipde/upsnet/model.hpp"

namespace unipde::train {

/// Targets with a masked norm below this are skipped.
inline constexpr double kNormEps = 1e-12;
inline constexpr double kBandwidthFloor = 1e-6;

/// ||m (p - t)|| / ||m t|| for every sample of a [B, ...] batch. Skipped
/// samples (zero-norm target) get NaN.
std::vector<double> per_sample_nrmse(const gk::Tensor& pred, const gk::Tensor& target, const gk::Tensor& mask);

/// Masked per-sample nRMSE, averaged within each group and then over the
/// groups present. An empty group vector puts every sample in one group.
/// Throws NumericalError when every sample is skipped.
gk::Var nrmse_loss(gk::Var pred, const gk::Tensor& target, const gk::Tensor& mask,
                   const std::vector<std::size_t>& group = {});

/// Median Euclidean distance over distinct pairs of the rows of a and b
/// taken together, floored at kBandwidthFloor.
double median_bandwidth(const gk::Tensor& a, const gk::Tensor& b);

/// Biased (V-statistic) squared MMD between the row sets a [na, e] and
/// b [nb, e] with kernel exp(-|x - y|^2 / (2 sigma^2)). sigma is a constant.
gk::Var mmd_loss(gk::Var a, gk::Var b, double sigma);

/// Non-empty lines of a text file.
std::vector<std::string> read_corpus(const std::filesystem::path& path);

/// Deterministic plain-English sentences built from small word lists, used
/// as the reference text when no corpus file is configured.
std::vector<std::string> synthetic_corpus(std::size_t lines, std::uint64_t seed);

/// One mean-pooled metadata-table embedding per non-empty line: [lines, e].
gk::Tensor reference_features(const std::vector<std::string>& lines, const net::Model& model);

}  // namespace unipde::train
