// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/trainer/losses.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>

#include "unipde/common.hpp"

namespace unipde::train {

using gk::Tensor;
using gk::Var;

namespace {

void check_batch(const Tensor& pred, const Tensor& target, const Tensor& mask, const char* op) {
  if (pred.shape() != target.shape() || pred.shape() != mask.shape() || pred.rank() < 1) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + gk::shape_str(pred.shape()) + " / " +
                                gk::shape_str(target.shape()) + " / " + gk::shape_str(mask.shape()));
  }
}

double sq_dist(const double* a, const double* b, std::size_t e) {
  double s = 0.0;
  for (std::size_t k = 0; k < e; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s;
}

}  // namespace

std::vector<double> per_sample_nrmse(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  check_batch(pred, target, mask, "nrmse");
  const std::size_t b = pred.dim(0), per = pred.numel() / std::max<std::size_t>(b, 1);
  std::vector<double> out(b);
  for (std::size_t s = 0; s < b; ++s) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      const double d = mask[i] * (pred[i] - target[i]);
      const double t = mask[i] * target[i];
      num += d * d;
      den += t * t;
    }
    out[s] = std::sqrt(den) < kNormEps ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(num) / std::sqrt(den);
  }
  return out;
}

Var nrmse_loss(Var pred, const Tensor& target, const Tensor& mask, const std::vector<std::size_t>& group) {
  const Tensor& pv = pred.value();
  check_batch(pv, target, mask, "nrmse_loss");
  const std::size_t b = pv.dim(0), per = pv.numel() / b;
  if (!group.empty() && group.size() != b) throw std::invalid_argument("nrmse_loss: group size mismatch");

  std::vector<double> num(b, 0.0), den(b, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      const double d = mask[i] * (pv[i] - target[i]);
      const double t = mask[i] * target[i];
      num[s] += d * d;
      den[s] += t * t;
    }
    num[s] = std::sqrt(num[s]);
    den[s] = std::sqrt(den[s]);
  }
  // weight[s] = d loss / d (sample ratio): 1 / (groups * group size).
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t s = 0; s < b; ++s) {
    if (den[s] < kNormEps) {
      log_warn("nrmse_loss: sample " + std::to_string(s) + " has a zero-norm target, skipped");
      continue;
    }
    ++counts[group.empty() ? 0 : group[s]];
  }
  if (counts.empty()) throw NumericalError("nrmse_loss: every target in the batch has zero norm");
  std::vector<double> weight(b, 0.0);
  double loss = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    if (den[s] < kNormEps) continue;
    weight[s] = 1.0 / (static_cast<double>(counts.size()) * static_cast<double>(counts[group.empty() ? 0 : group[s]]));
    loss += weight[s] * num[s] / den[s];
  }
  auto keep = std::make_shared<std::vector<double>>();
  keep->reserve(3 * b);
  keep->insert(keep->end(), num.begin(), num.end());
  keep->insert(keep->end(), den.begin(), den.end());
  keep->insert(keep->end(), weight.begin(), weight.end());
  const int ip = pred.id;
  return pred.tape->record(Tensor::scalar(loss), {ip}, [ip, keep, target, mask, b, per](gk::Tape& t, const Tensor& g) {
    Tensor* gp = t.grad_sink(ip);
    if (!gp) return;
    const Tensor& p = t.value(ip);
    const double* nu = keep->data();
    const double* de = nu + b;
    const double* w = de + b;
    for (std::size_t s = 0; s < b; ++s) {
      // d/dp ||d|| / ||t|| = m d / (||d|| ||t||); zero at d = 0.
      if (w[s] == 0.0 || nu[s] == 0.0) continue;
      const double c = g[0] * w[s] / (nu[s] * de[s]);
      for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
        (*gp)[i] += c * mask[i] * mask[i] * (p[i] - target[i]);
      }
    }
  });
}

double median_bandwidth(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw std::invalid_argument("median_bandwidth: expects [na, e] and [nb, e]");
  }
  const std::size_t e = a.dim(1), na = a.dim(0), n = na + b.dim(0);
  auto row = [&](std::size_t i) { return i < na ? a.ptr() + i * e : b.ptr() + (i - na) * e; };
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(sq_dist(row(i), row(j), e)));
  }
  if (d.empty()) return kBandwidthFloor;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + mid, d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + mid));
  return std::max(med, kBandwidthFloor);
}

Var mmd_loss(Var a, Var b, double sigma) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(1)) {
    throw std::invalid_argument("mmd_loss: expects [na, e] and [nb, e], got " + gk::shape_str(av.shape()) + " / " +
                                gk::shape_str(bv.shape()));
  }
  const std::size_t na = av.dim(0), nb = bv.dim(0), e = av.dim(1);
  if (na < 2 || nb < 2) throw std::invalid_argument("mmd_loss: each set needs at least two vectors");
  sigma = std::max(sigma, kBandwidthFloor);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto kern = [&](const double* x, const double* y) { return std::exp(-sq_dist(x, y, e) * inv); };
  double aa = 0.0, ab = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < na; ++j) aa += kern(av.ptr() + i * e, av.ptr() + j * e);
    for (std::size_t j = 0; j < nb; ++j) ab += kern(av.ptr() + i * e, bv.ptr() + j * e);
  }
  for (std::size_t i = 0; i < nb; ++i) {
    for (std::size_t j = 0; j < nb; ++j) bb += kern(bv.ptr() + i * e, bv.ptr() + j * e);
  }
  const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
  const double value = aa / (fa * fa) - 2.0 * ab / (fa * fb) + bb / (fb * fb);
  const int ia = a.id, ib = b.id;
  return a.tape->record(Tensor::scalar(value), {ia, ib}, [ia, ib, na, nb, e, inv, fa, fb](gk::Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    // d k(u, v) / du = -2 inv k (u - v)
    auto pull = [&](Tensor* gs, const Tensor& self, std::size_t ns, double fs, const Tensor& other, std::size_t no,
                    double fo) {
      if (!gs) return;
      for (std::size_t i = 0; i < ns; ++i) {
        const double* u = self.ptr() + i * e;
        double* gi = gs->ptr() + i * e;
        for (std::size_t j = 0; j < ns; ++j) {
          const double* v = self.ptr() + j * e;
          const double c = g[0] * (2.0 / (fs * fs)) * (-2.0 * inv) * std::exp(-sq_dist(u, v, e) * inv);
          for (std::size_t k = 0; k < e; ++k) gi[k] += c * (u[k] - v[k]);
        }
        for (std::size_t j = 0; j < no; ++j) {
          const double* v = other.ptr() + j * e;
          const double c = g[0] * (-2.0 / (fs * fo)) * (-2.0 * inv) * std::exp(-sq_dist(u, v, e) * inv);
          for (std::size_t k = 0; k < e; ++k) gi[k] += c * (u[k] - v[k]);
        }
      }
    };
    pull(t.grad_sink(ia), x, na, fa, y, nb, fb);
    pull(t.grad_sink(ib), y, nb, fb, x, na, fa);
  });
}

std::vector<std::string> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open reference corpus '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("reference corpus '" + path.string() + "' has no non-empty lines");
  return lines;
}

std::vector<std::string> synthetic_corpus(std::size_t lines, std::uint64_t seed) {
  static const std::vector<std::string> subjects = {
      "the river", "a cold front", "the old bridge", "heat in the rod", "the tide", "a column of smoke",
      "the crowd", "salt in the soil", "the market", "a wave on the lake", "the signal", "the forest edge",
      "warm air", "the population", "a drop of ink", "the glacier", "traffic on the road", "the reaction front"};
  static const std::vector<std::string> verbs = {
      "moves", "spreads", "settles", "slows", "drifts", "grows", "fades", "rises", "bends", "travels",
      "diffuses", "steepens", "turns", "collects", "weakens", "returns"};
  static const std::vector<std::string> places = {
      "across the valley", "toward the coast", "along the channel", "through the porous rock",
      "over the plain", "into the basin", "past the harbor", "under the surface", "around the island",
      "beyond the ridge", "within the tank", "near the boundary"};
  static const std::vector<std::string> times = {
      "by morning", "after the storm", "within an hour", "over many years", "each spring", "at night",
      "before the rain", "once the wind drops", "during the long summer", "as the day ends"};
  static const std::vector<std::string> tails = {
      "and nobody notices", "as it always has", "while the town sleeps", "at a steady pace",
      "faster than expected", "in a narrow band", "without a sound", "until it meets the wall",
      "leaving a trace behind", "and then it stops"};
  std::mt19937_64 rng(seed);
  auto pick = [&rng](const std::vector<std::string>& v) -> const std::string& { return v[rng() % v.size()]; };
  std::vector<std::string> out;
  out.reserve(lines);
  for (std::size_t i = 0; i < lines; ++i) {
    std::string s = pick(subjects) + " " + pick(verbs) + " " + pick(places);
    if (rng() % 2) s += " " + pick(times);
    if (rng() % 3 == 0) s += " " + pick(tails);
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    out.push_back(s + ".");
  }
  return out;
}

Tensor reference_features(const std::vector<std::string>& lines, const net::Model& model) {
  const std::size_t e = model.config().embed;
  std::vector<Tensor> rows;
  for (const auto& l : lines) {
    if (l.empty()) continue;
    rows.push_back(model.pooled_text_embedding(l));
  }
  if (rows.empty()) throw ConfigError("reference_features: corpus has no non-empty lines");
  Tensor out({rows.size(), e});
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy_n(rows[i].ptr(), e, out.ptr() + i * e);
  return out;
}

}  // namespace unipde::train
