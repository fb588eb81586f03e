// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/unirep/unirep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "unipde/common.hpp"
#include "unipde/gradkit/fft.hpp"
#include "unipde/gradkit/ops.hpp"

namespace unipde::rep {
namespace {

using json = nlohmann::json;
using gk::cplx;

std::size_t source_points(const pde::TrajectorySet& s) { return s.dim == 1 ? s.n : s.n * s.n; }

// Places one source channel (n or n*n values) onto an n x n plane.
template <typename Src>
void place(const Src* src, int dim, std::size_t n, double* plane) {
  const std::size_t count = dim == 1 ? n : n * n;
  for (std::size_t i = 0; i < count; ++i) plane[i] = static_cast<double>(src[i]);
}

// Resamples a length-m line to length n (strided or spectral zero padding).
void resample_line(const double* in, std::size_t m, std::size_t stride_in, std::size_t n, double* out,
                   std::size_t stride_out) {
  if (m == n) {
    for (std::size_t j = 0; j < n; ++j) out[j * stride_out] = in[j * stride_in];
    return;
  }
  if (m > n) {
    const std::size_t f = m / n;
    for (std::size_t j = 0; j < n; ++j) out[j * stride_out] = in[j * f * stride_in];
    return;
  }
  std::vector<cplx> a(m), b(n, cplx(0.0, 0.0));
  for (std::size_t j = 0; j < m; ++j) a[j] = in[j * stride_in];
  gk::fft_inplace(a, false);
  const std::size_t h = m / 2;
  for (std::size_t k = 0; k < h; ++k) b[k] = a[k];
  for (std::size_t k = 1; k < h; ++k) b[n - k] = a[m - k];
  // Split the Nyquist coefficient evenly between +m/2 and -m/2.
  b[h] += 0.5 * a[h];
  b[n - h] += 0.5 * a[h];
  gk::fft_inplace(b, true);
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < n; ++j) out[j * stride_out] = b[j].real() * inv;
}

}  // namespace

const std::array<std::string, kNumQuantities>& quantity_names() {
  static const std::array<std::string, kNumQuantities> names = {"velocity_x", "velocity_y", "pressure", "density"};
  return names;
}

std::size_t quantity_index(const std::string& name) {
  const auto& names = quantity_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  throw ConfigError("unknown quantity '" + name + "' (expected velocity_x, velocity_y, pressure or density)");
}

QuantityMap default_quantity_map(const pde::TrajectorySet& set) {
  QuantityMap m;
  if (set.family == pde::Family::kExternal) {
    for (const auto& c : set.channels) m[c] = c;
    return m;
  }
  for (const auto& c : set.channels) {
    if (c == "u" || c == "u1") m[c] = "velocity_x";
    else if (c == "u2") m[c] = "velocity_y";
    else if (c == "h") m[c] = "density";
    else m[c] = c;
  }
  return m;
}

std::vector<std::size_t> channel_slots(const pde::TrajectorySet& set, const QuantityMap& map) {
  std::vector<std::size_t> slots;
  std::set<std::size_t> used;
  for (const auto& c : set.channels) {
    auto it = map.find(c);
    if (it == map.end()) throw ConfigError("channel '" + c + "' has no quantity mapping");
    const std::size_t q = quantity_index(it->second);
    if (!used.insert(q).second) throw ConfigError("two channels map to quantity '" + it->second + "'");
    slots.push_back(q);
  }
  return slots;
}

ChannelMask channel_mask(const std::vector<std::size_t>& slots) {
  ChannelMask m{};
  for (auto s : slots) m[s] = 1.0;
  return m;
}

std::string metadata_string(const std::string& family, const std::map<std::string, double>& coefficients) {
  std::string out = family;
  for (const auto& [k, v] : coefficients) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    out += " " + k + "=" + buf;
  }
  return out;
}

std::string metadata_string(const pde::TrajectorySet& set) {
  return metadata_string(pde::family_name(set.family), set.coefficients);
}

Unified unify(const pde::TrajectorySet& set, const QuantityMap& map) {
  const auto slots = channel_slots(set, map);
  const std::size_t n = set.n, plane = n * n, np = source_points(set);
  Unified u;
  u.mask = channel_mask(slots);
  u.data = gk::Tensor({set.num_traj, set.timesteps, kNumQuantities, n, n});
  for (std::size_t i = 0; i < set.num_traj; ++i) {
    for (std::size_t t = 0; t < set.timesteps; ++t) {
      const float* src = set.frame(i, t);
      double* dst = u.data.ptr() + ((i * set.timesteps + t) * kNumQuantities) * plane;
      for (std::size_t c = 0; c < slots.size(); ++c) place(src + c * np, set.dim, n, dst + slots[c] * plane);
    }
  }
  return u;
}

std::vector<float> extract(const Unified& u, const pde::TrajectorySet& like, const QuantityMap& map) {
  const auto slots = channel_slots(like, map);
  const std::size_t n = like.n, plane = n * n, np = source_points(like);
  std::vector<float> out(like.num_traj * like.traj_size());
  for (std::size_t i = 0; i < like.num_traj; ++i) {
    for (std::size_t t = 0; t < like.timesteps; ++t) {
      const double* src = u.data.ptr() + ((i * like.timesteps + t) * kNumQuantities) * plane;
      float* dst = out.data() + i * like.traj_size() + t * like.frame_size();
      for (std::size_t c = 0; c < slots.size(); ++c) {
        for (std::size_t k = 0; k < np; ++k) dst[c * np + k] = static_cast<float>(src[slots[c] * plane + k]);
      }
    }
  }
  return out;
}

FamilyStats compute_stats(const pde::TrajectorySet& train, const QuantityMap& map) {
  const auto slots = channel_slots(train, map);
  FamilyStats st{};
  const std::size_t np = source_points(train);
  for (std::size_t c = 0; c < slots.size(); ++c) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < train.num_traj; ++i) {
      for (std::size_t t = 0; t < train.timesteps; ++t) {
        const float* p = train.frame(i, t) + c * np;
        for (std::size_t k = 0; k < np; ++k) sum += p[k];
        count += np;
      }
    }
    if (count == 0) throw ConfigError("cannot compute normalization statistics of an empty set");
    const double mean = sum / static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = 0; i < train.num_traj; ++i) {
      for (std::size_t t = 0; t < train.timesteps; ++t) {
        const float* p = train.frame(i, t) + c * np;
        for (std::size_t k = 0; k < np; ++k) var += (p[k] - mean) * (p[k] - mean);
      }
    }
    st[slots[c]] = {mean, std::max(std::sqrt(var / static_cast<double>(count)), kStdFloor)};
  }
  return st;
}

namespace {

template <typename F>
void for_active(gk::Tensor& x, const ChannelMask& mask, int dim, F&& f) {
  if (x.rank() < 3) throw std::invalid_argument("normalize: expects [..., N, n, n], got " + gk::shape_str(x.shape()));
  const std::size_t n = x.dim(x.rank() - 1);
  const std::size_t q = x.dim(x.rank() - 3);
  if (q != kNumQuantities || x.dim(x.rank() - 2) != n) {
    throw std::invalid_argument("normalize: expects [..., N, n, n], got " + gk::shape_str(x.shape()));
  }
  const std::size_t plane = n * n;
  const std::size_t count = dim == 1 ? n : plane;
  const std::size_t outer = x.numel() / (q * plane);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < q; ++c) {
      if (mask[c] == 0.0) continue;
      double* p = x.ptr() + (o * q + c) * plane;
      for (std::size_t k = 0; k < count; ++k) p[k] = f(c, p[k]);
    }
  }
}

}  // namespace

void normalize(gk::Tensor& unified, const ChannelMask& mask, const FamilyStats& stats, int dim) {
  for_active(unified, mask, dim, [&](std::size_t c, double v) { return (v - stats[c].mean) / stats[c].std; });
}

gk::Tensor denormalize(const gk::Tensor& normalized, const ChannelMask& mask, const FamilyStats& stats, int dim) {
  gk::Tensor out = normalized;
  for_active(out, mask, dim, [&](std::size_t c, double v) { return v * stats[c].std + stats[c].mean; });
  return out;
}

const FamilyStats& NormalizationTable::at(const std::string& name) const {
  auto it = table_.find(name);
  if (it == table_.end()) throw ConfigError("no normalization statistics for dataset '" + name + "'");
  return it->second;
}

std::string NormalizationTable::to_json() const {
  json j = json::object();
  for (const auto& [name, st] : table_) {
    json fam = json::object();
    for (std::size_t c = 0; c < kNumQuantities; ++c) fam[quantity_names()[c]] = {{"mean", st[c].mean}, {"std", st[c].std}};
    j[name] = fam;
  }
  return j.dump(2);
}

NormalizationTable NormalizationTable::from_json(const std::string& text) {
  NormalizationTable t;
  try {
    const json j = json::parse(text);
    for (const auto& [name, fam] : j.items()) {
      FamilyStats st{};
      for (const auto& [q, v] : fam.items()) {
        st[quantity_index(q)] = {v.at("mean").get<double>(), v.at("std").get<double>()};
      }
      t.set(name, st);
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed normalization statistics: ") + e.what());
  }
  return t;
}

void NormalizationTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << to_json() << "\n";
}

NormalizationTable NormalizationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read normalization statistics '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::vector<PairIndex> make_pairs(std::size_t num_traj, std::size_t timesteps) {
  if (timesteps < 2) throw ConfigError("teacher forcing needs at least 2 timesteps");
  std::vector<PairIndex> out;
  out.reserve(num_traj * (timesteps - 1));
  for (std::size_t i = 0; i < num_traj; ++i) {
    for (std::size_t t = 0; t + 1 < timesteps; ++t) out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(t)});
  }
  return out;
}

gk::Tensor coordinate_channels(std::size_t n, int dim) {
  gk::Tensor c({kCoordChannels, n, n});
  const double den = n > 1 ? static_cast<double>(n - 1) : 1.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      c[r * n + k] = static_cast<double>(k) / den;
      c[n * n + r * n + k] = dim == 1 ? 0.0 : static_cast<double>(r) / den;
    }
  }
  return c;
}

gk::Tensor attach_coords(const gk::Tensor& batch, int dim) {
  if (batch.rank() != 4 || batch.dim(1) != kNumQuantities || batch.dim(2) != batch.dim(3)) {
    throw std::invalid_argument("attach_coords: expects [B x N x n x n], got " + gk::shape_str(batch.shape()));
  }
  const std::size_t b = batch.dim(0), n = batch.dim(2), plane = n * n;
  const gk::Tensor coords = coordinate_channels(n, dim);
  gk::Tensor out({b, kNumQuantities + kCoordChannels, n, n});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy_n(batch.ptr() + i * kNumQuantities * plane, kNumQuantities * plane,
                out.ptr() + i * (kNumQuantities + kCoordChannels) * plane);
    std::copy_n(coords.ptr(), kCoordChannels * plane, out.ptr() + (i * (kNumQuantities + kCoordChannels) + kNumQuantities) * plane);
  }
  return out;
}

gk::Tensor resample(const gk::Tensor& field, std::size_t n, int dim) {
  if (field.rank() != 3 || field.dim(1) != field.dim(2)) {
    throw std::invalid_argument("resample: expects [C x m x m], got " + gk::shape_str(field.shape()));
  }
  const std::size_t c = field.dim(0), m = field.dim(1);
  if (!is_pow2(m) || !is_pow2(n)) throw ConfigError("resample: resolutions must be powers of two");
  if (m == n) return field;
  gk::Tensor out({c, n, n});
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* in = field.ptr() + ch * m * m;
    double* o = out.ptr() + ch * n * n;
    if (dim == 1) {
      resample_line(in, m, 1, n, o, 1);
      continue;
    }
    // Rows first into an n-wide buffer, then columns.
    std::vector<double> tmp(m * n);
    for (std::size_t r = 0; r < m; ++r) resample_line(in + r * m, m, 1, n, tmp.data() + r * n, 1);
    for (std::size_t k = 0; k < n; ++k) resample_line(tmp.data() + k, m, n, n, o + k, n);
  }
  return out;
}

gk::Tensor output_mask(const ChannelMask& mask, std::size_t n, int dim) {
  gk::Tensor m({kNumQuantities, n, n});
  const std::size_t count = dim == 1 ? n : n * n;
  for (std::size_t c = 0; c < kNumQuantities; ++c) {
    if (mask[c] == 0.0) continue;
    std::fill_n(m.ptr() + c * n * n, count, 1.0);
  }
  return m;
}

gk::Var masked_select(gk::Var grid, const gk::Tensor& mask) { return gk::mul_const(grid, mask); }

void UnifiedDataset::lift_frame(std::size_t traj, std::size_t t, double* out) const {
  const std::size_t plane = n * n, np = points();
  std::fill_n(out, kNumQuantities * plane, 0.0);
  const float* src = data.data() + (traj * timesteps + t) * frame_size();
  for (std::size_t c = 0; c < slots.size(); ++c) place(src + c * np, dim, n, out + slots[c] * plane);
}

UnifiedDataset UnifiedDataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > num_traj) {
    throw std::out_of_range("UnifiedDataset::subset: [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") outside " + std::to_string(num_traj) + " trajectories");
  }
  UnifiedDataset d = *this;
  d.num_traj = end - begin;
  const std::size_t per = timesteps * frame_size();
  d.data.assign(data.begin() + static_cast<std::ptrdiff_t>(begin * per), data.begin() + static_cast<std::ptrdiff_t>(end * per));
  return d;
}

UnifiedDataset prepare_dataset(const pde::TrajectorySet& set, const QuantityMap& map, const FamilyStats& stats) {
  UnifiedDataset d;
  d.name = metadata_string(set);
  d.family = set.family;
  d.dim = set.dim;
  d.n = set.n;
  d.timesteps = set.timesteps;
  d.num_traj = set.num_traj;
  d.slots = channel_slots(set, map);
  d.mask = channel_mask(d.slots);
  d.stats = stats;
  d.data.resize(set.data.size());
  const std::size_t np = source_points(set);
  for (std::size_t i = 0; i < set.num_traj; ++i) {
    for (std::size_t t = 0; t < set.timesteps; ++t) {
      const float* src = set.frame(i, t);
      float* dst = d.data.data() + (i * set.timesteps + t) * d.frame_size();
      for (std::size_t c = 0; c < d.slots.size(); ++c) {
        const auto& s = stats[d.slots[c]];
        for (std::size_t k = 0; k < np; ++k) {
          dst[c * np + k] = static_cast<float>((static_cast<double>(src[c * np + k]) - s.mean) / s.std);
        }
      }
    }
  }
  return d;
}

UnifiedBatch make_batch(const std::vector<const UnifiedDataset*>& sets, const std::vector<BatchItem>& items,
                        bool with_coords) {
  if (items.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::size_t n = sets.at(items.front().dataset)->n, plane = n * n;
  const std::size_t cin = kNumQuantities + (with_coords ? kCoordChannels : 0);
  const std::size_t b = items.size();
  UnifiedBatch batch;
  batch.inputs = gk::Tensor({b, cin, n, n});
  batch.targets = gk::Tensor({b, kNumQuantities, n, n});
  batch.mask = gk::Tensor({b, kNumQuantities, n, n});
  std::map<std::size_t, gk::Tensor> masks, coords;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& it = items[i];
    const UnifiedDataset& d = *sets.at(it.dataset);
    if (d.n != n) throw std::invalid_argument("make_batch: datasets differ in resolution");
    if (it.pair.traj >= d.num_traj || it.pair.t + 1 >= d.timesteps) throw std::out_of_range("make_batch: pair out of range");
    d.lift_frame(it.pair.traj, it.pair.t, batch.inputs.ptr() + i * cin * plane);
    d.lift_frame(it.pair.traj, it.pair.t + 1, batch.targets.ptr() + i * kNumQuantities * plane);
    if (!masks.count(it.dataset)) masks[it.dataset] = d.loss_mask();
    std::copy_n(masks[it.dataset].ptr(), kNumQuantities * plane, batch.mask.ptr() + i * kNumQuantities * plane);
    if (with_coords) {
      if (!coords.count(it.dataset)) coords[it.dataset] = coordinate_channels(n, d.dim);
      std::copy_n(coords[it.dataset].ptr(), kCoordChannels * plane, batch.inputs.ptr() + (i * cin + kNumQuantities) * plane);
    }
    batch.metadata.push_back(d.name);
    batch.group.push_back(it.dataset);
  }
  return batch;
}

}  // namespace unipde::rep
