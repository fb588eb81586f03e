// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/evalcli/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string_view>

#include "unipde/common.hpp"
#include "unipde/trainer/losses.hpp"

namespace unipde::eval {

using gk::Tensor;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_skipping_nan(const std::vector<double>& v, const std::string& what) {
  double sum = 0.0;
  std::size_t used = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    sum += x;
    ++used;
  }
  if (used == 0) throw NumericalError(what + ": every sample has a zero target norm");
  if (used < v.size()) log_warn(what + ": skipped " + std::to_string(v.size() - used) + " samples with zero target norm");
  return sum / static_cast<double>(used);
}

void check_resolutions(std::size_t m, std::size_t n) {
  if (!is_pow2(m) || !is_pow2(n) || m < n) {
    throw ConfigError("cannot evaluate a model at n=" + std::to_string(n) + " on data at m=" + std::to_string(m) +
                      "; m / n must be a power of two");
  }
}

class ChecksumGuard {
 public:
  explicit ChecksumGuard(const net::Model& m) : model_(m), before_(params_checksum(m)) {}
  void verify() const {
    if (params_checksum(model_) != before_) throw std::logic_error("evaluation modified model parameters");
  }

 private:
  const net::Model& model_;
  std::uint64_t before_;
};

}  // namespace

Predictor model_predictor(const net::Model& model) {
  return [&model](const Tensor& states, const std::vector<std::string>& metadata, int dim) {
    if (model.config().use_coords) return model.predict_tensor(rep::attach_coords(states, dim), metadata);
    return model.predict_tensor(states, metadata);
  };
}

std::uint64_t params_checksum(const net::Model& model) {
  std::string bytes;
  for (const auto& [name, t] : model.params()) {
    bytes += name;
    bytes.push_back('\0');
    bytes.append(reinterpret_cast<const char*>(t.ptr()), t.numel() * sizeof(double));
  }
  return fnv1a64(bytes);
}

std::vector<double> pair_nrmse(const Predictor& predict, const rep::UnifiedDataset& test,
                               const rep::NormalizationTable& norm, std::size_t model_n, std::size_t batch) {
  const rep::FamilyStats& stats = norm.at(test.name);
  const std::size_t m = test.n;
  check_resolutions(m, model_n);
  if (batch < 1) throw ConfigError("evaluation batch size must be >= 1");
  const std::size_t q = rep::kNumQuantities;
  const auto pairs = rep::make_pairs(test.num_traj, test.timesteps);
  const Tensor mask = test.loss_mask();
  const std::size_t hi_plane = q * m * m, lo_plane = q * model_n * model_n;
  std::vector<double> out(pairs.size(), kNaN);
  const std::size_t batches = (pairs.size() + batch - 1) / batch;
  parallel_for(batches, [&](std::size_t b) {
    const std::size_t lo = b * batch, hi = std::min(pairs.size(), lo + batch), cnt = hi - lo;
    Tensor states({cnt, q, model_n, model_n});
    Tensor targets({cnt, q, m, m});
    Tensor masks({cnt, q, m, m});
    Tensor frame({q, m, m});
    for (std::size_t i = 0; i < cnt; ++i) {
      const auto& p = pairs[lo + i];
      test.lift_frame(p.traj, p.t, frame.ptr());
      if (m == model_n) {
        std::copy_n(frame.ptr(), hi_plane, states.ptr() + i * lo_plane);
      } else {
        const Tensor coarse = rep::resample(frame, model_n, test.dim);
        std::copy_n(coarse.ptr(), lo_plane, states.ptr() + i * lo_plane);
      }
      test.lift_frame(p.traj, p.t + 1, targets.ptr() + i * hi_plane);
      std::copy_n(mask.ptr(), hi_plane, masks.ptr() + i * hi_plane);
    }
    const std::vector<std::string> meta(cnt, test.name);
    Tensor pred = predict(states, meta, test.dim);
    if (pred.shape() != states.shape()) {
      throw std::logic_error("predictor returned " + gk::shape_str(pred.shape()) + " for input " +
                             gk::shape_str(states.shape()));
    }
    if (m != model_n) {
      Tensor up({cnt, q, m, m});
      Tensor one({q, model_n, model_n});
      for (std::size_t i = 0; i < cnt; ++i) {
        std::copy_n(pred.ptr() + i * lo_plane, lo_plane, one.ptr());
        const Tensor fine = rep::resample(one, m, test.dim);
        std::copy_n(fine.ptr(), hi_plane, up.ptr() + i * hi_plane);
      }
      pred = std::move(up);
    }
    const Tensor pred_phys = rep::denormalize(pred, test.mask, stats, test.dim);
    const Tensor target_phys = rep::denormalize(targets, test.mask, stats, test.dim);
    const auto v = train::per_sample_nrmse(pred_phys, target_phys, masks);
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
  });
  return out;
}

double eval_nrmse(const Predictor& predict, const rep::UnifiedDataset& test, const rep::NormalizationTable& norm,
                  std::size_t batch) {
  return mean_skipping_nan(pair_nrmse(predict, test, norm, test.n, batch), "eval_nrmse on '" + test.name + "'");
}

double eval_nrmse(const net::Model& model, const rep::UnifiedDataset& test, const rep::NormalizationTable& norm,
                  std::size_t batch) {
  if (test.n != model.config().n) {
    throw ConfigError("test set '" + test.name + "' has n=" + std::to_string(test.n) + " but the model works at n=" +
                      std::to_string(model.config().n) + "; use eval_superres");
  }
  ChecksumGuard guard(model);
  const double v = eval_nrmse(model_predictor(model), test, norm, batch);
  guard.verify();
  return v;
}

double eval_superres(const Predictor& predict, const rep::UnifiedDataset& hires_test,
                     const rep::NormalizationTable& norm, std::size_t n, std::size_t batch) {
  check_resolutions(hires_test.n, n);
  return mean_skipping_nan(pair_nrmse(predict, hires_test, norm, n, batch),
                           "eval_superres on '" + hires_test.name + "' at m=" + std::to_string(hires_test.n));
}

double eval_superres(const net::Model& model, const rep::UnifiedDataset& hires_test,
                     const rep::NormalizationTable& norm, std::size_t batch) {
  ChecksumGuard guard(model);
  const double v = eval_superres(model_predictor(model), hires_test, norm, model.config().n, batch);
  guard.verify();
  return v;
}

RolloutResult rollout(const Predictor& predict, const Tensor& u0, const std::string& metadata,
                      const rep::ChannelMask& mask, int dim, const rep::FamilyStats& stats, std::size_t steps) {
  if (steps < 1) throw ConfigError("rollout needs steps >= 1");
  if (u0.rank() != 3 || u0.dim(1) != u0.dim(2)) {
    throw std::invalid_argument("rollout: initial state must be [N x n x n], got " + gk::shape_str(u0.shape()));
  }
  const std::size_t q = u0.dim(0), n = u0.dim(1), plane = q * n * n;
  const Tensor omask = rep::output_mask(mask, n, dim);
  if (omask.numel() != plane) throw std::invalid_argument("rollout: state does not match the quantity set");
  Tensor state({1, q, n, n});
  for (std::size_t i = 0; i < plane; ++i) state[i] = u0[i] * omask[i];
  Tensor traj({steps, q, n, n});
  RolloutResult r;
  const std::vector<std::string> meta{metadata};
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor next = predict(state, meta, dim);
    if (next.numel() != plane) throw std::logic_error("rollout: predictor changed the state shape");
    if (!next.all_finite()) {
      r.error = true;
      log_warn("rollout of '" + metadata + "' produced a non-finite state at step " + std::to_string(s + 1));
      break;
    }
    for (std::size_t i = 0; i < plane; ++i) next[i] *= omask[i];
    const Tensor phys = rep::denormalize(next.reshaped({q, n, n}), mask, stats, dim);
    std::copy_n(phys.ptr(), plane, traj.ptr() + s * plane);
    state = std::move(next);
    ++r.completed;
  }
  if (r.completed == steps) {
    r.trajectory = std::move(traj);
  } else if (r.completed > 0) {
    Tensor part({r.completed, q, n, n});
    std::copy_n(traj.ptr(), r.completed * plane, part.ptr());
    r.trajectory = std::move(part);
  }
  return r;
}

double RolloutErrors::mean_at(std::size_t step) const {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& t : per_traj) {
    if (step == 0 || t.size() < step || std::isnan(t[step - 1])) continue;
    sum += t[step - 1];
    ++used;
  }
  return used ? sum / static_cast<double>(used) : kNaN;
}

double RolloutErrors::median_at(std::size_t step) const {
  std::vector<double> v;
  for (const auto& t : per_traj) {
    if (step == 0 || t.size() < step || std::isnan(t[step - 1])) continue;
    v.push_back(t[step - 1]);
  }
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

RolloutErrors rollout_errors(const Predictor& predict, const rep::UnifiedDataset& test,
                             const rep::NormalizationTable& norm, std::size_t steps) {
  const rep::FamilyStats& stats = norm.at(test.name);
  if (test.timesteps < 2) throw ConfigError("rollout needs trajectories with at least two frames");
  const std::size_t horizon = std::min(steps, test.timesteps - 1);
  const std::size_t q = rep::kNumQuantities, n = test.n, plane = q * n * n;
  const Tensor mask = test.loss_mask();
  RolloutErrors out;
  out.per_traj.resize(test.num_traj);
  std::vector<char> failed(test.num_traj, 0);
  parallel_for(test.num_traj, [&](std::size_t tr) {
    Tensor u0({q, n, n});
    test.lift_frame(tr, 0, u0.ptr());
    const RolloutResult r = rollout(predict, u0, test.name, test.mask, test.dim, stats, horizon);
    failed[tr] = r.error ? 1 : 0;
    Tensor truth({1, q, n, n});
    Tensor pred({1, q, n, n});
    Tensor m1 = mask.reshaped({1, q, n, n});
    for (std::size_t s = 0; s < r.completed; ++s) {
      test.lift_frame(tr, s + 1, truth.ptr());
      const Tensor truth_phys = rep::denormalize(truth, test.mask, stats, test.dim);
      std::copy_n(r.trajectory.ptr() + s * plane, plane, pred.ptr());
      out.per_traj[tr].push_back(train::per_sample_nrmse(pred, truth_phys, m1)[0]);
    }
  });
  out.failed = static_cast<std::size_t>(std::count(failed.begin(), failed.end(), 1));
  return out;
}

}  // namespace unipde::eval
