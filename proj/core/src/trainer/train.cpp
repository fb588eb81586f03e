// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/trainer/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "unipde/common.hpp"
#include "unipde/pdegen/initial_conditions.hpp"
#include "unipde/trainer/losses.hpp"

namespace unipde::train {

using gk::Tensor;
using gk::Var;
using json = nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kReferenceKey = "align.reference";

Tensor pick_rows(const Tensor& table, std::size_t count, std::mt19937_64& rng) {
  const std::size_t rows = table.dim(0), e = table.dim(1);
  count = std::min(count, rows);
  std::vector<std::size_t> idx(rows);
  for (std::size_t i = 0; i < rows; ++i) idx[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (rows - i));
    std::swap(idx[i], idx[j]);
  }
  Tensor out({count, e});
  for (std::size_t i = 0; i < count; ++i) std::copy_n(table.ptr() + idx[i] * e, e, out.ptr() + i * e);
  return out;
}

std::string batch_families(const rep::UnifiedBatch& batch) {
  std::set<std::string> names(batch.metadata.begin(), batch.metadata.end());
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : "; ") + n;
  return out;
}

struct EpochPlan {
  int stage = 2;
  std::size_t total = 0;
  std::function<bool(const std::string&)> trainable;
  double lr = 0;
  bool with_align = false;
};

// Runs the remaining epochs of one stage. Returns true when the stage is complete.
bool run_epochs(net::Model& model, const std::vector<const rep::UnifiedDataset*>& sets, const TrainConfig& cfg,
                TrainState& state, const TrainHooks& hooks, const EpochPlan& plan) {
  if (sets.empty()) throw ConfigError("training needs at least one dataset");
  const std::size_t n = sets.front()->n;
  for (const auto* s : sets) {
    if (s->n != model.config().n) {
      throw ConfigError("dataset '" + s->name + "' has n=" + std::to_string(s->n) + " but the model expects n=" +
                        std::to_string(model.config().n));
    }
    if (s->n != n) throw ConfigError("all training datasets must share n");
  }
  const std::vector<rep::BatchItem> pool = pair_pool(sets);
  if (pool.empty()) throw ConfigError("training pool has no pairs");
  const AdamConfig adam_cfg = cfg.adam(plan.lr);
  std::size_t done_here = 0;
  while (state.epoch < plan.total) {
    if (hooks.max_epochs != 0 && done_here == hooks.max_epochs) return false;
    std::vector<rep::BatchItem> items = pool;
    shuffle_items(items, state.rng);
    EpochStats stats;
    stats.stage = plan.stage;
    stats.epoch = state.epoch + 1;
    double sum_align = 0, sum_task = 0;
    std::size_t align_batches = 0, task_batches = 0;
    for (std::size_t begin = 0, bi = 0; begin < items.size(); begin += cfg.batch_size, ++bi) {
      const std::size_t end = std::min(items.size(), begin + cfg.batch_size);
      const std::vector<rep::BatchItem> chunk(items.begin() + static_cast<std::ptrdiff_t>(begin),
                                              items.begin() + static_cast<std::ptrdiff_t>(end));
      const rep::UnifiedBatch batch = rep::make_batch(sets, chunk, model.config().use_coords);
      if (hooks.on_batch) hooks.on_batch(plan.stage, stats.epoch, bi, batch);
      gk::Tape tape;
      net::ParamBinder p(tape, model.params(), plan.trainable);
      StepLosses l = batch_loss(model, p, batch, state.reference, cfg, state.rng, plan.with_align);
      const double total = l.total.value()[0];
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "stage " << plan.stage << " epoch " << stats.epoch << " batch " << bi
            << ": non-finite loss (align=" << l.align << ", task=" << l.task << ") on " << batch_families(batch);
        throw NumericalError(msg.str());
      }
      if (tape.requires_grad(l.total.id)) {
        const gk::NamedTensors grads = tape.backward(l.total);
        state.adam.step(model.params(), grads, adam_cfg);
      }
      if (!std::isnan(l.align)) {
        sum_align += l.align;
        ++align_batches;
      }
      if (!std::isnan(l.task)) {
        sum_task += l.task;
        ++task_batches;
      }
      ++stats.steps;
    }
    stats.loss_align = align_batches ? sum_align / static_cast<double>(align_batches) : kNaN;
    stats.loss_task = task_batches ? sum_task / static_cast<double>(task_batches) : kNaN;
    ++state.epoch;
    ++done_here;
    state.history.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(stats, model);
    const bool finished = state.epoch == plan.total;
    const bool advance = finished && plan.stage == 1;
    if (advance) {
      state.stage = 2;
      state.epoch = 0;
      state.adam = Adam{};
    }
    if (cfg.checkpoint_every != 0 && !hooks.checkpoint_dir.empty() && stats.epoch % cfg.checkpoint_every == 0) {
      std::filesystem::create_directories(hooks.checkpoint_dir);
      save_checkpoint(hooks.checkpoint_dir / ("stage" + std::to_string(plan.stage) + "_epoch" + std::to_string(stats.epoch)),
                      model, state, hooks.norm);
    }
    if (finished) return true;
  }
  return true;
}

}  // namespace

std::string stage1_trainable_name(Stage1Trainable t) {
  switch (t) {
    case Stage1Trainable::kEmbedderPredictor: return "embedder_predictor";
    case Stage1Trainable::kEmbedderOnly: return "embedder_only";
    case Stage1Trainable::kAll: return "all";
  }
  return "embedder_predictor";
}

Stage1Trainable parse_stage1_trainable(const std::string& name) {
  for (auto t : {Stage1Trainable::kEmbedderPredictor, Stage1Trainable::kEmbedderOnly, Stage1Trainable::kAll}) {
    if (stage1_trainable_name(t) == name) return t;
  }
  throw ConfigError("unknown stage1_trainable '" + name + "' (embedder_predictor, embedder_only, all)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(fewshot_lr > 0.0)) fail("fewshot_lr must be positive");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  if (dropout != 0.0) fail("dropout is not supported; it must be 0");
  if (!mmd_median && !(mmd_sigma > 0.0)) fail("mmd_sigma must be positive");
  if (align_weight < 0.0 || task_weight < 0.0) fail("loss weights must be >= 0");
  if (align_weight == 0.0 && task_weight == 0.0) fail("at least one loss weight must be positive");
}

AdamConfig TrainConfig::adam(double learning_rate) const {
  AdamConfig a;
  a.lr = learning_rate;
  a.weight_decay = weight_decay;
  a.grad_clip = grad_clip;
  return a;
}

TrainState initial_state(const TrainConfig& cfg) {
  TrainState s;
  s.rng.seed(pde::derive_seed(cfg.seed, 0x7261696e));
  return s;
}

std::function<bool(const std::string&)> stage1_filter(Stage1Trainable t) {
  switch (t) {
    case Stage1Trainable::kAll: return [](const std::string&) { return true; };
    case Stage1Trainable::kEmbedderOnly:
      return [](const std::string& n) { return !net::Model::is_body_param(n) && n.rfind("predictor.", 0) != 0; };
    case Stage1Trainable::kEmbedderPredictor: break;
  }
  return [](const std::string& n) { return !net::Model::is_body_param(n); };
}

StepLosses batch_loss(const net::Model& model, net::ParamBinder& p, const rep::UnifiedBatch& batch,
                      const Tensor& reference, const TrainConfig& cfg, std::mt19937_64& rng, bool with_align) {
  gk::Tape& tape = p.tape();
  net::ForwardResult r = model.forward(p, batch.inputs, batch.metadata);
  StepLosses out;
  out.align = kNaN;
  out.task = kNaN;
  Var total;
  if (cfg.task_weight > 0.0) {
    Var task = nrmse_loss(r.prediction, batch.targets, batch.mask, batch.group);
    out.task = task.value()[0];
    total = gk::scale(task, cfg.task_weight);
  }
  if (with_align && cfg.align_weight > 0.0 && !reference.empty() && batch.size() >= 2) {
    const std::size_t want = cfg.align_reference_size ? cfg.align_reference_size : batch.size();
    Tensor ref = pick_rows(reference, std::max<std::size_t>(want, 2), rng);
    const double sigma = cfg.mmd_median ? median_bandwidth(r.pooled_mix.value(), ref) : cfg.mmd_sigma;
    Var align = mmd_loss(r.pooled_mix, tape.constant(std::move(ref)), sigma);
    out.align = align.value()[0];
    Var weighted = gk::scale(align, cfg.align_weight);
    total = total.valid() ? gk::add(total, weighted) : weighted;
  }
  if (!total.valid()) total = tape.constant(Tensor::scalar(0.0));
  out.total = total;
  return out;
}

void stage1_train(net::Model& model, const std::vector<const rep::UnifiedDataset*>& sets,
                  const std::vector<std::string>& corpus, const TrainConfig& cfg, TrainState& state,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (state.stage != 1) return;
  const bool with_align = cfg.align_weight > 0.0;
  if (with_align && state.reference.empty()) {
    if (corpus.empty()) throw ConfigError("stage 1 alignment needs a non-empty reference corpus");
    state.reference = reference_features(corpus, model);
    if (state.reference.dim(0) < 2) throw ConfigError("reference corpus needs at least two non-empty lines");
  }
  EpochPlan plan;
  plan.stage = 1;
  plan.total = cfg.stage1_epochs;
  plan.trainable = stage1_filter(cfg.stage1_trainable);
  plan.lr = cfg.lr;
  plan.with_align = with_align;
  if (plan.total == 0) {
    state.stage = 2;
    state.epoch = 0;
    state.adam = Adam{};
    return;
  }
  run_epochs(model, sets, cfg, state, hooks, plan);
}

void stage2_train(net::Model& model, const std::vector<const rep::UnifiedDataset*>& sets, const TrainConfig& cfg,
                  TrainState& state, const TrainHooks& hooks) {
  cfg.validate();
  if (state.stage == 1) {
    state.stage = 2;
    state.epoch = 0;
    state.adam = Adam{};
  }
  EpochPlan plan;
  plan.stage = 2;
  plan.total = cfg.stage2_epochs;
  plan.trainable = [](const std::string&) { return true; };
  plan.lr = cfg.lr;
  plan.with_align = false;
  TrainConfig task_only = cfg;
  task_only.task_weight = 1.0;
  run_epochs(model, sets, task_only, state, hooks, plan);
}

net::Model fewshot_adapt(const net::Model& model, const rep::UnifiedDataset& data, std::size_t k,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (k > data.num_traj) {
    throw ConfigError("few-shot k=" + std::to_string(k) + " exceeds the " + std::to_string(data.num_traj) +
                      " available trajectories of '" + data.name + "'");
  }
  net::Model adapted = model;
  if (k == 0 || cfg.fewshot_epochs == 0) return adapted;
  const rep::UnifiedDataset few = data.subset(0, k);
  TrainState state;
  state.stage = 3;
  state.rng.seed(pde::derive_seed(cfg.seed, 0x66657700 + k));
  EpochPlan plan;
  plan.stage = 3;
  plan.total = cfg.fewshot_epochs;
  plan.trainable = [](const std::string&) { return true; };
  plan.lr = cfg.fewshot_lr;
  TrainConfig no_ckpt = cfg;
  no_ckpt.checkpoint_every = 0;
  no_ckpt.task_weight = 1.0;
  run_epochs(adapted, {&few}, no_ckpt, state, {}, plan);
  return adapted;
}

void save_checkpoint(const std::filesystem::path& base, const net::Model& model, const TrainState& state,
                     const rep::NormalizationTable* norm) {
  gk::NamedTensors all = model.params();
  state.adam.export_to(all);
  if (!state.reference.empty()) all[kReferenceKey] = state.reference;
  gk::write_weights(base.string() + ".upsw", all);
  std::ostringstream rng;
  rng << state.rng;
  json hist = json::array();
  for (const auto& h : state.history) {
    hist.push_back({{"stage", h.stage}, {"epoch", h.epoch}, {"loss_align", std::isnan(h.loss_align) ? json() : json(h.loss_align)},
                    {"loss_task", std::isnan(h.loss_task) ? json() : json(h.loss_task)}, {"steps", h.steps}});
  }
  json j = {{"stage", state.stage},
            {"epoch", state.epoch},
            {"adam_steps", state.adam.steps()},
            {"rng", rng.str()},
            {"model", json::parse(model.config().to_json())},
            {"history", hist}};
  if (norm != nullptr) j["normalization"] = json::parse(norm->to_json());
  std::ofstream out(base.string() + ".json");
  if (!out) throw ConfigError("cannot write checkpoint '" + base.string() + ".json'");
  out << j.dump(2) << '\n';
}

void load_checkpoint(const std::filesystem::path& base, net::Model& model, TrainState& state) {
  std::ifstream in(base.string() + ".json");
  if (!in) throw ConfigError("cannot open checkpoint '" + base.string() + ".json'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint metadata: " + std::string(e.what()));
  }
  const net::ModelConfig cfg = net::ModelConfig::from_json(j.at("model").dump());
  if (!(cfg == model.config())) throw ConfigError("checkpoint '" + base.string() + "' was written for a different model config");
  const gk::NamedTensors all = gk::read_weights(base.string() + ".upsw");
  TrainState s;
  try {
    s.stage = j.at("stage").get<int>();
    s.epoch = j.at("epoch").get<std::size_t>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw FormatError("bad rng state");
    s.adam.import_from(all, j.at("adam_steps").get<std::uint64_t>());
    for (const auto& h : j.at("history")) {
      EpochStats e;
      e.stage = h.at("stage");
      e.epoch = h.at("epoch");
      e.loss_align = h.at("loss_align").is_null() ? kNaN : h.at("loss_align").get<double>();
      e.loss_task = h.at("loss_task").is_null() ? kNaN : h.at("loss_task").get<double>();
      e.steps = h.at("steps");
      s.history.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed checkpoint metadata: " + std::string(e.what()));
  }
  if (auto it = all.find(kReferenceKey); it != all.end()) s.reference = it->second;
  model.assign(all);
  state = std::move(s);
}

}  // namespace unipde::train
