// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/evalcli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "unipde/common.hpp"
#include "unipde/evalcli/evaluate.hpp"
#include "unipde/pdegen/initial_conditions.hpp"
#include "unipde/trainer/losses.hpp"

namespace unipde::eval {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kBatchHeader = "setting,seed,stage,epoch,batch,families";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slug(const std::string& text) {
  std::string s = text;
  for (char& c : s) {
    if (c == ' ') c = '_';
  }
  return s;
}

bool header_matches(const pde::TrajectorySet& h, const pde::GenSpec& spec) {
  const std::size_t steps = spec.timesteps ? spec.timesteps : pde::default_timesteps(spec.family);
  const double t_final = spec.t_final > 0.0 ? spec.t_final : pde::default_t_final(spec.family);
  auto coeffs = pde::default_coefficients(spec.family);
  for (const auto& [k, v] : spec.coefficients) coeffs[k] = v;
  return h.family == spec.family && h.n == spec.n && h.timesteps == steps && h.num_traj == spec.num_traj &&
         h.seed == spec.seed && h.coefficients == coeffs && h.dt == t_final / static_cast<double>(steps - 1);
}

pde::TrajectorySet load_or_generate(const pde::GenSpec& spec, const std::filesystem::path& path) {
  if (std::filesystem::exists(path)) {
    try {
      if (header_matches(pde::read_trajectory_header(path), spec)) return pde::read_trajectories(path);
    } catch (const FormatError& e) {
      log_warn("regenerating '" + path.string() + "': " + e.what());
    }
  }
  pde::TrajectorySet set = pde::generate_family(spec);
  pde::write_trajectories(set, path);
  return set;
}

std::string role_name(Role r) {
  switch (r) {
    case Role::kTrain: return "train";
    case Role::kHeldOut: return "heldout";
    case Role::kUnseen: return "unseen";
  }
  return "train";
}

}  // namespace

struct Experiment::Logs {
  Logs(const std::filesystem::path& dir, bool truncate)
      : report(dir / "report.csv", kReportHeader, truncate),
        timings(dir / "timings.csv", kTimingHeader, truncate),
        batches(dir / "batches.csv", kBatchHeader, truncate) {}
  CsvLog report;
  CsvLog timings;
  CsvLog batches;
};

BaselineResult fno_baseline_train(const train::FamilySplit& data, const rep::NormalizationTable& norm,
                                  const net::ModelConfig& base, const train::TrainConfig& cfg, std::uint64_t seed,
                                  std::size_t eval_batch) {
  net::ModelConfig mc = base;
  mc.body_depth = 0;
  mc.use_metadata = false;
  mc.n = data.train.n;
  train::TrainConfig tc = cfg;
  tc.seed = seed;
  BaselineResult r{net::Model(mc, pde::derive_seed(seed, 1)), 0.0, kNaN};
  train::TrainState state = train::initial_state(tc);
  state.stage = 2;
  train::stage2_train(r.model, {&data.train}, tc, state);
  if (!state.history.empty()) r.loss_task = state.history.back().loss_task;
  r.nrmse = eval_nrmse(r.model, data.test, norm, eval_batch);
  return r;
}

std::size_t audit_batch_log(const std::filesystem::path& path, const std::vector<std::string>& forbidden) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open batch log '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  if (line != kBatchHeader) throw FormatError("'" + path.string() + "' is not a batch log");
  std::size_t bad = 0;
  while (std::getline(in, line)) {
    const auto comma = line.rfind(',');
    std::istringstream names(line.substr(comma + 1));
    std::string name;
    while (std::getline(names, name, '|')) {
      if (std::find(forbidden.begin(), forbidden.end(), name) != forbidden.end()) {
        ++bad;
        break;
      }
    }
  }
  return bad;
}

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  hash_ = cfg_.hash();
  set_num_threads(cfg_.threads);
  std::filesystem::create_directories(cfg_.out_dir);
  std::ofstream snap(cfg_.out_dir / "config.txt");
  if (!snap) throw ConfigError("cannot write to output directory '" + cfg_.out_dir.string() + "'");
  snap << "# config_hash = " << hash_ << "\n" << cfg_.to_key_values().to_text();
}

Experiment::~Experiment() = default;

void Experiment::open_logs(bool truncate) {
  logs_.reset();
  logs_ = std::make_unique<Logs>(cfg_.out_dir, truncate);
}

void Experiment::emit(const ReportRow& row, std::vector<ReportRow>* sink) {
  if (!logs_) open_logs(false);
  logs_->report.append(format_row(row));
  if (sink) sink->push_back(row);
  if (collect_ && collect_ != sink) collect_->push_back(row);
}

void Experiment::time_phase(const std::string& setting, std::uint64_t seed, const std::string& phase,
                            const std::string& family, double seconds) {
  if (!logs_) open_logs(false);
  std::ostringstream line;
  line << hash_ << ',' << setting << ',' << seed << ',' << phase << ',' << family << ',' << seconds;
  logs_->timings.append(line.str());
}

void Experiment::prepare_data() {
  if (prepared_) return;
  const auto t0 = Clock::now();
  std::filesystem::create_directories(cfg_.out_dir / "data");
  families_.clear();
  auto add = [&](const std::vector<FamilyEntry>& list, Role role) {
    for (const auto& e : list) {
      FamilyData fd;
      fd.entry = e;
      fd.role = role;
      fd.spec.family = e.family;
      fd.spec.n = cfg_.n;
      fd.spec.timesteps = cfg_.timesteps;
      fd.spec.t_final = cfg_.t_final;
      fd.spec.num_traj = (role == Role::kTrain ? cfg_.train_traj : cfg_.heldout_traj) + cfg_.test_traj;
      fd.spec.seed = pde::derive_seed(cfg_.data_seed, fnv1a64(e.text()));
      fd.spec.coefficients = e.coefficients;
      const auto path = cfg_.out_dir / "data" / (slug(e.text()) + ".upst");
      const pde::TrajectorySet set = load_or_generate(fd.spec, path);
      const double frac = static_cast<double>(cfg_.test_traj) / static_cast<double>(set.num_traj);
      fd.split = train::split_family(set, frac);
      norm_.set(fd.name(), fd.split.train.stats);
      log_info("family '" + fd.name() + "' (" + role_name(role) + "): " + std::to_string(fd.split.train.num_traj) +
               " train / " + std::to_string(fd.split.test.num_traj) + " test trajectories");
      families_.push_back(std::move(fd));
    }
  };
  add(cfg_.train_families, Role::kTrain);
  add(cfg_.heldout_families, Role::kHeldOut);
  add(cfg_.unseen_families, Role::kUnseen);
  norm_.save(cfg_.out_dir / "norm_stats.json");
  prepared_ = true;
  time_phase("", 0, "gen", "", seconds_since(t0));
}

rep::UnifiedDataset Experiment::hires_test(const FamilyData& family, std::size_t m) {
  pde::GenSpec spec = family.spec;
  spec.n = m;
  const auto path = cfg_.out_dir / "data" / (slug(family.entry.text()) + "_m" + std::to_string(m) + ".upst");
  const pde::TrajectorySet set = load_or_generate(spec, path);
  const std::size_t test = family.split.test.num_traj;
  const pde::TrajectorySet part = set.subset(set.num_traj - test, set.num_traj);
  return rep::prepare_dataset(part, rep::default_quantity_map(part), norm_.at(family.name()));
}

std::filesystem::path Experiment::checkpoint_dir(const std::string& setting, std::uint64_t seed) const {
  return cfg_.out_dir / "checkpoints" / (setting + "_seed" + std::to_string(seed));
}

std::vector<const rep::UnifiedDataset*> Experiment::train_sets() const {
  std::vector<const rep::UnifiedDataset*> out;
  for (const auto& f : families_) {
    if (f.role == Role::kTrain) out.push_back(&f.split.train);
  }
  return out;
}

std::vector<std::string> Experiment::excluded_names() const {
  std::vector<std::string> out;
  for (const auto& f : families_) {
    if (f.role != Role::kTrain) out.push_back(f.name());
  }
  return out;
}

const std::vector<std::string>& Experiment::corpus() {
  if (corpus_.empty()) {
    corpus_ = cfg_.corpus.empty() ? train::synthetic_corpus(cfg_.corpus_lines, pde::derive_seed(cfg_.data_seed, 0x636f72))
                                  : train::read_corpus(cfg_.corpus);
  }
  return corpus_;
}

net::Model Experiment::train_impl(const std::string& setting, std::uint64_t seed, bool stage1, bool stage2,
                                  const std::filesystem::path& resume_from) {
  prepare_data();
  if (!logs_) open_logs(false);
  const SettingPlan plan = [&] {
    SettingPlan p = setting_plan(cfg_, setting);
    p.train.seed = seed;
    return p;
  }();
  const auto dir = checkpoint_dir(setting, seed);
  std::filesystem::create_directories(dir);
  net::Model model(plan.model, pde::derive_seed(seed, 1));
  train::TrainState state = train::initial_state(plan.train);
  if (!resume_from.empty()) {
    if (!std::filesystem::exists(resume_from.string() + ".json")) {
      throw ConfigError("no checkpoint at '" + resume_from.string() + "'");
    }
    train::load_checkpoint(resume_from, model, state);
  }

  const auto sets = train_sets();
  const auto excluded = excluded_names();
  std::vector<std::string> names;
  for (const auto* s : sets) names.push_back(s->name);
  train::TrainHooks hooks;
  hooks.checkpoint_dir = dir;
  hooks.norm = &norm_;
  hooks.on_batch = [&](int stage, std::size_t epoch, std::size_t batch, const rep::UnifiedBatch& b) {
    std::set<std::string> fams(b.metadata.begin(), b.metadata.end());
    std::string joined;
    for (const auto& f : fams) {
      if (std::find(excluded.begin(), excluded.end(), f) != excluded.end()) {
        throw std::logic_error("held-out family '" + f + "' reached a training batch");
      }
      joined += (joined.empty() ? "" : "|") + f;
    }
    std::ostringstream line;
    line << setting << ',' << seed << ',' << stage << ',' << epoch << ',' << batch << ',' << joined;
    logs_->batches.append(line.str());
  };
  hooks.on_epoch = [&](const train::EpochStats& st, const net::Model& m) {
    ReportRow row;
    row.config_hash = hash_;
    row.stage = std::to_string(st.stage);
    row.epoch = st.epoch;
    row.setting = setting;
    row.resolution = cfg_.n;
    row.seed = seed;
    row.loss_align = st.loss_align;
    row.loss_task = st.loss_task;
    if (cfg_.eval_every != 0 && st.epoch % cfg_.eval_every == 0) {
      for (const auto& f : families_) {
        if (f.role != Role::kTrain) continue;
        row.family = f.name();
        row.nrmse = eval_nrmse(m, f.split.test, norm_, cfg_.eval_batch);
        emit(row, nullptr);
      }
    } else {
      row.family = "all";
      row.nrmse = kNaN;
      emit(row, nullptr);
    }
  };

  if (stage1 && state.stage == 1) {
    const auto t0 = Clock::now();
    if (plan.stage1) {
      train::stage1_train(model, sets, plan.train.align_weight > 0.0 ? corpus() : std::vector<std::string>{},
                          plan.train, state, hooks);
    } else {
      state.stage = 2;
      state.epoch = 0;
    }
    train::save_checkpoint(dir / "stage1", model, state, &norm_);
    time_phase(setting, seed, "stage1", "", seconds_since(t0));
  }
  if (stage2) {
    const auto t0 = Clock::now();
    train::stage2_train(model, sets, plan.train, state, hooks);
    train::save_checkpoint(dir / "final", model, state, &norm_);
    time_phase(setting, seed, "stage2", "", seconds_since(t0));
  }
  return model;
}

void Experiment::run_stage1(const std::string& setting, std::uint64_t seed) {
  train_impl(setting, seed, true, false, {});
}

net::Model Experiment::run_stage2(const std::string& setting, std::uint64_t seed) {
  std::filesystem::path from;
  if (setting_plan(cfg_, setting).stage1) {
    from = checkpoint_dir(setting, seed) / "stage1";
    if (!std::filesystem::exists(from.string() + ".json")) {
      throw ConfigError("no stage 1 checkpoint in '" + checkpoint_dir(setting, seed).string() + "'; run stage1 first");
    }
  }
  return train_impl(setting, seed, false, true, from);
}

net::Model Experiment::train(const std::string& setting, std::uint64_t seed) {
  return train_impl(setting, seed, true, true, {});
}

net::Model Experiment::resume(const std::string& setting, std::uint64_t seed, const std::filesystem::path& checkpoint) {
  return train_impl(setting, seed, true, true, checkpoint);
}

net::Model Experiment::load_final(const std::string& setting, std::uint64_t seed) const {
  SettingPlan plan = setting_plan(cfg_, setting);
  net::Model model(plan.model, 0);
  train::TrainState state;
  const auto base = checkpoint_dir(setting, seed) / "final";
  if (!std::filesystem::exists(base.string() + ".json")) {
    throw ConfigError("no trained model at '" + base.string() + "'; run stage2 first");
  }
  train::load_checkpoint(base, model, state);
  return model;
}

std::vector<ReportRow> Experiment::evaluate_test(const net::Model& model, const std::string& setting,
                                                 std::uint64_t seed) {
  prepare_data();
  std::vector<ReportRow> rows;
  for (const auto& f : families_) {
    if (f.role != Role::kTrain) continue;
    const auto t0 = Clock::now();
    ReportRow r;
    r.config_hash = hash_;
    r.stage = "test";
    r.epoch = setting_plan(cfg_, setting).train.stage2_epochs;
    r.setting = setting;
    r.family = f.name();
    r.resolution = f.split.test.n;
    r.seed = seed;
    r.loss_align = kNaN;
    r.loss_task = kNaN;
    r.nrmse = eval_nrmse(model, f.split.test, norm_, cfg_.eval_batch);
    emit(r, &rows);
    time_phase(setting, seed, "test", f.name(), seconds_since(t0));
  }
  return rows;
}

std::vector<ReportRow> Experiment::evaluate_rollout(const net::Model& model, const std::string& setting,
                                                    std::uint64_t seed, std::size_t steps) {
  prepare_data();
  std::vector<ReportRow> rows;
  const std::uint64_t before = params_checksum(model);
  for (const auto& f : families_) {
    if (f.role != Role::kTrain) continue;
    const auto t0 = Clock::now();
    const RolloutErrors err = rollout_errors(model_predictor(model), f.split.test, norm_, steps);
    const std::size_t horizon = std::min(steps, f.split.test.timesteps - 1);
    if (err.failed) {
      log_warn("rollout of '" + f.name() + "': " + std::to_string(err.failed) + " trajectories diverged");
    }
    ReportRow r;
    r.config_hash = hash_;
    r.stage = "rollout";
    r.epoch = horizon;
    r.setting = setting;
    r.family = f.name();
    r.resolution = f.split.test.n;
    r.seed = seed;
    r.loss_align = kNaN;
    r.loss_task = kNaN;
    r.nrmse = err.mean_at(horizon);
    emit(r, &rows);
    time_phase(setting, seed, "rollout", f.name(), seconds_since(t0));
  }
  if (params_checksum(model) != before) throw std::logic_error("rollout modified model parameters");
  return rows;
}

std::vector<ReportRow> Experiment::evaluate_fewshot(const net::Model& model, const std::string& setting,
                                                    std::uint64_t seed, const std::vector<std::size_t>& ks) {
  prepare_data();
  std::vector<ReportRow> rows;
  SettingPlan plan = setting_plan(cfg_, setting);
  plan.train.seed = seed;
  for (const auto& f : families_) {
    if (f.role == Role::kTrain) continue;
    for (std::size_t k : ks) {
      if (k > f.split.train.num_traj) {
        log_warn("skipping k=" + std::to_string(k) + " for '" + f.name() + "': only " +
                 std::to_string(f.split.train.num_traj) + " adaptation trajectories");
        continue;
      }
      const auto t0 = Clock::now();
      const net::Model adapted = train::fewshot_adapt(model, f.split.train, k, plan.train);
      ReportRow r;
      r.config_hash = hash_;
      r.stage = "fewshot";
      r.epoch = k == 0 ? 0 : plan.train.fewshot_epochs;
      r.setting = setting;
      r.family = f.name();
      r.k_shot = k;
      r.resolution = f.split.test.n;
      r.seed = seed;
      r.loss_align = kNaN;
      r.loss_task = kNaN;
      r.nrmse = eval_nrmse(adapted, f.split.test, norm_, cfg_.eval_batch);
      emit(r, &rows);
      time_phase(setting, seed, "fewshot_k" + std::to_string(k), f.name(), seconds_since(t0));
    }
  }
  return rows;
}

std::vector<ReportRow> Experiment::evaluate_superres(const net::Model& model, const std::string& setting,
                                                     std::uint64_t seed, const std::vector<std::size_t>& ms) {
  prepare_data();
  std::vector<ReportRow> rows;
  for (const auto& entry : cfg_.superres_families) {
    const auto it = std::find_if(families_.begin(), families_.end(),
                                 [&](const FamilyData& f) { return f.role == Role::kTrain && f.entry == entry; });
    if (it == families_.end()) throw ConfigError("superres family '" + entry.text() + "' is not a training family");
    for (std::size_t m : ms) {
      const auto t0 = Clock::now();
      const rep::UnifiedDataset hires = hires_test(*it, m);
      ReportRow r;
      r.config_hash = hash_;
      r.stage = "superres";
      r.epoch = setting_plan(cfg_, setting).train.stage2_epochs;
      r.setting = setting;
      r.family = it->name();
      r.resolution = m;
      r.seed = seed;
      r.loss_align = kNaN;
      r.loss_task = kNaN;
      r.nrmse = eval_superres(model, hires, norm_, cfg_.eval_batch);
      emit(r, &rows);
      time_phase(setting, seed, "superres_m" + std::to_string(m), it->name(), seconds_since(t0));
    }
  }
  return rows;
}

std::vector<ReportRow> Experiment::run_baseline(std::uint64_t seed) {
  prepare_data();
  std::vector<ReportRow> rows;
  for (const auto& f : families_) {
    if (f.role != Role::kTrain) continue;
    const auto t0 = Clock::now();
    const BaselineResult b = fno_baseline_train(f.split, norm_, setting_plan(cfg_, "full").model, cfg_.train, seed,
                                                cfg_.eval_batch);
    ReportRow r;
    r.config_hash = hash_;
    r.stage = "test";
    r.epoch = cfg_.train.stage2_epochs;
    r.setting = "fno_baseline";
    r.family = f.name();
    r.resolution = f.split.test.n;
    r.seed = seed;
    r.loss_align = kNaN;
    r.loss_task = b.loss_task;
    r.nrmse = b.nrmse;
    emit(r, &rows);
    time_phase("fno_baseline", seed, "baseline", f.name(), seconds_since(t0));
  }
  return rows;
}

EvalReport Experiment::run() {
  open_logs(true);
  EvalReport report;
  collect_ = &report.rows;
  struct Reset {
    std::vector<ReportRow>*& p;
    ~Reset() { p = nullptr; }
  } reset{collect_};
  prepare_data();
  for (const auto& setting : cfg_.settings) {
    for (std::uint64_t seed : cfg_.seeds) {
      log_info("setting '" + setting + "', seed " + std::to_string(seed));
      const net::Model model = train(setting, seed);
      evaluate_test(model, setting, seed);
      evaluate_rollout(model, setting, seed, cfg_.rollout_steps);
      if (std::find(cfg_.transfer_settings.begin(), cfg_.transfer_settings.end(), setting) !=
          cfg_.transfer_settings.end()) {
        evaluate_fewshot(model, setting, seed, cfg_.fewshot_k);
        evaluate_superres(model, setting, seed, cfg_.superres_m);
      }
    }
  }
  if (cfg_.baseline) {
    for (std::uint64_t seed : cfg_.seeds) run_baseline(seed);
  }
  logs_.reset();
  const std::size_t leaks = audit_batch_log(cfg_.out_dir / "batches.csv", excluded_names());
  if (leaks != 0) throw std::logic_error(std::to_string(leaks) + " training batches contained held-out families");
  return report;
}

}  // namespace unipde::eval
