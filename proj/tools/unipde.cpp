// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Exit codes: 0 success, 2 configuration or input
// error, 3 numerical failure, 1 anything else.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "unipde/common.hpp"
#include "unipde/evalcli/config.hpp"
#include "unipde/evalcli/experiment.hpp"
#include "unipde/evalcli/report.hpp"
#include "unipde/evalcli/selfcheck.hpp"
#include "unipde/pdegen/trajectory.hpp"

using namespace unipde;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::string setting = "full";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Common& c, bool config_required = false) {
  auto* opt = sub->add_option("--config", c.config, "key = value config file");
  if (config_required) opt->required();
  sub->add_option("--set", c.overrides, "override a config entry (key=value); repeatable");
  sub->add_option("--out", c.out, "output directory (overrides out_dir)");
  sub->add_option("--setting", c.setting, "ablation setting to train or evaluate");
  sub->add_option("--seed", c.seed, "model seed (default: first entry of seeds)");
}

eval::ExperimentConfig load(const Common& c) {
  eval::KeyValues kv;
  if (!c.config.empty()) kv = eval::KeyValues::load(c.config);
  for (const auto& o : c.overrides) kv.set_assignment(o);
  if (!c.out.empty()) kv.set("out_dir", c.out);
  return eval::ExperimentConfig::from_key_values(kv);
}

std::uint64_t seed_of(const Common& c, const eval::ExperimentConfig& cfg) { return c.seed ? *c.seed : cfg.seeds.front(); }

void print(const std::vector<eval::ReportRow>& rows) {
  std::cout << eval::kReportHeader << '\n';
  for (const auto& r : rows) std::cout << eval::format_row(r) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unipde: neural operator training and evaluation across PDE families"};
  app.require_subcommand(1);
  int threads = 0;
  bool quiet = false;
  app.add_option("--threads", threads, "worker threads (overrides the config)");
  app.add_flag("--quiet", quiet, "only print warnings");

  Common c;
  std::size_t k = 0, m = 0, steps = 0;
  std::size_t samples = 8;
  double tolerance = 1e-4;
  std::uint64_t check_seed = 0;

  // Single-family generation: gen --family F [--n --traj --t --<coef> ...] --out FILE.
  std::string family;
  std::size_t gen_n = 64, gen_traj = 200, gen_t = 0;
  double gen_t_final = 0.0;
  bool gen_periodic = false;
  std::map<std::string, double> coef_values;
  std::vector<std::pair<std::string, CLI::Option*>> coef_opts;
  std::string resume_from;

  auto* gen = app.add_subcommand("gen", "generate or reload the datasets and normalization statistics");
  auto* stage1 = app.add_subcommand("stage1", "embedding pretraining (alignment + task)");
  auto* stage2 = app.add_subcommand("stage2", "full fine-tuning continuing from stage1");
  auto* evalc = app.add_subcommand("eval", "one-step test nRMSE of the trained model");
  auto* fewshot = app.add_subcommand("fewshot", "adapt to held-out and unseen families with k trajectories");
  auto* superres = app.add_subcommand("superres", "evaluate at a finer test resolution without fine-tuning");
  auto* rollout = app.add_subcommand("rollout", "autoregressive rollout nRMSE");
  auto* baseline = app.add_subcommand("baseline", "per-family FNO baseline");
  auto* run = app.add_subcommand("run", "full protocol: gen, stage1, stage2, eval, transfer suites");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  gen->add_option("--family", family, "generate one family into the --out file instead of running the config");
  gen->add_option("--n", gen_n, "grid points per dimension");
  gen->add_option("--traj", gen_traj, "number of trajectories");
  gen->add_option("--t", gen_t, "stored timesteps (0: family default)");
  gen->add_option("--t-final", gen_t_final, "final time (0: family default)");
  gen->add_flag("--periodic", gen_periodic, "periodic boundaries (shallow water)");
  for (const char* name : {"beta", "nu", "D", "rho", "nu1", "nu2", "k", "g"}) {
    coef_opts.emplace_back(name, gen->add_option(std::string("--") + name, coef_values[name], "coefficient override"));
  }
  for (auto* s : {gen, stage1, stage2, evalc, fewshot, superres, rollout, baseline}) add_common(s, c);
  add_common(run, c, true);
  for (auto* s : {stage1, stage2}) {
    s->add_option("--resume", resume_from, "continue from a periodic checkpoint (path without extension)");
  }
  fewshot->add_option("--k", k, "number of adaptation trajectories")->required();
  superres->add_option("--m", m, "test resolution")->required();
  rollout->add_option("--steps", steps, "rollout length")->required();
  gradcheck->add_option("--samples", samples, "entries checked per large tensor");
  gradcheck->add_option("--tolerance", tolerance, "maximum relative error");
  gradcheck->add_option("--seed", check_seed, "random input seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (quiet) set_log_level(LogLevel::kWarn);

  try {
    if (gradcheck->parsed()) {
      if (threads > 0) set_num_threads(threads);
      const auto t0 = std::chrono::steady_clock::now();
      const auto results = eval::gradient_suite(samples, check_seed);
      bool ok = true;
      for (const auto& r : results) {
        const bool pass = r.rel_error < tolerance;
        ok = ok && pass;
        std::printf("%-16s rel_error=%.3e checked=%zu worst=%s %s\n", r.name.c_str(), r.rel_error, r.checked,
                    r.worst_tensor.c_str(), pass ? "ok" : "FAIL");
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::printf("gradcheck %s in %.1f s\n", ok ? "passed" : "FAILED", secs);
      return ok ? 0 : 3;
    }

    if (gen->parsed() && !family.empty()) {
      if (c.out.empty()) throw ConfigError("gen --family needs --out FILE");
      pde::GenSpec spec;
      spec.family = pde::parse_family(family);
      spec.n = gen_n;
      spec.num_traj = gen_traj;
      spec.timesteps = gen_t;
      spec.t_final = gen_t_final;
      spec.seed = c.seed.value_or(0);
      spec.periodic = gen_periodic;
      const auto defaults = pde::default_coefficients(spec.family);
      for (const auto& [name, opt] : coef_opts) {
        if (opt->count() == 0) continue;
        if (!defaults.count(name)) throw ConfigError("family '" + family + "' has no coefficient '" + name + "'");
        spec.coefficients[name] = coef_values[name];
      }
      const pde::TrajectorySet set = pde::generate_family(spec);
      pde::write_trajectories(set, c.out);
      std::cout << c.out << ": " << set.num_traj << " trajectories, T=" << set.timesteps << ", n=" << set.n << '\n';
      return 0;
    }

    eval::ExperimentConfig cfg = load(c);
    if (threads > 0) cfg.threads = threads;
    eval::Experiment ex(cfg);
    const std::uint64_t seed = seed_of(c, cfg);
    if (gen->parsed()) {
      ex.prepare_data();
      for (const auto& f : ex.families()) {
        std::cout << f.name() << ": " << f.split.train.num_traj << " train, " << f.split.test.num_traj << " test\n";
      }
    } else if ((stage1->parsed() || stage2->parsed()) && !resume_from.empty()) {
      ex.resume(c.setting, seed, resume_from);
    } else if (stage1->parsed()) {
      ex.run_stage1(c.setting, seed);
    } else if (stage2->parsed()) {
      ex.run_stage2(c.setting, seed);
    } else if (evalc->parsed()) {
      print(ex.evaluate_test(ex.load_final(c.setting, seed), c.setting, seed));
    } else if (fewshot->parsed()) {
      print(ex.evaluate_fewshot(ex.load_final(c.setting, seed), c.setting, seed, {k}));
    } else if (superres->parsed()) {
      print(ex.evaluate_superres(ex.load_final(c.setting, seed), c.setting, seed, {m}));
    } else if (rollout->parsed()) {
      print(ex.evaluate_rollout(ex.load_final(c.setting, seed), c.setting, seed, steps));
    } else if (baseline->parsed()) {
      print(ex.run_baseline(seed));
    } else if (run->parsed()) {
      const eval::EvalReport report = ex.run();
      std::cerr << "wrote " << report.rows.size() << " rows to " << (ex.out_dir() / "report.csv").string() << '\n';
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
