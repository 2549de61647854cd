// Copyright 2026 The poisonlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// poisonlab: command-line driver for the poisoning experiment pipeline.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "poisonlab/config.hpp"
#include "poisonlab/error.hpp"
#include "poisonlab/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kDependency = 3, kNumeric = 4 };

struct Common {
  std::string config_path;
  std::string out_dir;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  bool quiet = false;
};

struct StageOpts {
  double rate = 0.0;
  bool base = false;
  bool force = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Experiment config (JSON)");
  app->add_option("--out", c.out_dir, "Output directory (overrides output_dir)");
  app->add_option("--preset", c.preset, "Defaults preset")
      ->check(CLI::IsMember(poisonlab::preset_names()));
  app->add_option("--seed", c.seed, "Seed (stage commands) or single-seed grid (run-all)");
  app->add_option("--workers", c.workers, "Worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  app->add_flag("--quiet", c.quiet, "Suppress progress logs");
}

poisonlab::ExperimentConfig resolve_config(const Common& c) {
  poisonlab::ExperimentConfig cfg =
      c.config_path.empty()
          ? poisonlab::preset(c.preset.empty() ? "desk" : c.preset)
          : poisonlab::load_config(c.config_path, c.preset);
  if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
  if (c.workers) cfg.workers = *c.workers;
  cfg.validate();
  return cfg;
}

void log_error(const std::string& kind, const std::string& what) {
  std::cerr << poisonlab::log_line("error", {{"kind", kind}, {"message", what}}) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Label-flipping poisoning experiments on a synthetic RLHF pipeline"};
  app.require_subcommand(1);
  Common common;
  StageOpts opts;

  struct StageCmd {
    const char* name;
    const char* help;
    bool takes_rate;
  };
  const StageCmd stage_cmds[] = {
      {"gen-data", "Sample the base policy, preference data and prompt sets", false},
      {"train-classifier", "Train the attacker's topic classifier", false},
      {"attack", "Flip labels of targeted pairs at the given rate", true},
      {"train-rm", "Train a reward model on (possibly poisoned) data", true},
      {"rlhf", "PPO fine-tuning against a trained reward model", true},
      {"eval", "Score policy outputs with the clean reward model and the oracle", true},
  };
  std::vector<std::pair<CLI::App*, poisonlab::Stage>> stage_apps;
  for (const auto& sc : stage_cmds) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.help);
    add_common(sub, common);
    sub->add_flag("--force", opts.force, "Recompute even if outputs are fresh");
    if (sc.takes_rate) {
      sub->add_option("--rate", opts.rate, "Attack rate in [0, 1]")
          ->check(CLI::Range(0.0, 1.0));
    }
    if (std::string(sc.name) == "eval") {
      sub->add_flag("--base", opts.base, "Evaluate the untuned base policy");
    }
    stage_apps.emplace_back(sub, poisonlab::stage_from_string(sc.name));
  }
  CLI::App* run_all = app.add_subcommand("run-all", "Run the full rate x seed grid and the report");
  add_common(run_all, common);
  CLI::App* show = app.add_subcommand("show-config", "Print the resolved config and its hash");
  add_common(show, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    poisonlab::ExperimentConfig cfg = resolve_config(common);
    poisonlab::LogSink sink = common.quiet ? nullptr : poisonlab::stderr_sink();
    if (show->parsed()) {
      std::cout << poisonlab::to_json(cfg).dump(2) << '\n'
                << "config_hash " << poisonlab::config_hash(cfg) << '\n';
      return kOk;
    }
    if (run_all->parsed()) {
      if (common.seed) cfg.seeds = {*common.seed};
      poisonlab::Pipeline pipeline(cfg, sink);
      const auto report = pipeline.run_all();
      std::size_t failed = 0;
      for (const auto& c : report.conditions) failed += c.status != "ok";
      std::cout << pipeline.report_path().string() << '\n';
      return failed == 0 ? kOk : kFailure;
    }
    for (const auto& [sub, stage] : stage_apps) {
      if (!sub->parsed()) continue;
      poisonlab::Pipeline pipeline(cfg, sink);
      poisonlab::StageRequest req;
      req.stage = stage;
      req.seed = common.seed.value_or(cfg.seeds.front());
      req.rate = opts.rate;
      req.base = opts.base;
      req.force = opts.force;
      const auto res = pipeline.run_stage(req);
      if (res.cached && sink) {
        sink(poisonlab::log_line("stage cached", {{"stage", poisonlab::to_string(stage)},
                                                  {"dir", res.dir.string()}}));
      }
      std::cout << res.dir.string() << '\n';
      return kOk;
    }
  } catch (const poisonlab::ConfigError& e) {
    log_error("config", e.what());
    return kConfig;
  } catch (const poisonlab::DependencyError& e) {
    log_error("dependency", e.what());
    return kDependency;
  } catch (const poisonlab::NumericError& e) {
    log_error("numeric", e.what());
    return kNumeric;
  } catch (const std::exception& e) {
    log_error("failure", e.what());
    return kFailure;
  }
  return kFailure;
}
