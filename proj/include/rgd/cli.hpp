// Copyright 2026 The RGD Authors.
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

#pragma once

// Command-line front end. Exit codes: 0 success, 1 verification or run
// failure, 2 configuration or usage error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rgd/harness.hpp"
#include "rgd/verify.hpp"

namespace rgd {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

namespace detail {

inline void override_seed(ExperimentConfig& c, std::uint64_t seed) {
  c.dataset.seed = seed;
  c.model.init_seed = seed;
  c.train.seed = seed;
}

inline int cmd_train(const std::string& path, std::optional<std::uint64_t> seed,
                     const std::string& dump_dir, std::ostream& out) {
  ExperimentConfig c = load_experiment(path);
  if (seed) override_seed(c, *seed);
  const ExperimentData data = prepare_data(c.dataset);
  if (!dump_dir.empty()) {
    const std::filesystem::path dir(dump_dir);
    export_dataset(data.train, dir / "train");
    if (data.holdout) export_dataset(*data.holdout, dir / "holdout");
    if (data.test) export_dataset(*data.test, dir / "test");
  }
  const auto r = run_experiment(c, data);
  write_outputs(c, r);
  out << summary_to_json(c, r.summary).dump(2) << '\n';
  return kExitOk;
}

inline int cmd_sweep(const std::string& path, std::optional<std::uint64_t> seed,
                     std::ostream& out) {
  SweepSpec s = load_sweep(path);
  if (seed) override_seed(s.base, *seed);
  const auto r = sweep(s);
  const std::string table = sweep_table_csv(r);
  if (!s.output.empty()) write_text_file(s.output, table);
  out << table;
  if (!r.best) {
    out << "no grid point completed\n";
    return kExitFailure;
  }
  out << "selected:";
  for (const auto& [name, v] : r.grid[*r.best].point.params)
    out << ' ' << name << '=' << format_double(v);
  out << '\n';
  return kExitOk;
}

inline int cmd_oracle(verify::OracleOptions o, std::size_t family_trials,
                      std::ostream& out) {
  const auto kl = verify::kl_oracle_suite(o);
  const auto fam = verify::family_oracle_suite(o, family_trials);
  out << kl.render() << fam.render();
  out << "time " << verify::detail::fmt("%.2f", kl.seconds + fam.seconds) << " s\n";
  return kl.passed() && fam.passed() ? kExitOk : kExitFailure;
}

inline int cmd_gradcheck(const verify::GradcheckOptions& o, std::ostream& out) {
  const auto rep = verify::gradcheck_suite(o);
  out << rep.render();
  return rep.passed() ? kExitOk : kExitFailure;
}

inline int cmd_report(const std::vector<std::string>& paths, std::ostream& out) {
  std::vector<std::pair<std::string, Trace>> traces;
  for (const auto& p : paths) traces.emplace_back(p, import_trace(p));
  out << report_table(traces);
  return kExitOk;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Clipped reweighted gradient descent experiments"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed;
  app.add_option("--seed", seed, "Override every seed in the config or suite");

  std::string config;
  auto* train = app.add_subcommand("train", "Run one experiment");
  train->add_option("config", config, "Experiment config (JSON)")->required();
  std::string dump_dir;
  train->add_option("--dump-data", dump_dir, "Also write the generated splits to this directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "Run a hyperparameter grid");
  sweep_cmd->add_option("config", config, "Sweep config (JSON)")->required();

  verify::OracleOptions oracle_opts;
  std::size_t family_trials = 60;
  auto* oracle = app.add_subcommand("oracle", "DRO solver verification suite");
  oracle->add_option("--n", oracle_opts.n_max, "Largest support size")
      ->check(CLI::Range(2, 1000));
  oracle->add_option("--trials", oracle_opts.trials, "KL instances");
  oracle->add_option("--rho-max", oracle_opts.rho_max, "Largest radius")
      ->check(CLI::NonNegativeNumber);
  oracle->add_option("--family-trials", family_trials, "chi2 and revkl instances");

  verify::GradcheckOptions grad_opts;
  auto* gradcheck = app.add_subcommand("gradcheck", "Model gradient verification suite");
  gradcheck->add_option("--trials", grad_opts.trials, "Trials per model kind");

  std::vector<std::string> traces;
  auto* report = app.add_subcommand("report", "Summarize trace files");
  report->add_option("traces", traces, "Trace files (CSV or JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return detail::cmd_train(config, seed, dump_dir, out);
    if (*sweep_cmd) return detail::cmd_sweep(config, seed, out);
    if (*oracle) {
      if (seed) oracle_opts.seed = *seed;
      return detail::cmd_oracle(oracle_opts, family_trials, out);
    }
    if (*gradcheck) {
      if (seed) grad_opts.seed = *seed;
      return detail::cmd_gradcheck(grad_opts, out);
    }
    if (*report) return detail::cmd_report(traces, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InputError& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TrainingDivergence& e) {
    err << "training diverged: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitConfig;
}

}  // namespace rgd
