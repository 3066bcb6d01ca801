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

// vitdiag: analyze, synth, validate and report subcommands.
//
// Exit codes: 0 ok, 2 config error, 3 validation error, 4 numerical error,
// 1 anything else.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "vitdiag/capture.hpp"
#include "vitdiag/config.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/pipeline.hpp"
#include "vitdiag/report.hpp"
#include "vitdiag/synthetic.hpp"

namespace fs = std::filesystem;
using namespace vitdiag;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int exit_code(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const StageError& s) {
    try {
      s.rethrow_inner();
    } catch (...) {
      return exit_code(std::current_exception());
    }
  } catch (const ConfigError&) {
    return 2;
  } catch (const SpecError&) {
    return 2;
  } catch (const ValidationError&) {
    return 3;
  } catch (const ShapeError&) {
    return 3;
  } catch (const DtypeError&) {
    return 3;
  } catch (const VersionError&) {
    return 3;
  } catch (const MissingClassError&) {
    return 3;
  } catch (const NumericalError&) {
    return 4;
  } catch (const ConvergenceError&) {
    return 4;
  } catch (const SingularError&) {
    return 4;
  } catch (const DegenerateInputError&) {
    return 4;
  } catch (const TrainingDivergedError&) {
    return 4;
  } catch (...) {
    return 1;
  }
  return 1;
}

nlohmann::json controls_json(const ControlsSection& c) {
  const auto& r = c.random_labels;
  const auto& p = c.permuted_targets;
  return {{"layer", c.layer},
          {"decoder_kind", c.decoder_kind},
          {"random_labels",
           {{"accuracy", r.accuracy}, {"threshold", r.threshold}, {"applicable", r.applicable}, {"passed", r.passed}}},
          {"permuted_targets",
           {{"mse_permuted", p.mse_permuted},
            {"mse_unpermuted", p.mse_unpermuted},
            {"mse_null", p.mse_null},
            {"retained", p.retained},
            {"vacuous", p.vacuous},
            {"passed", p.passed}}}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layer-wise diagnostics for vision-transformer captures"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(VITDIAG_VERSION));

  auto* analyze_cmd = app.add_subcommand("analyze", "Run every enabled metric family over a capture");
  std::string capture_path;
  std::optional<std::string> config_path;
  std::string out_dir = "vitdiag_out";
  std::optional<double> threshold;
  std::optional<int> workers;
  bool per_image_chains = false;
  analyze_cmd->add_option("capture", capture_path, "Capture archive (.zip)")->required();
  analyze_cmd->add_option("--config", config_path, "TOML configuration");
  analyze_cmd->add_option("--out", out_dir, "Output directory");
  analyze_cmd->add_option("--threshold", threshold, "Plateau threshold on centered similarity");
  analyze_cmd->add_option("--workers", workers, "Worker threads (0 = logical cores)");
  analyze_cmd->add_flag("--per-image-chains", per_image_chains, "Build one attention chain per image");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic capture with known ground truth");
  std::string scenario;
  std::optional<std::string> spec_path;
  std::string synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth_cmd->add_option("scenario", scenario, "collapsed_etf, three_phase_similarity, permuted_tokens, absorbing_cls, uniform_attention, noise_floor")
      ->required();
  synth_cmd->add_option("--spec", spec_path, "TOML file with a [synth] section");
  synth_cmd->add_option("--out", synth_out, "Output capture path (default <scenario>.zip)");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  auto* validate_cmd = app.add_subcommand("validate", "Check a capture and run the validity controls");
  std::string validate_path;
  std::optional<std::string> validate_config;
  validate_cmd->add_option("capture", validate_path, "Capture archive (.zip)")->required();
  validate_cmd->add_option("--config", validate_config, "TOML configuration");

  auto* report_cmd = app.add_subcommand("report", "Re-emit artifacts from an existing report.json");
  std::string report_path;
  bool plots = false;
  std::optional<std::string> report_out;
  report_cmd->add_option("report", report_path, "report.json")->required();
  report_cmd->add_flag("--plots", plots, "Write SVG plots");
  report_cmd->add_option("--out", report_out, "Output directory (default: next to report.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*analyze_cmd) {
      AnalysisConfig config = config_path ? load_config(*config_path) : config_from_toml("");
      if (threshold) config.phase.threshold = *threshold;
      if (workers) config.runtime.workers = *workers;
      if (per_image_chains) config.attention.per_image_chains = true;
      const Capture capture(capture_path);
      const auto run = analyze(capture, config);
      write_outputs(run, out_dir);
      std::cout << (fs::path(out_dir) / "report.json").string() << "\n";
      for (const auto& d : run.report.degenerate)
        std::cerr << "degenerate: " << d.metric << (d.layer ? " layer " + std::to_string(*d.layer) : "") << ": "
                  << d.reason << "\n";
    } else if (*synth_cmd) {
      const Scenario s = scenario_from_string(scenario);
      SynthSpec spec = spec_path ? synth_spec_from_toml(read_file(*spec_path), s) : SynthSpec::defaults(s);
      if (synth_seed) spec.seed = *synth_seed;
      const fs::path out = synth_out.empty() ? fs::path(scenario + ".zip") : fs::path(synth_out);
      generate(spec, out);
      std::cout << out.string() << "\n" << truth_path(out).string() << "\n";
    } else if (*validate_cmd) {
      const AnalysisConfig config = validate_config ? load_config(*validate_config) : config_from_toml("");
      const Capture capture(validate_path);
      capture.validate_all();
      const auto controls = run_controls(capture, config);
      nlohmann::json out = controls_json(controls);
      out["capture"] = validate_path;
      out["valid"] = true;
      std::cout << out.dump(2) << "\n";
      if (!controls.random_labels.passed || !controls.permuted_targets.passed) return 3;
    } else if (*report_cmd) {
      const AnalysisReport report = report_from_string(read_file(report_path));
      const fs::path out = report_out ? fs::path(*report_out) : fs::path(report_path).parent_path();
      if (!out.empty()) fs::create_directories(out);
      for (const auto& [name, csv] : report_csvs(report)) write_text_atomic(out / name, csv);
      if (plots) write_plots(report, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "vitdiag: " << e.what() << "\n";
    return exit_code(std::current_exception());
  }
  return 0;
}
