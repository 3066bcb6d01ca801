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

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/pipeline.hpp"
#include "vitdiag/synthetic.hpp"

using namespace vitdiag;
using doctest::Approx;

namespace {

std::filesystem::path small_capture(const std::string& name, std::uint64_t seed = 1) {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(4, 40, 6, 5, 2, 2, m, s, seed);
  const auto path = helpers::temp_path(name);
  write_capture(m, s, path);
  return path;
}

AnalysisConfig fast_config(const std::string& extra = "") {
  return config_from_toml("[similarity]\nn_boot = 50\n[probe]\nmax_epochs = 20\n[decoder]\nmax_epochs = 10\n"
                          "batch_size = 16\n[nc_classifier]\nmax_epochs = 20\n" + extra);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("missing streams are reported by family and stream") {
  CaptureManifest m;
  m.present_streams = {Stream::tokens, Stream::labels, Stream::z0};
  try {
    require_streams(m, config_from_toml(""));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.family() == "attention-graph");
    CHECK(e.stream() == "attention");
  }
  CHECK_NOTHROW(require_streams(m, config_from_toml("[families]\nattention = false\n")));
}

TEST_CASE("three-phase capture segments exactly as constructed") {
  const auto spec = SynthSpec::defaults(Scenario::three_phase_similarity);
  const auto path = helpers::temp_path("three.vdc");
  const auto truth = generate(spec, path).expected;
  const auto cfg = fast_config(
      "[families]\nneural_collapse = false\ninfo_plane = false\nattention = false\ncontrols = false\n");
  const auto run = analyze(read_capture(path), cfg);
  REQUIRE(run.report.phase.has_value());
  const auto& ph = *run.report.phase;
  CHECK(ph.cliff_layers == truth.at("cliff_layers").get<std::vector<int>>());
  CHECK(ph.plateau_start == truth.at("plateau_start").get<int>());
  CHECK(ph.plateau_end == truth.at("plateau_end").get<int>());
  CHECK(ph.plateau_length == truth.at("plateau_length").get<int>());
  CHECK(ph.climb_start == truth.at("climb_start").get<int>());
  CHECK_FALSE(run.report.neural_collapse.has_value());
  CHECK_FALSE(run.report.attention.has_value());
}

TEST_CASE("analysis is deterministic and independent of the worker count") {
  const auto path = small_capture("det.vdc");
  const auto cap = read_capture(path);
  auto one = fast_config("[runtime]\nworkers = 1\n");
  auto three = fast_config("[runtime]\nworkers = 3\n");
  auto a = analyze(cap, one).report;
  auto b = analyze(cap, three).report;
  a.timing_seconds.clear();
  b.timing_seconds.clear();
  CHECK(report_to_string(a) == report_to_string(b));
  CHECK(a.neural_collapse.has_value());
  CHECK(a.info_plane.has_value());
  CHECK(a.attention.has_value());
  CHECK(a.controls.has_value());
  CHECK(a.info_plane->points.size() == 4);
}

TEST_CASE("written outputs are byte-identical across runs apart from timing") {
  const auto path = small_capture("bytes.vdc", 2);
  const auto cap = read_capture(path);
  const auto cfg = fast_config();
  const auto d1 = helpers::temp_path("out1"), d2 = helpers::temp_path("out2");
  write_outputs(analyze(cap, cfg), d1);
  write_outputs(analyze(cap, cfg), d2);
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(d1)) {
    const auto name = e.path().filename();
    ++files;
    if (name == "report.json") {
      auto r1 = report_from_string(slurp(e.path())), r2 = report_from_string(slurp(d2 / name));
      r1.timing_seconds.clear();
      r2.timing_seconds.clear();
      CHECK(report_to_string(r1) == report_to_string(r2));
    } else {
      CHECK_MESSAGE(slurp(e.path()) == slurp(d2 / name), name.string());
    }
  }
  CHECK(std::filesystem::exists(d1 / "training_artifacts.zip"));
  CHECK(std::filesystem::exists(d1 / "centered_similarity.csv"));
  CHECK(files > 10);
}

TEST_CASE("series csv layout") {
  auto s = MetricSeries::named("x");
  s.push(-1, 0.5, 0.25, 0.75);
  s.push(0, 1.0 / 3.0, 0.0, 1.0);
  CHECK(series_csv(s) ==
        "layer,value,ci_low,ci_high\n-1,0.5,0.25,0.75\n0,0.33333333333333331,0,1\n");
  auto t = MetricSeries::named("y");
  t.push(2, 1.0);
  CHECK(series_csv(t) == "layer,value,ci_low,ci_high\n2,1,,\n");
}

TEST_CASE("controls layer outside the blocks is a ConfigError") {
  const auto cap = read_capture(small_capture("ctl.vdc"));
  CHECK_THROWS_AS(run_controls(cap, fast_config("[controls]\nlayer = 9\n")), ConfigError);
}

TEST_CASE("atomic text write replaces the target") {
  const auto p = helpers::temp_path("a.txt");
  write_text_atomic(p, "one");
  write_text_atomic(p, "two");
  CHECK(slurp(p) == "two");
}
