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

#include "vitdiag/config.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/plot.hpp"
#include "vitdiag/report.hpp"

using namespace vitdiag;
using doctest::Approx;

TEST_CASE("toml subset values and comments") {
  const auto t = parse_toml("top = 1\n# note\n[a]\nx = true  # trailing\ny = -2.5e-1\nz = \"q # not a comment\"\n");
  CHECK(std::get<std::int64_t>(t.at("").at("top")) == 1);
  CHECK(std::get<bool>(t.at("a").at("x")));
  CHECK(std::get<double>(t.at("a").at("y")) == -0.25);
  CHECK(std::get<std::string>(t.at("a").at("z")) == "q # not a comment");
}

TEST_CASE("malformed toml is a ConfigError") {
  CHECK_THROWS_AS(parse_toml("[a\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("x 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("[a]\nx = 1\nx = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_toml("x = [1, 2]\n"), ConfigError);
}

TEST_CASE("empty config gives defaults with derived seeds") {
  const auto c = config_from_toml("");
  CHECK(c.families == FamilyToggles{});
  CHECK(c.similarity.n_boot == 2000);
  CHECK(c.probe.learning_rate == 1e-2);
  CHECK(c.decoder.learning_rate == 3e-3);
  CHECK(c.split.seed == derive_seed(0, 1));
  CHECK(config_from_toml("[runtime]\nseed = 3\n").probe.seed == derive_seed(3, 2));
  CHECK(config_from_toml("[probe]\nseed = 11\n").probe.seed == 11);
}

TEST_CASE("unknown sections, keys and bad values are rejected") {
  CHECK_THROWS_AS(config_from_toml("[famlies]\nsimilarity = false\n"), ConfigError);
  CHECK_THROWS_AS(config_from_toml("[probe]\nlearnign_rate = 0.1\n"), ConfigError);
  CHECK_THROWS_AS(config_from_toml("[probe]\nlearning_rate = \"fast\"\n"), ConfigError);
  CHECK_THROWS_AS(config_from_toml("[split]\ntrain = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(config_from_toml("[similarity]\nci_level = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(config_from_toml("[controls]\ndecoder_kind = \"diag\"\n"), ConfigError);
}

TEST_CASE("config settings land in their fields and the echo") {
  const auto c = config_from_toml(
      "[families]\nattention = false\n[phase]\nthreshold = 0.03\n[decoder]\nbatch_size = 16\nbias = true\n"
      "[nc_classifier]\nmonitor = \"accuracy\"\n");
  CHECK_FALSE(c.families.attention);
  CHECK(c.phase.threshold == 0.03);
  CHECK(c.decoder.batch_size == 16);
  CHECK(c.decoder_options.bias);
  CHECK(c.nc_classifier.monitor == Monitor::accuracy);
  const auto j = config_to_json(c);
  CHECK(j.at("families").at("attention") == false);
  CHECK(j.at("decoder").at("batch_size") == 16);
  CHECK(j.at("nc_classifier").at("monitor") == "accuracy");
}

TEST_CASE("synth section overrides scenario defaults") {
  const auto s = synth_spec_from_toml("[synth]\nB = 12\nnoise_sigma = 0.5\n", Scenario::noise_floor);
  CHECK(s.B == 12);
  CHECK(s.noise_sigma == 0.5);
  CHECK(s.P == SynthSpec::defaults(Scenario::noise_floor).P);
}

namespace {

AnalysisReport sample_report() {
  AnalysisReport r;
  r.tool_version = "test";
  r.manifest.model_id = "m";
  r.manifest.num_blocks = 4;
  r.manifest.embed_dim = 8;
  r.manifest.num_heads = 2;
  r.manifest.num_patches = 16;
  r.manifest.num_classes = 2;
  r.num_images = 10;
  r.config = config_to_json(config_from_toml(""));
  SimilaritySection s;
  s.raw = MetricSeries::named("raw_similarity");
  s.centered = MetricSeries::named("centered_similarity");
  for (int l = -2; l < 4; ++l) {
    s.raw.push(l, 0.1 * l + 1.0 / 3.0, 0.0, 0.5);
    s.centered.push(l, 0.01 * l, -0.1, 0.1);
  }
  s.raw.n_boot = 2000;
  s.pe_dominance = 0.25;
  s.excluded_images[1] = {3};
  r.similarity = s;
  PhaseSegmentation ph;
  ph.cliff_layers = {-1, 0};
  ph.plateau_start = 0;
  ph.plateau_end = 2;
  ph.plateau_length = 3;
  ph.notes = {"x"};
  r.phase = ph;
  InfoPlaneSection ip;
  for (int l = 0; l < 4; ++l) {
    InfoPlanePoint p;
    p.layer = l;
    p.probe_acc = 0.2 * l;
    p.probe_ci_low = 0.1 * l;
    p.probe_ci_high = 0.3 * l;
    p.infox_self = 1.0 - 0.2 * l;
    p.infox_all = 1.0 - 0.1 * l;
    ip.points.push_back(p);
    ip.probe_val_accuracy[l] = 0.5;
  }
  fill_derived(ip.points);
  ip.pivot.layers = {2};
  ip.regime = RegimeResult{};
  r.info_plane = ip;
  r.correlations.push_back({"ccc_vs_nc2", -0.4, 4, "blocks of m"});
  r.degenerate.push_back({"nc1", 0, "coincident means"});
  r.timing_seconds["total"] = 1.5;
  return r;
}

}  // namespace

TEST_CASE("report json round-trips losslessly") {
  const auto r = sample_report();
  const auto back = report_from_string(report_to_string(r));
  CHECK(back == r);
  CHECK(report_to_json(back) == report_to_json(r));
  CHECK(report_to_string(r).back() == '\n');
}

TEST_CASE("absent families are absent keys") {
  AnalysisReport r = sample_report();
  r.info_plane.reset();
  const auto j = report_to_json(r);
  CHECK_FALSE(j.contains("info_plane"));
  CHECK(j.at("schema_version") == kReportSchemaVersion);
  CHECK_FALSE(report_from_json(j).info_plane.has_value());
}

TEST_CASE("a newer schema version is refused") {
  auto j = report_to_json(sample_report());
  j["schema_version"] = kReportSchemaVersion + 1;
  CHECK_THROWS_AS(report_from_json(j), VersionError);
}

TEST_CASE("svg output for each available figure") {
  const auto plots = report_plots(sample_report());
  REQUIRE_FALSE(plots.empty());
  for (const auto& [name, svg] : plots) {
    CHECK(name.size() > 4);
    CHECK(name.substr(name.size() - 4) == ".svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }
  PlotSpec spec;
  spec.title = "a < b & c";
  spec.lines.push_back(line_from_series(sample_report().similarity->raw, "raw"));
  const auto svg = render_svg(spec);
  CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
}
