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

#include "helpers.hpp"
#include "vitdiag/attention_graph.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/neural_collapse.hpp"
#include "vitdiag/similarity.hpp"
#include "vitdiag/synthetic.hpp"

using namespace vitdiag;
using doctest::Approx;

namespace {

Capture written(const SynthSpec& s, const std::string& name) {
  const auto path = helpers::temp_path(name);
  generate(s, path);
  return read_capture(path);
}

}  // namespace

TEST_CASE("scenario names round-trip") {
  for (auto s : {Scenario::collapsed_etf, Scenario::three_phase_similarity, Scenario::permuted_tokens,
                 Scenario::absorbing_cls, Scenario::uniform_attention, Scenario::noise_floor})
    CHECK(scenario_from_string(to_string(s)) == s);
  CHECK_THROWS_AS(scenario_from_string("etf"), SpecError);
}

TEST_CASE("specs below the scenario minimums are rejected") {
  auto s = SynthSpec::defaults(Scenario::collapsed_etf);
  s.D = s.C - 1;
  CHECK_THROWS_AS(s.check(), SpecError);
  auto t = SynthSpec::defaults(Scenario::three_phase_similarity);
  t.L = 5;
  CHECK_THROWS_AS(synthesize(t), SpecError);
  auto n = SynthSpec::defaults(Scenario::noise_floor);
  n.C = n.B + 1;
  CHECK_THROWS_AS(n.check(), SpecError);
}

TEST_CASE("synthesis is deterministic in the seed") {
  auto s = SynthSpec::defaults(Scenario::permuted_tokens);
  s.B = 16;
  s.seed = 5;
  const auto a = synthesize(s), b = synthesize(s);
  CHECK(a.streams.tokens.at(0) == b.streams.tokens.at(0));
  CHECK(a.truth.expected == b.truth.expected);
  s.seed = 6;
  CHECK(synthesize(s).streams.z0 != a.streams.z0);
}

TEST_CASE("collapsed ETF capture has collapsed final-layer CLS features") {
  auto s = SynthSpec::defaults(Scenario::collapsed_etf);
  s.B = 200;
  const auto cap = written(s, "etf.vdc");
  const auto st = class_statistics(cap.tokens(s.L - 1).cls_features(), cap.labels(), s.C);
  CHECK(nc1(st) < 1e-3);
  CHECK(nc2(st) < 0.05);
  CHECK(nc3(st, st.centered_means()).value == Approx(1.0));
}

TEST_CASE("attention scenarios carry their closed-form values") {
  const auto a = written(SynthSpec::defaults(Scenario::absorbing_cls), "absorbing.vdc");
  CHECK(chain_metrics(a.attention(0)).ccc == Approx(1.0));
  auto us = SynthSpec::defaults(Scenario::uniform_attention);
  const auto m = chain_metrics(written(us, "uniform.vdc").attention(1));
  CHECK(m.ccc == Approx(1.0 / (us.P + 1)));
  CHECK(m.aci == Approx(1.0));
  CHECK(synthesize(us).truth.expected.at("ccc").get<double>() == Approx(1.0 / (us.P + 1)));
}

TEST_CASE("three-phase capture hits its centered-similarity targets") {
  const auto s = SynthSpec::defaults(Scenario::three_phase_similarity);
  const auto truth = synthesize(s).truth;
  const auto cap = written(s, "three.vdc");
  const auto& targets = truth.expected.at("centered_similarity_targets");
  for (auto it = targets.begin(); it != targets.end(); ++it) {
    const double v = centered_similarity(cap.tokens(std::stoi(it.key()))).mean;
    if (it->is_number())
      CHECK(std::abs(v - it->get<double>()) < 0.01);
    else  // centered isotropic tokens sit at -1/(P-1)
      CHECK(std::abs(v + 1.0 / (s.P - 1)) < 0.01);
  }
}

TEST_CASE("generate writes a readable capture and its truth sidecar") {
  auto s = SynthSpec::defaults(Scenario::noise_floor);
  s.B = 8;
  const auto path = helpers::temp_path("noise.vdc");
  generate(s, path);
  const auto cap = read_capture(path);
  CHECK(cap.num_images() == 8);
  CHECK_NOTHROW(cap.validate_all());
  std::ifstream in(truth_path(path));
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("scenario") == "noise_floor");
  CHECK(j.at("spec").at("B") == 8);
  CHECK(j.at("expected").at("scrambling") == 0.0);
}
