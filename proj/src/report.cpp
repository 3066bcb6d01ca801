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

#include "vitdiag/report.hpp"

#include "vitdiag/errors.hpp"

namespace vitdiag {

using nlohmann::json;

namespace {

template <typename T, typename F>
json int_map(const std::map<int, T>& m, F&& conv) {
  json j = json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = conv(v);
  return j;
}

template <typename T, typename F>
std::map<int, T> int_map_from(const json& j, F&& conv) {
  std::map<int, T> m;
  for (auto it = j.begin(); it != j.end(); ++it) m[std::stoi(it.key())] = conv(it.value());
  return m;
}

template <typename T>
void put_opt(json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

json to_json_phase(const PhaseSegmentation& p) {
  json j{{"cliff_layers", p.cliff_layers},
         {"plateau_length", p.plateau_length},
         {"threshold", p.threshold},
         {"climb_rise", p.climb_rise},
         {"notes", p.notes}};
  put_opt(j, "plateau_start", p.plateau_start);
  put_opt(j, "plateau_end", p.plateau_end);
  put_opt(j, "climb_start", p.climb_start);
  return j;
}

PhaseSegmentation phase_from(const json& j) {
  PhaseSegmentation p;
  p.cliff_layers = j.at("cliff_layers").get<std::vector<int>>();
  p.plateau_length = j.at("plateau_length").get<int>();
  p.threshold = j.at("threshold").get<double>();
  p.climb_rise = j.at("climb_rise").get<double>();
  p.notes = j.at("notes").get<std::vector<std::string>>();
  p.plateau_start = get_opt<int>(j, "plateau_start");
  p.plateau_end = get_opt<int>(j, "plateau_end");
  p.climb_start = get_opt<int>(j, "climb_start");
  return p;
}

json point_json(const InfoPlanePoint& p) {
  json j{{"layer", p.layer},           {"probe_acc", p.probe_acc},   {"infox_self", p.infox_self},
         {"infox_all", p.infox_all},   {"scrambling", p.scrambling}, {"task_gain", p.task_gain},
         {"infox_drop", p.infox_drop}};
  put_opt(j, "probe_ci_low", p.probe_ci_low);
  put_opt(j, "probe_ci_high", p.probe_ci_high);
  return j;
}

InfoPlanePoint point_from(const json& j) {
  InfoPlanePoint p;
  p.layer = j.at("layer").get<int>();
  p.probe_acc = j.at("probe_acc").get<double>();
  p.infox_self = j.at("infox_self").get<double>();
  p.infox_all = j.at("infox_all").get<double>();
  p.scrambling = j.at("scrambling").get<double>();
  p.task_gain = j.at("task_gain").get<double>();
  p.infox_drop = j.at("infox_drop").get<double>();
  p.probe_ci_low = get_opt<double>(j, "probe_ci_low");
  p.probe_ci_high = get_opt<double>(j, "probe_ci_high");
  return p;
}

json regime_json(const RegimeResult& r) {
  return {{"label", to_string(r.regime)},
          {"first_quartile_mean", r.first_quartile_mean},
          {"middle_half_mean", r.middle_half_mean},
          {"last_quartile_mean", r.last_quartile_mean},
          {"median", r.median},
          {"final_value", r.final_value},
          {"any_negative", r.any_negative}};
}

RegimeResult regime_from(const json& j) {
  RegimeResult r;
  r.regime = regime_from_string(j.at("label").get<std::string>());
  r.first_quartile_mean = j.at("first_quartile_mean").get<double>();
  r.middle_half_mean = j.at("middle_half_mean").get<double>();
  r.last_quartile_mean = j.at("last_quartile_mean").get<double>();
  r.median = j.at("median").get<double>();
  r.final_value = j.at("final_value").get<double>();
  r.any_negative = j.at("any_negative").get<bool>();
  return r;
}

json info_json(const InfoPlaneSection& s) {
  json pts = json::array();
  for (const auto& p : s.points) pts.push_back(point_json(p));
  json j{{"points", pts},
         {"probe_val_accuracy", int_map(s.probe_val_accuracy, [](double v) { return v; })},
         {"pivot", {{"layers", s.pivot.layers}, {"drop_min", s.pivot_drop_min}}},
         {"regime_thresholds",
          {{"escalate_ratio", s.regime_thresholds.escalate_ratio},
           {"final_over_median", s.regime_thresholds.final_over_median},
           {"collapse_ratio", s.regime_thresholds.collapse_ratio}}}};
  if (s.regime) j["regime"] = regime_json(*s.regime);
  return j;
}

InfoPlaneSection info_from(const json& j) {
  InfoPlaneSection s;
  for (const auto& p : j.at("points")) s.points.push_back(point_from(p));
  s.probe_val_accuracy = int_map_from<double>(j.at("probe_val_accuracy"), [](const json& v) { return v.get<double>(); });
  s.pivot.layers = j.at("pivot").at("layers").get<std::vector<int>>();
  s.pivot_drop_min = j.at("pivot").at("drop_min").get<double>();
  if (j.contains("regime")) s.regime = regime_from(j.at("regime"));
  const auto& t = j.at("regime_thresholds");
  s.regime_thresholds.escalate_ratio = t.at("escalate_ratio").get<double>();
  s.regime_thresholds.final_over_median = t.at("final_over_median").get<double>();
  s.regime_thresholds.collapse_ratio = t.at("collapse_ratio").get<double>();
  return s;
}

json controls_json(const ControlsSection& c) {
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

ControlsSection controls_from(const json& j) {
  ControlsSection c;
  c.layer = j.at("layer").get<int>();
  c.decoder_kind = j.at("decoder_kind").get<std::string>();
  const auto& r = j.at("random_labels");
  c.random_labels.accuracy = r.at("accuracy").get<double>();
  c.random_labels.threshold = r.at("threshold").get<double>();
  c.random_labels.applicable = r.at("applicable").get<bool>();
  c.random_labels.passed = r.at("passed").get<bool>();
  const auto& p = j.at("permuted_targets");
  c.permuted_targets.mse_permuted = p.at("mse_permuted").get<double>();
  c.permuted_targets.mse_unpermuted = p.at("mse_unpermuted").get<double>();
  c.permuted_targets.mse_null = p.at("mse_null").get<double>();
  c.permuted_targets.retained = p.at("retained").get<double>();
  c.permuted_targets.vacuous = p.at("vacuous").get<bool>();
  c.permuted_targets.passed = p.at("passed").get<bool>();
  return c;
}

auto int_list = [](const std::vector<int>& v) { return json(v); };
auto int_list_from = [](const json& j) { return j.get<std::vector<int>>(); };

}  // namespace

json series_to_json(const MetricSeries& s) {
  json j{{"name", s.name}, {"layers", s.layer_indices}, {"values", s.values}};
  put_opt(j, "ci_low", s.ci_low);
  put_opt(j, "ci_high", s.ci_high);
  put_opt(j, "n_boot", s.n_boot);
  put_opt(j, "ci_level", s.ci_level);
  return j;
}

MetricSeries series_from_json(const json& j) {
  MetricSeries s;
  s.name = j.at("name").get<std::string>();
  s.layer_indices = j.at("layers").get<std::vector<int>>();
  s.values = j.at("values").get<std::vector<double>>();
  s.ci_low = get_opt<std::vector<double>>(j, "ci_low");
  s.ci_high = get_opt<std::vector<double>>(j, "ci_high");
  s.n_boot = get_opt<int>(j, "n_boot");
  s.ci_level = get_opt<double>(j, "ci_level");
  if (s.values.size() != s.layer_indices.size()) throw ValidationError("series '" + s.name + "': length mismatch");
  return s;
}

json report_to_json(const AnalysisReport& r) {
  json j;
  j["schema_version"] = r.schema_version;
  j["tool_version"] = r.tool_version;
  j["manifest"] = json::parse(manifest_to_json(r.manifest));
  j["num_images"] = r.num_images;
  j["config"] = r.config;
  if (r.similarity) {
    const auto& s = *r.similarity;
    j["similarity"] = {{"raw", series_to_json(s.raw)},
                       {"centered", series_to_json(s.centered)},
                       {"excluded_images", int_map(s.excluded_images, int_list)}};
    put_opt(j["similarity"], "pe_dominance", s.pe_dominance);
  }
  if (r.phase) j["phase"] = to_json_phase(*r.phase);
  if (r.neural_collapse) {
    const auto& n = *r.neural_collapse;
    j["neural_collapse"] = {{"nc1", series_to_json(n.nc1)},
                            {"nc2", series_to_json(n.nc2)},
                            {"nc3", series_to_json(n.nc3)},
                            {"nc4", series_to_json(n.nc4)},
                            {"classifier_source", n.classifier_source},
                            {"nc3_excluded_classes", int_map(n.nc3_excluded_classes, int_list)}};
  }
  if (r.info_plane) j["info_plane"] = info_json(*r.info_plane);
  if (r.attention) {
    const auto& a = *r.attention;
    j["attention"] = {{"aci", series_to_json(a.aci)},
                      {"aci_raw", series_to_json(a.aci_raw)},
                      {"ccc", series_to_json(a.ccc)},
                      {"per_image_chains", a.per_image_chains},
                      {"pi_clamp", a.pi_clamp},
                      {"smoothed_layers", a.smoothed_layers}};
  }
  j["correlations"] = json::array();
  for (const auto& c : r.correlations)
    j["correlations"].push_back({{"name", c.name}, {"rho", c.rho}, {"n", c.n}, {"sample", c.sample}});
  if (r.controls) j["controls"] = controls_json(*r.controls);
  j["degenerate"] = json::array();
  for (const auto& d : r.degenerate) {
    json e{{"metric", d.metric}, {"reason", d.reason}};
    put_opt(e, "layer", d.layer);
    j["degenerate"].push_back(e);
  }
  j["timing_seconds"] = r.timing_seconds;
  return j;
}

AnalysisReport report_from_json(const json& j) {
  AnalysisReport r;
  r.schema_version = j.at("schema_version").get<int>();
  if (r.schema_version != kReportSchemaVersion)
    throw VersionError("report schema version " + std::to_string(r.schema_version) + " is not supported");
  r.tool_version = j.at("tool_version").get<std::string>();
  r.manifest = manifest_from_json(j.at("manifest").dump());
  r.num_images = j.at("num_images").get<int>();
  r.config = j.at("config");
  if (j.contains("similarity")) {
    const auto& s = j.at("similarity");
    SimilaritySection sec;
    sec.raw = series_from_json(s.at("raw"));
    sec.centered = series_from_json(s.at("centered"));
    sec.pe_dominance = get_opt<double>(s, "pe_dominance");
    sec.excluded_images = int_map_from<std::vector<int>>(s.at("excluded_images"), int_list_from);
    r.similarity = std::move(sec);
  }
  if (j.contains("phase")) r.phase = phase_from(j.at("phase"));
  if (j.contains("neural_collapse")) {
    const auto& n = j.at("neural_collapse");
    NeuralCollapseSection sec;
    sec.nc1 = series_from_json(n.at("nc1"));
    sec.nc2 = series_from_json(n.at("nc2"));
    sec.nc3 = series_from_json(n.at("nc3"));
    sec.nc4 = series_from_json(n.at("nc4"));
    sec.classifier_source = n.at("classifier_source").get<std::string>();
    sec.nc3_excluded_classes = int_map_from<std::vector<int>>(n.at("nc3_excluded_classes"), int_list_from);
    r.neural_collapse = std::move(sec);
  }
  if (j.contains("info_plane")) r.info_plane = info_from(j.at("info_plane"));
  if (j.contains("attention")) {
    const auto& a = j.at("attention");
    AttentionSection sec;
    sec.aci = series_from_json(a.at("aci"));
    sec.aci_raw = series_from_json(a.at("aci_raw"));
    sec.ccc = series_from_json(a.at("ccc"));
    sec.per_image_chains = a.at("per_image_chains").get<bool>();
    sec.pi_clamp = a.at("pi_clamp").get<double>();
    sec.smoothed_layers = a.at("smoothed_layers").get<std::vector<int>>();
    r.attention = std::move(sec);
  }
  for (const auto& c : j.at("correlations"))
    r.correlations.push_back({c.at("name").get<std::string>(), c.at("rho").get<double>(), c.at("n").get<int>(),
                              c.at("sample").get<std::string>()});
  if (j.contains("controls")) r.controls = controls_from(j.at("controls"));
  for (const auto& d : j.at("degenerate"))
    r.degenerate.push_back({d.at("metric").get<std::string>(), get_opt<int>(d, "layer"), d.at("reason").get<std::string>()});
  r.timing_seconds = j.at("timing_seconds").get<std::map<std::string, double>>();
  return r;
}

std::string report_to_string(const AnalysisReport& r) { return report_to_json(r).dump(2) + "\n"; }

AnalysisReport report_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("report is not valid JSON: ") + e.what());
  }
  try {
    return report_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report does not match the schema: ") + e.what());
  }
}

}  // namespace vitdiag
