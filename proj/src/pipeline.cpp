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

#include "vitdiag/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

#include "vitdiag/attention_graph.hpp"
#include "vitdiag/decoder.hpp"
#include "vitdiag/errors.hpp"
#include "vitdiag/info_plane.hpp"
#include "vitdiag/neural_collapse.hpp"
#include "vitdiag/npy.hpp"
#include "vitdiag/phase.hpp"
#include "vitdiag/plot.hpp"
#include "vitdiag/probe.hpp"
#include "vitdiag/similarity.hpp"
#include "vitdiag/stats.hpp"
#include "vitdiag/zip.hpp"

#ifndef VITDIAG_VERSION
#define VITDIAG_VERSION "0.0.0"
#endif

namespace vitdiag {
namespace {

using Clock = std::chrono::steady_clock;

struct Job {
  Job(std::string s, std::function<void()> f) : stage(std::move(s)), fn(std::move(f)) {}

  std::string stage;
  std::function<void()> fn;
  std::exception_ptr error;
  double seconds = 0.0;
};

void run_jobs(std::vector<Job>& jobs, int workers) {
  if (workers <= 0) workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min<int>(workers, static_cast<int>(jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto t0 = Clock::now();
      try {
        jobs[i].fn();
      } catch (...) {
        jobs[i].error = std::current_exception();
      }
      jobs[i].seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  // Report the first failure in job order so the error is deterministic.
  for (const auto& j : jobs) {
    if (!j.error) continue;
    std::string what = "unknown error";
    try {
      std::rethrow_exception(j.error);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    throw StageError(j.stage, j.error, what);
  }
}

std::string message(const std::exception& e) { return e.what(); }

struct DegenerateLog {
  std::mutex mu;
  std::vector<DegenerateEntry> entries;

  void add(std::string metric, std::optional<int> layer, std::string reason) {
    std::lock_guard lock(mu);
    entries.push_back({std::move(metric), layer, std::move(reason)});
  }
};

template <typename F>
bool guarded(DegenerateLog& log, const std::string& metric, std::optional<int> layer, F&& fn) {
  try {
    fn();
    return true;
  } catch (const DegenerateInputError& e) {
    log.add(metric, layer, message(e));
  } catch (const ConvergenceError& e) {
    log.add(metric, layer, message(e));
  }
  return false;
}

struct SimilaritySlot {
  std::optional<BootstrapCI> raw, centered;
  std::vector<int> excluded;
};

struct ProbeSlot {
  std::optional<ProbeResult> probe;
  std::optional<ProbeResult> classifier;  // regularized probe for NC3 and NC4
  std::optional<double> nc1, nc2, nc3, nc4;
  std::vector<int> nc3_excluded;
};

struct DecoderSlot {
  std::optional<DecoderResult> result;
  std::optional<double> infox;
};

std::vector<int> blocks(const CaptureManifest& m) {
  std::vector<int> v;
  for (int l = 0; l < m.num_blocks; ++l) v.push_back(l);
  return v;
}

TensorD to_tensor(const Eigen::MatrixXd& m) {
  const RowMatrixXd r = m;
  return TensorD({r.rows(), r.cols()}, std::vector<double>(r.data(), r.data() + r.size()));
}

TensorD to_tensor(const std::vector<double>& v) {
  return TensorD({static_cast<std::int64_t>(v.size())}, v);
}

int resolve_layer(int layer, int num_blocks) { return layer < 0 ? num_blocks + layer : layer; }

}  // namespace

void require_streams(const CaptureManifest& m, const AnalysisConfig& c) {
  const auto& f = c.families;
  auto need = [&](bool enabled, const char* family, Stream s) {
    if (enabled && !m.has(s)) throw ConfigError(family, to_string(s));
  };
  need(f.similarity, "similarity-geometry", Stream::tokens);
  need(f.phase, "phase-analysis", Stream::tokens);
  need(f.phase, "phase-analysis", Stream::z0);
  need(f.neural_collapse, "neural-collapse", Stream::tokens);
  need(f.neural_collapse, "neural-collapse", Stream::labels);
  need(f.info_plane, "info-plane", Stream::tokens);
  need(f.info_plane, "info-plane", Stream::labels);
  need(f.info_plane, "info-plane", Stream::z0);
  need(f.attention, "attention-graph", Stream::attention);
  need(f.controls, "controls", Stream::tokens);
  need(f.controls, "controls", Stream::labels);
  need(f.controls, "controls", Stream::z0);
}

ControlsSection run_controls(const Capture& capture, const AnalysisConfig& c) {
  const auto& m = capture.manifest();
  ControlsSection out;
  out.layer = resolve_layer(c.controls.layer, m.num_blocks);
  if (out.layer < 0 || out.layer >= m.num_blocks) throw ConfigError("[controls] layer is outside the capture's blocks");
  out.decoder_kind = to_string(c.controls.decoder_kind);
  const Labels labels = capture.labels();
  const Split split = make_split(labels, m.num_classes, c.split);

  std::vector<Job> jobs;
  jobs.emplace_back(Job{"controls", [&] {
                    const auto t = capture.tokens(out.layer);
                    ProbeConfig cfg = c.probe;
                    cfg.seed = derive_seed(c.probe.seed, 0x636f6e74ULL, 1);
                    out.random_labels = control_random_labels(t.cls_features(), labels, m.num_classes, split, cfg);
                  }});
  jobs.emplace_back(Job{"controls", [&] {
                    const auto t = capture.tokens(out.layer);
                    ProbeConfig cfg = c.decoder;
                    cfg.seed = derive_seed(c.decoder.seed, 0x636f6e74ULL, 2);
                    out.permuted_targets = control_permuted_targets(t, capture.z0(), c.controls.decoder_kind, split, cfg);
                  }});
  run_jobs(jobs, c.runtime.workers);
  return out;
}

AnalysisRun analyze(const Capture& capture, const AnalysisConfig& c) {
  const auto t_start = Clock::now();
  c.check();
  const CaptureManifest& m = capture.manifest();
  require_streams(m, c);
  const auto& fam = c.families;
  const std::vector<int> block_layers = blocks(m);
  const std::uint64_t seed = c.runtime.seed;

  DegenerateLog log;
  std::vector<Job> jobs;

  // Similarity over every token layer present (z0, z0+PE, blocks).
  const bool want_similarity = fam.similarity || fam.phase;
  std::vector<int> sim_layers;
  if (want_similarity) sim_layers = capture.token_layers();
  std::map<int, SimilaritySlot> sim;
  for (int l : sim_layers) sim[l];
  for (int l : sim_layers) {
    jobs.emplace_back(Job{"similarity-geometry", [&, l] {
                      const auto t = capture.tokens(l);
                      auto& slot = sim.at(l);
                      guarded(log, "raw_similarity", l, [&] {
                        const auto s = raw_similarity(t, c.similarity.include_cls);
                        slot.raw = bootstrap_ci(s.per_image, c.similarity.n_boot, c.similarity.ci_level,
                                                derive_seed(seed, 0x726177ULL, static_cast<std::uint64_t>(l + 2)));
                      });
                      guarded(log, "centered_similarity", l, [&] {
                        const auto s = centered_similarity(t, c.similarity.include_cls);
                        slot.excluded = s.excluded_images;
                        slot.centered = bootstrap_ci(s.per_image, c.similarity.n_boot, c.similarity.ci_level,
                                                     derive_seed(seed, 0x63656eULL, static_cast<std::uint64_t>(l + 2)));
                      });
                    }});
  }

  // Probes feed both the info plane and the NC classifier.
  const bool want_probe = fam.neural_collapse || fam.info_plane;
  Labels labels;
  std::optional<Split> split;
  if (want_probe || fam.controls) {
    labels = capture.labels();
    split = make_split(labels, m.num_classes, c.split);
  }
  std::map<int, ProbeSlot> probes;
  std::map<int, DecoderSlot> dec_self, dec_all;
  if (want_probe) {
    for (int l : block_layers) probes[l];
    for (int l : block_layers) {
      jobs.emplace_back(Job{"probe", [&, l] {
                        const auto t = capture.tokens(l);
                        const Eigen::MatrixXd x = t.cls_features();
                        ProbeConfig cfg = c.probe;
                        cfg.seed = derive_seed(c.probe.seed, static_cast<std::uint64_t>(l));
                        auto& slot = probes.at(l);
                        slot.probe = train_probe(x, labels, m.num_classes, *split, cfg);
                        if (!fam.neural_collapse) return;
                        const auto stats = class_statistics(x, labels, m.num_classes, c.neural_collapse.chunk_rows);
                        guarded(log, "nc1", l, [&] { slot.nc1 = nc1(stats); });
                        guarded(log, "nc2", l, [&] { slot.nc2 = nc2(stats); });
                        ProbeConfig nc_cfg = c.nc_classifier;
                        nc_cfg.seed = derive_seed(c.nc_classifier.seed, static_cast<std::uint64_t>(l));
                        slot.classifier = train_probe(x, labels, m.num_classes, *split, nc_cfg);
                        const auto& w = slot.classifier->weights;
                        guarded(log, "nc3", l, [&] {
                          const auto r = nc3(stats, w);
                          slot.nc3 = r.value;
                          slot.nc3_excluded = r.excluded_classes;
                        });
                        guarded(log, "nc4", l, [&] { slot.nc4 = nc4(x, w, slot.classifier->bias, stats); });
                      }});
    }
  }
  if (fam.info_plane) {
    for (int l : block_layers) dec_self[l], dec_all[l];
    for (int l : block_layers) {
      for (DecoderKind kind : {DecoderKind::self_only, DecoderKind::all_to_all}) {
        jobs.emplace_back(Job{"info-plane", [&, l, kind] {
                          const auto t = capture.tokens(l);
                          const auto z0 = capture.z0();
                          ProbeConfig cfg = c.decoder;
                          cfg.seed = derive_seed(c.decoder.seed, static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(kind));
                          auto& slot = (kind == DecoderKind::self_only ? dec_self : dec_all).at(l);
                          slot.result = train_decoder(t, z0, kind, *split, cfg, c.decoder_options);
                          guarded(log, kind == DecoderKind::self_only ? "infox_self" : "infox_all", l,
                                  [&] { slot.infox = infox(slot.result->test_mse, slot.result->null_mse); });
                        }});
      }
    }
  }

  std::map<int, std::optional<ChainMetrics>> chains;
  if (fam.attention) {
    for (int l : block_layers) chains[l];
    for (int l : block_layers) {
      jobs.emplace_back(Job{"attention-graph", [&, l] {
                        const auto a = capture.attention(l);
                        guarded(log, "attention_chain", l, [&] {
                          chains.at(l) =
                              chain_metrics(a, c.attention.per_image_chains, c.attention.tol, c.attention.max_iters);
                        });
                      }});
    }
  }

  run_jobs(jobs, c.runtime.workers);

  AnalysisRun run;
  AnalysisReport& r = run.report;
  r.tool_version = VITDIAG_VERSION;
  r.manifest = m;
  r.num_images = capture.num_images();
  r.config = config_to_json(c);
  for (const auto& j : jobs) r.timing_seconds[j.stage] += j.seconds;

  // Similarity and phases.
  auto raw = MetricSeries::named("raw_similarity");
  auto centered = MetricSeries::named("centered_similarity");
  std::map<int, std::vector<int>> excluded;
  for (int l : sim_layers) {
    const auto& s = sim.at(l);
    if (s.raw) raw.push(l, s.raw->mean, s.raw->ci_low, s.raw->ci_high);
    if (s.centered) centered.push(l, s.centered->mean, s.centered->ci_low, s.centered->ci_high);
    if (!s.excluded.empty()) excluded[l] = s.excluded;
  }
  for (auto* s : {&raw, &centered}) {
    s->n_boot = c.similarity.n_boot;
    s->ci_level = c.similarity.ci_level;
  }
  if (fam.similarity) {
    SimilaritySection sec{raw, centered, std::nullopt, excluded};
    if (m.has(Stream::pe) && m.has(Stream::z0))
      guarded(log, "pe_dominance", std::nullopt, [&] { sec.pe_dominance = pe_dominance(capture.pe(), capture.z0()); });
    r.similarity = std::move(sec);
  }
  if (fam.phase) guarded(log, "phase", std::nullopt, [&] { r.phase = segment_phases(centered, c.phase); });

  // Neural collapse.
  if (fam.neural_collapse) {
    NeuralCollapseSection sec;
    sec.nc1 = MetricSeries::named("nc1");
    sec.nc2 = MetricSeries::named("nc2");
    sec.nc3 = MetricSeries::named("nc3");
    sec.nc4 = MetricSeries::named("nc4");
    sec.classifier_source = "nc_classifier";
    for (int l : block_layers) {
      const auto& s = probes.at(l);
      if (s.nc1) sec.nc1.push(l, *s.nc1);
      if (s.nc2) sec.nc2.push(l, *s.nc2);
      if (s.nc3) sec.nc3.push(l, *s.nc3);
      if (s.nc4) sec.nc4.push(l, *s.nc4);
      if (!s.nc3_excluded.empty()) sec.nc3_excluded_classes[l] = s.nc3_excluded;
    }
    r.neural_collapse = std::move(sec);
  }

  // Info plane.
  if (fam.info_plane) {
    InfoPlaneSection sec;
    sec.pivot_drop_min = c.pivot_drop_min;
    sec.regime_thresholds = c.regime;
    for (int l : block_layers) {
      const auto& p = probes.at(l);
      const auto& ds = dec_self.at(l);
      const auto& da = dec_all.at(l);
      sec.probe_val_accuracy[l] = p.probe->val_accuracy;
      if (!ds.infox || !da.infox) continue;
      InfoPlanePoint pt;
      pt.layer = l;
      pt.probe_acc = p.probe->test_accuracy;
      pt.probe_ci_low = p.probe->test_ci_low;
      pt.probe_ci_high = p.probe->test_ci_high;
      pt.infox_self = *ds.infox;
      pt.infox_all = *da.infox;
      sec.points.push_back(pt);
    }
    fill_derived(sec.points);
    guarded(log, "pivot", std::nullopt, [&] { sec.pivot = find_pivot(sec.points, c.pivot_drop_min); });
    std::vector<double> scr;
    for (const auto& pt : sec.points) scr.push_back(pt.scrambling);
    guarded(log, "regime", std::nullopt, [&] { sec.regime = classify_regime(scr, c.regime); });
    r.info_plane = std::move(sec);
  }

  // Attention chains.
  if (fam.attention) {
    AttentionSection sec;
    sec.aci = MetricSeries::named("aci");
    sec.aci_raw = MetricSeries::named("aci_raw");
    sec.ccc = MetricSeries::named("ccc");
    sec.per_image_chains = c.attention.per_image_chains;
    for (int l : block_layers) {
      const auto& ch = chains.at(l);
      if (!ch) continue;
      sec.aci.push(l, ch->aci);
      sec.aci_raw.push(l, ch->aci_raw);
      sec.ccc.push(l, ch->ccc);
      if (ch->smoothed) sec.smoothed_layers.push_back(l);
    }
    r.attention = std::move(sec);
  }

  // Cross-metric correlations over the blocks of this capture.
  auto correlate = [&](const std::string& name, const MetricSeries& a, const MetricSeries& b) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (auto v = b.at_layer(a.layer_indices[i])) {
        x.push_back(a.values[i]);
        y.push_back(*v);
      }
    guarded(log, "correlation:" + name, std::nullopt, [&] {
      if (x.size() < 3) throw DegenerateInputError("fewer than three shared layers");
      const auto s = spearman(x, y);
      r.correlations.push_back({name, s.rho, s.n, "blocks of " + m.model_id});
    });
  };
  auto scr_series = MetricSeries::named("scrambling");
  if (r.info_plane)
    for (const auto& pt : r.info_plane->points) scr_series.push(pt.layer, pt.scrambling);
  if (r.attention && r.neural_collapse) {
    correlate("ccc_vs_nc2", r.attention->ccc, r.neural_collapse->nc2);
    correlate("aci_vs_nc2", r.attention->aci, r.neural_collapse->nc2);
  }
  if (r.attention && r.info_plane) correlate("ccc_vs_scrambling", r.attention->ccc, scr_series);

  // Validity controls.
  if (fam.controls) {
    const auto t0 = Clock::now();
    r.controls = run_controls(capture, c);
    r.timing_seconds["controls"] += std::chrono::duration<double>(Clock::now() - t0).count();
  }

  // Training artifacts.
  for (int l : block_layers) {
    const std::string sfx = "_" + std::to_string(l) + ".npy";
    if (auto it = probes.find(l); it != probes.end() && it->second.probe) {
      const auto& p = *it->second.probe;
      run.artifacts.emplace_back("probe_weights" + sfx, npy::encode(to_tensor(p.weights)));
      run.artifacts.emplace_back("probe_bias" + sfx, npy::encode(to_tensor(Eigen::MatrixXd(p.bias.transpose()))));
      run.artifacts.emplace_back("probe_val_accuracy_curve" + sfx, npy::encode(to_tensor(p.val_curve)));
      run.artifacts.emplace_back("probe_train_loss_curve" + sfx, npy::encode(to_tensor(p.train_loss)));
    }
    if (auto it = probes.find(l); it != probes.end() && it->second.classifier) {
      const auto& p = *it->second.classifier;
      run.artifacts.emplace_back("nc_classifier_weights" + sfx, npy::encode(to_tensor(p.weights)));
      run.artifacts.emplace_back("nc_classifier_bias" + sfx, npy::encode(to_tensor(Eigen::MatrixXd(p.bias.transpose()))));
      run.artifacts.emplace_back("nc_classifier_val_loss_curve" + sfx, npy::encode(to_tensor(p.val_loss)));
    }
    for (const auto* dec : {&dec_self, &dec_all}) {
      auto it = dec->find(l);
      if (it == dec->end() || !it->second.result) continue;
      const auto& d = *it->second.result;
      const std::string kind = to_string(d.params.kind);
      run.artifacts.emplace_back("decoder_" + kind + "_F" + sfx, npy::encode(to_tensor(d.params.F)));
      if (d.params.M) run.artifacts.emplace_back("decoder_" + kind + "_M" + sfx, npy::encode(to_tensor(*d.params.M)));
      run.artifacts.emplace_back("decoder_" + kind + "_val_mse_curve" + sfx, npy::encode(to_tensor(d.val_curve)));
    }
  }

  std::sort(log.entries.begin(), log.entries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.metric, a.layer, a.reason) < std::tie(b.metric, b.layer, b.reason);
  });
  r.degenerate = std::move(log.entries);
  r.timing_seconds["total"] = std::chrono::duration<double>(Clock::now() - t_start).count();
  return run;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os << text;
    if (!os.flush()) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string series_csv(const MetricSeries& s) {
  std::string out = "layer,value,ci_low,ci_high\n";
  char buf[64];
  auto cell = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s.layer_indices[i]) + "," + cell(s.values[i]) + ",";
    if (s.ci_low) out += cell((*s.ci_low)[i]);
    out += ",";
    if (s.ci_high) out += cell((*s.ci_high)[i]);
    out += "\n";
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> report_csvs(const AnalysisReport& r) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add = [&](const MetricSeries& s) { out.emplace_back(s.name + ".csv", series_csv(s)); };
  if (r.similarity) {
    add(r.similarity->raw);
    add(r.similarity->centered);
    if (r.similarity->pe_dominance) {
      auto pe = MetricSeries::named("pe_dominance");
      pe.push(-2, *r.similarity->pe_dominance);
      add(pe);
    }
  }
  if (r.neural_collapse) {
    add(r.neural_collapse->nc1);
    add(r.neural_collapse->nc2);
    add(r.neural_collapse->nc3);
    add(r.neural_collapse->nc4);
  }
  if (r.info_plane) {
    auto acc = MetricSeries::named("probe_accuracy");
    auto self = MetricSeries::named("infox_self");
    auto all = MetricSeries::named("infox_all");
    auto scr = MetricSeries::named("scrambling");
    auto gain = MetricSeries::named("task_gain");
    auto drop = MetricSeries::named("infox_drop");
    for (const auto& p : r.info_plane->points) {
      if (p.probe_ci_low && p.probe_ci_high)
        acc.push(p.layer, p.probe_acc, *p.probe_ci_low, *p.probe_ci_high);
      else
        acc.push(p.layer, p.probe_acc);
      self.push(p.layer, p.infox_self);
      all.push(p.layer, p.infox_all);
      scr.push(p.layer, p.scrambling);
      gain.push(p.layer, p.task_gain);
      drop.push(p.layer, p.infox_drop);
    }
    for (const auto* s : {&acc, &self, &all, &scr, &gain, &drop}) add(*s);
  }
  if (r.attention) {
    add(r.attention->aci);
    add(r.attention->aci_raw);
    add(r.attention->ccc);
  }
  return out;
}

void write_plots(const AnalysisReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, svg] : report_plots(report)) write_text_atomic(out_dir / name, svg);
}

void write_outputs(const AnalysisRun& run, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, csv] : report_csvs(run.report)) write_text_atomic(out_dir / name, csv);
  write_plots(run.report, out_dir);
  if (!run.artifacts.empty()) {
    zip::Writer w(out_dir / "training_artifacts.zip");
    for (const auto& [name, data] : run.artifacts) w.add(name, data);
    w.finish();
  }
  write_text_atomic(out_dir / "report.json", report_to_string(run.report));
}

AnalysisReport run_analysis(const std::filesystem::path& capture_path,
                            const std::optional<std::filesystem::path>& config_path,
                            const std::filesystem::path& out_dir) {
  const AnalysisConfig config = config_path ? load_config(*config_path) : config_from_toml("");
  const Capture capture(capture_path);
  auto run = analyze(capture, config);
  write_outputs(run, out_dir);
  return std::move(run.report);
}

}  // namespace vitdiag
