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

#include "vitdiag/capture.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "vitdiag/npy.hpp"

namespace vitdiag {
namespace {

using json = nlohmann::json;

std::string layer_suffix(int layer) {
  return layer < 0 ? "m" + std::to_string(-layer) : std::to_string(layer);
}

std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

const TensorF& require_f32(const AnyTensor& t, const std::string& stream) {
  if (const auto* f = std::get_if<TensorF>(&t)) return *f;
  throw DtypeError("stream '" + stream + "' must be f32, got " + dtype_name(t));
}

void require_shape(const std::vector<std::int64_t>& got, const std::vector<std::int64_t>& want,
                   const std::string& stream) {
  if (got != want) throw ShapeError(stream, "expected shape " + shape_str(want) + ", got " + shape_str(got));
}

}  // namespace

std::string to_string(Stream s) {
  switch (s) {
    case Stream::tokens: return "tokens";
    case Stream::attention: return "attention";
    case Stream::labels: return "labels";
    case Stream::pe: return "pe";
    case Stream::z0: return "z0";
  }
  return "?";
}

Stream stream_from_string(const std::string& s) {
  if (s == "tokens") return Stream::tokens;
  if (s == "attention") return Stream::attention;
  if (s == "labels") return Stream::labels;
  if (s == "pe") return Stream::pe;
  if (s == "z0") return Stream::z0;
  throw SpecError("unknown stream name '" + s + "'");
}

void CaptureManifest::check() const {
  if (num_blocks < 1 || embed_dim < 1 || num_heads < 1 || num_patches < 1 || num_classes < 1)
    throw SpecError("manifest sizes L, D, H, P, C must all be >= 1");
  if (!has_cls) throw SpecError("has_cls must be true in format version 1");
  if (dtype != "f32") throw DtypeError("manifest dtype must be f32, got " + dtype);
  if (endianness != "little") throw SpecError("manifest endianness must be little");
}

std::string manifest_to_json(const CaptureManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["model_id"] = m.model_id;
  j["num_blocks"] = m.num_blocks;
  j["embed_dim"] = m.embed_dim;
  j["num_heads"] = m.num_heads;
  j["num_patches"] = m.num_patches;
  j["num_classes"] = m.num_classes;
  j["has_cls"] = m.has_cls;
  json streams = json::array();
  for (Stream s : m.present_streams) streams.push_back(to_string(s));
  j["present_streams"] = streams;
  j["dtype"] = m.dtype;
  j["endianness"] = m.endianness;
  j["seed"] = m.seed;
  j["capture_notes"] = m.capture_notes;
  return j.dump(2) + "\n";
}

CaptureManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("manifest.json is not valid JSON: ") + e.what());
  }
  if (!j.contains("format_version")) throw VersionError("manifest.json has no format_version");
  const int version = j.at("format_version").get<int>();
  if (version != kCaptureFormatVersion)
    throw VersionError("unsupported capture format_version " + std::to_string(version) + " (reader supports " +
                       std::to_string(kCaptureFormatVersion) + ")");
  CaptureManifest m;
  try {
    m.format_version = version;
    m.model_id = j.value("model_id", "");
    m.num_blocks = j.at("num_blocks").get<int>();
    m.embed_dim = j.at("embed_dim").get<int>();
    m.num_heads = j.at("num_heads").get<int>();
    m.num_patches = j.at("num_patches").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.has_cls = j.value("has_cls", true);
    for (const auto& s : j.at("present_streams")) m.present_streams.insert(stream_from_string(s.get<std::string>()));
    m.dtype = j.value("dtype", "f32");
    m.endianness = j.value("endianness", "little");
    m.seed = j.value("seed", std::uint64_t{0});
    m.capture_notes = j.value("capture_notes", "");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest.json field error: ") + e.what());
  } catch (const SpecError& e) {
    throw ValidationError(e.what());
  }
  try {
    m.check();
  } catch (const SpecError& e) {
    throw ValidationError(e.what());
  }
  return m;
}

std::string tokens_entry(int layer) { return "tokens_" + layer_suffix(layer) + ".npy"; }
std::string attention_entry(int layer) { return "attn_" + layer_suffix(layer) + ".npy"; }

void write_capture(const CaptureManifest& manifest, const CaptureStreams& streams, const std::filesystem::path& path) {
  manifest.check();
  const int L = manifest.num_blocks;
  const std::int64_t N = manifest.num_tokens();
  const std::int64_t D = manifest.embed_dim;
  std::optional<std::int64_t> batch;

  auto check_batch = [&](std::int64_t b, const std::string& stream) {
    if (b < 2) throw ShapeError(stream, "need at least 2 images, got " + std::to_string(b));
    if (batch && *batch != b)
      throw ShapeError(stream, "image count " + std::to_string(b) + " disagrees with " + std::to_string(*batch));
    batch = b;
  };

  auto declared = [&](Stream s, bool present) {
    const std::string name = to_string(s);
    if (manifest.has(s) && !present) throw ShapeError(name, "declared in manifest but no arrays given");
    if (!manifest.has(s) && present) throw ShapeError(name, "arrays given but stream not declared in manifest");
  };
  declared(Stream::tokens, !streams.tokens.empty());
  declared(Stream::attention, !streams.attention.empty());
  declared(Stream::labels, streams.labels.has_value());
  declared(Stream::pe, streams.pe.has_value());
  declared(Stream::z0, streams.z0.has_value());

  std::vector<std::pair<std::string, std::vector<char>>> payload;

  if (manifest.has(Stream::tokens)) {
    for (int l = 0; l < L; ++l)
      if (!streams.tokens.count(l)) throw ShapeError("tokens", "missing block layer " + std::to_string(l));
    for (const auto& [layer, any] : streams.tokens) {
      const std::string name = "tokens[" + std::to_string(layer) + "]";
      if (layer < -1 || layer >= L)
        throw ShapeError(name, layer == -2 ? "layer -2 belongs to the z0 stream" : "layer index out of range");
      const TensorF& t = require_f32(any, name);
      if (t.rank() != 3) throw ShapeError(name, "expected rank 3 (B, P+1, D), got " + shape_str(t.shape));
      check_batch(t.dim(0), name);
      require_shape(t.shape, {t.dim(0), N, D}, name);
      if (t.data.size() != TensorF::element_count(t.shape)) throw ShapeError(name, "data size disagrees with shape");
      payload.emplace_back(tokens_entry(layer), npy::encode(t));
    }
  }
  if (manifest.has(Stream::z0)) {
    const TensorF& t = require_f32(*streams.z0, "z0");
    if (t.rank() != 3) throw ShapeError("z0", "expected rank 3 (B, P+1, D), got " + shape_str(t.shape));
    check_batch(t.dim(0), "z0");
    require_shape(t.shape, {t.dim(0), N, D}, "z0");
    payload.emplace_back("z0.npy", npy::encode(t));
  }
  if (manifest.has(Stream::attention)) {
    for (int l = 0; l < L; ++l)
      if (!streams.attention.count(l)) throw ShapeError("attention", "missing block layer " + std::to_string(l));
    for (const auto& [layer, any] : streams.attention) {
      const std::string name = "attention[" + std::to_string(layer) + "]";
      if (layer < 0 || layer >= L) throw ShapeError(name, "layer index out of range");
      const TensorF& t = require_f32(any, name);
      if (t.rank() != 4) throw ShapeError(name, "expected rank 4 (B, H, N, N), got " + shape_str(t.shape));
      check_batch(t.dim(0), name);
      require_shape(t.shape, {t.dim(0), manifest.num_heads, N, N}, name);
      payload.emplace_back(attention_entry(layer), npy::encode(t));
    }
  }
  if (manifest.has(Stream::labels)) {
    const auto* t = std::get_if<TensorI>(&*streams.labels);
    if (!t) throw DtypeError("stream 'labels' must be i64, got " + dtype_name(*streams.labels));
    if (t->rank() != 1) throw ShapeError("labels", "expected rank 1 (B), got " + shape_str(t->shape));
    check_batch(t->dim(0), "labels");
    payload.emplace_back("labels.npy", npy::encode(*t));
  }
  if (manifest.has(Stream::pe)) {
    const TensorF& t = require_f32(*streams.pe, "pe");
    if (t.rank() != 2 || t.dim(1) != D || (t.dim(0) != N && t.dim(0) != N - 1))
      throw ShapeError("pe", "expected (P+1, D) or (P, D), got " + shape_str(t.shape));
    payload.emplace_back("pe.npy", npy::encode(t));
  }

  zip::Writer writer(path);
  const std::string manifest_text = manifest_to_json(manifest);
  writer.add("manifest.json", manifest_text.data(), manifest_text.size());
  for (const auto& [name, bytes] : payload) writer.add(name, bytes);
  writer.finish();
}

Capture::Capture(const std::filesystem::path& path) : archive_(path) {
  const auto* m = archive_.find("manifest.json");
  if (!m) throw IoError("capture has no manifest.json: " + path.string());
  const auto text = archive_.read(*m);
  manifest_ = manifest_from_json(std::string(text.begin(), text.end()));

  auto need = [&](Stream s, const std::string& entry) {
    if (manifest_.has(s) && !archive_.find(entry))
      throw ValidationError({to_string(s)}, "declared stream is missing entry " + entry);
  };
  for (int l = 0; l < manifest_.num_blocks; ++l) {
    need(Stream::tokens, tokens_entry(l));
    need(Stream::attention, attention_entry(l));
  }
  need(Stream::labels, "labels.npy");
  need(Stream::pe, "pe.npy");
  need(Stream::z0, "z0.npy");

  std::string probe;
  for (const char* candidate : {"labels.npy", "z0.npy", "tokens_0.npy", "attn_0.npy", "tokens_m1.npy"}) {
    if (archive_.find(candidate)) {
      probe = candidate;
      break;
    }
  }
  if (probe.empty()) throw ValidationError("capture contains no per-image arrays");
  const auto* entry = archive_.find(probe);
  auto head = archive_.read_prefix(*entry, 4096);
  npy::Header h = npy::parse_header(head.data(), head.size());
  if (h.data_offset > head.size()) {
    head = archive_.read(*entry);
    h = npy::parse_header(head.data(), head.size());
  }
  if (h.shape.empty()) throw ValidationError({probe}, "array has no batch dimension");
  num_images_ = static_cast<int>(h.shape[0]);
  if (num_images_ < 2) throw ValidationError({probe}, "need at least 2 images, got " + std::to_string(num_images_));
}

std::vector<int> Capture::token_layers() const {
  std::vector<int> layers;
  if (archive_.find("z0.npy")) layers.push_back(-2);
  for (int l = -1; l < manifest_.num_blocks; ++l)
    if (archive_.find(tokens_entry(l))) layers.push_back(l);
  return layers;
}

bool Capture::has_tokens(int layer) const {
  return layer == -2 ? archive_.find("z0.npy") != nullptr : archive_.find(tokens_entry(layer)) != nullptr;
}

TensorF Capture::load_f32(const std::string& entry, const std::string& stream) const {
  const auto* e = archive_.find(entry);
  if (!e) throw IoError("capture has no entry " + entry);
  AnyTensor any = npy::decode(archive_.read(*e), stream);
  require_f32(any, stream);
  return std::get<TensorF>(std::move(any));
}

LayerTokens Capture::tokens(int layer) const {
  const std::string stream = layer == -2 ? "z0" : "tokens";
  LayerTokens out;
  out.layer = layer;
  out.data = load_f32(layer == -2 ? "z0.npy" : tokens_entry(layer), stream);
  const auto& t = out.data;
  const std::vector<std::int64_t> want{num_images_, manifest_.num_tokens(), manifest_.embed_dim};
  if (t.shape != want)
    throw ValidationError({stream, layer}, "expected shape " + shape_str(want) + ", got " + shape_str(t.shape));
  const std::size_t per_image = static_cast<std::size_t>(want[1] * want[2]);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      ValidationError::Location where{stream, layer};
      where.image = static_cast<int>(i / per_image);
      where.row = static_cast<int>((i % per_image) / static_cast<std::size_t>(want[2]));
      throw ValidationError(where, "non-finite token value");
    }
  }
  return out;
}

AttentionStack Capture::attention(int layer) const {
  AttentionStack out;
  out.layer = layer;
  out.data = load_f32(attention_entry(layer), "attention");
  const std::int64_t N = manifest_.num_tokens();
  const std::vector<std::int64_t> want{num_images_, manifest_.num_heads, N, N};
  if (out.data.shape != want)
    throw ValidationError({"attention", layer},
                          "expected shape " + shape_str(want) + ", got " + shape_str(out.data.shape));
  for (Eigen::Index b = 0; b < out.images(); ++b) {
    for (Eigen::Index h = 0; h < out.heads(); ++h) {
      const auto m = out.head(b, h);
      for (Eigen::Index r = 0; r < N; ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < N; ++c) {
          const float v = m(r, c);
          if (!std::isfinite(v) || v < 0.0f || v > 1.0f + 1e-6f) {
            throw ValidationError({"attention", layer, static_cast<int>(h), static_cast<int>(r), static_cast<int>(b)},
                                  "entry " + std::to_string(v) + " outside [0, 1]");
          }
          sum += v;
        }
        if (std::abs(sum - 1.0) > kAttentionRowTolerance) {
          throw ValidationError({"attention", layer, static_cast<int>(h), static_cast<int>(r), static_cast<int>(b)},
                                "row sums to " + std::to_string(sum));
        }
      }
    }
  }
  return out;
}

Labels Capture::labels() const {
  const auto* e = archive_.find("labels.npy");
  if (!e) throw IoError("capture has no labels.npy");
  AnyTensor any = npy::decode(archive_.read(*e), "labels");
  const auto* t = std::get_if<TensorI>(&any);
  if (!t) throw DtypeError("stream 'labels' must be i64, got " + dtype_name(any));
  if (t->shape != std::vector<std::int64_t>{num_images_})
    throw ValidationError({"labels"}, "expected shape (" + std::to_string(num_images_) + ",), got " + shape_str(t->shape));
  Labels out(t->data.size());
  for (std::size_t i = 0; i < t->data.size(); ++i) {
    const auto v = t->data[i];
    if (v < 0 || v >= manifest_.num_classes) {
      ValidationError::Location where{"labels"};
      where.image = static_cast<int>(i);
      throw ValidationError(where, "class index " + std::to_string(v) + " outside [0, " +
                                       std::to_string(manifest_.num_classes) + ")");
    }
    out[i] = static_cast<int>(v);
  }
  return out;
}

TensorF Capture::pe() const {
  TensorF t = load_f32("pe.npy", "pe");
  const std::int64_t N = manifest_.num_tokens();
  if (t.rank() != 2 || t.dim(1) != manifest_.embed_dim || (t.dim(0) != N && t.dim(0) != N - 1))
    throw ValidationError({"pe"}, "expected (P+1, D) or (P, D), got " + shape_str(t.shape));
  for (float v : t.data)
    if (!std::isfinite(v)) throw ValidationError({"pe"}, "non-finite positional encoding value");
  return t;
}

void Capture::validate_all() const {
  for (int layer : token_layers()) (void)tokens(layer);
  if (manifest_.has(Stream::attention))
    for (int l = 0; l < manifest_.num_blocks; ++l) (void)attention(l);
  if (manifest_.has(Stream::labels)) (void)labels();
  if (manifest_.has(Stream::pe)) (void)pe();
}

}  // namespace vitdiag
