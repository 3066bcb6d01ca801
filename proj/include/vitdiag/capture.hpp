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

// Capture container: a ZIP archive with manifest.json plus one NPY array per
// stream and layer. See docs/capture-format.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vitdiag/errors.hpp"
#include "vitdiag/tensor.hpp"
#include "vitdiag/zip.hpp"

namespace vitdiag {

inline constexpr int kCaptureFormatVersion = 1;
inline constexpr double kAttentionRowTolerance = 1e-4;

enum class Stream { tokens, attention, labels, pe, z0 };

std::string to_string(Stream s);
Stream stream_from_string(const std::string& s);

struct CaptureManifest {
  int format_version = kCaptureFormatVersion;
  std::string model_id;
  int num_blocks = 0;   // L
  int embed_dim = 0;    // D
  int num_heads = 0;    // H
  int num_patches = 0;  // P
  int num_classes = 0;  // C
  bool has_cls = true;
  std::set<Stream> present_streams;
  std::string dtype = "f32";
  std::string endianness = "little";
  std::uint64_t seed = 0;
  std::string capture_notes;

  bool has(Stream s) const { return present_streams.count(s) > 0; }
  int num_tokens() const { return num_patches + 1; }

  /// Throws SpecError when a shape field or stream name is invalid.
  void check() const;

  bool operator==(const CaptureManifest&) const = default;
};

std::string manifest_to_json(const CaptureManifest& m);
CaptureManifest manifest_from_json(const std::string& text);

/// Arrays handed to write_capture. Token layers -1..L-1 live in `tokens`;
/// layer -2 (pre-PE embeddings) is the `z0` stream.
struct CaptureStreams {
  std::map<int, AnyTensor> tokens;
  std::map<int, AnyTensor> attention;
  std::optional<AnyTensor> labels;
  std::optional<AnyTensor> pe;
  std::optional<AnyTensor> z0;
};

/// `tokens_{layer}.npy` with negative layers spelled m1, m2.
std::string tokens_entry(int layer);
std::string attention_entry(int layer);

void write_capture(const CaptureManifest& manifest, const CaptureStreams& streams, const std::filesystem::path& path);

/// An opened capture. Streams are loaded and validated one array at a time,
/// so analysis of a single layer keeps only that layer resident. Immutable
/// after construction; safe to share between threads.
class Capture {
 public:
  explicit Capture(const std::filesystem::path& path);

  const CaptureManifest& manifest() const { return manifest_; }
  const std::filesystem::path& path() const { return archive_.path(); }

  /// Number of images B, read from array headers only.
  int num_images() const { return num_images_; }

  /// Token layers present in the archive, ascending (z0 reported as -2).
  std::vector<int> token_layers() const;
  bool has_tokens(int layer) const;

  LayerTokens tokens(int layer) const;
  AttentionStack attention(int layer) const;
  Labels labels() const;
  /// Positional encodings, (P+1, D) or (P, D).
  TensorF pe() const;
  LayerTokens z0() const { return tokens(-2); }

  /// Loads and validates every array; throws the first violation.
  void validate_all() const;

 private:
  TensorF load_f32(const std::string& entry, const std::string& stream) const;

  zip::Reader archive_;
  CaptureManifest manifest_;
  int num_images_ = 0;
};

inline Capture read_capture(const std::filesystem::path& path) { return Capture(path); }

}  // namespace vitdiag
