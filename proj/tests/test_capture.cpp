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

#include <nlohmann/json.hpp>

#include "helpers.hpp"
#include "vitdiag/capture.hpp"
#include "vitdiag/npy.hpp"
#include "vitdiag/zip.hpp"

using namespace vitdiag;

TEST_CASE("npy encode and decode round-trip every dtype") {
  TensorF f({2, 3}, {1.f, -2.f, 3.5f, 0.f, 1e-30f, -7.f});
  TensorI i({4}, {0, 1, -5, 1LL << 40});
  TensorD d({1, 2}, {0.1, -0.2});
  CHECK(std::get<TensorF>(npy::decode(npy::encode(f), "x")) == f);
  CHECK(std::get<TensorI>(npy::decode(npy::encode(i), "x")) == i);
  CHECK(std::get<TensorD>(npy::decode(npy::encode(d), "x")) == d);
}

TEST_CASE("npy header is 64-byte aligned and little-endian f32") {
  const auto bytes = npy::encode(TensorF({2, 2}, {1, 2, 3, 4}));
  const auto h = npy::parse_header(bytes.data(), bytes.size());
  CHECK(h.descr == "<f4");
  CHECK(h.data_offset % 64 == 0);
  CHECK(h.shape == std::vector<std::int64_t>{2, 2});
  CHECK(bytes.size() == h.data_offset + 16);
}

TEST_CASE("zip stored entries round-trip with matching crc") {
  const auto path = helpers::temp_path("a.zip");
  {
    zip::Writer w(path);
    w.add("x.bin", std::vector<char>{'a', 'b', 'c'});
    w.add("empty", std::vector<char>{});
    w.finish();
  }
  zip::Reader r(path);
  REQUIRE(r.entries().size() == 2);
  CHECK(r.read("x.bin") == std::vector<char>{'a', 'b', 'c'});
  CHECK(r.read("empty").empty());
  CHECK(r.find("x.bin")->crc32 == zip::crc32("abc", 3));
  CHECK(zip::crc32("123456789", 9) == 0xCBF43926u);
}

TEST_CASE("minimal capture round-trips bit-exactly") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  const auto path = helpers::temp_path("cap.zip");
  write_capture(m, s, path);
  const Capture c(path);
  CHECK(c.manifest() == m);
  CHECK(c.num_images() == 4);
  CHECK(c.token_layers() == std::vector<int>{-2, -1, 0, 1});
  for (int l = -1; l < 2; ++l) CHECK(c.tokens(l).data == std::get<TensorF>(s.tokens.at(l)));
  CHECK(c.z0().data == std::get<TensorF>(*s.z0));
  for (int l = 0; l < 2; ++l) CHECK(c.attention(l).data == std::get<TensorF>(s.attention.at(l)));
  CHECK(c.labels() == Labels{0, 1, 0, 1});
  CHECK(c.pe() == std::get<TensorF>(*s.pe));
  CHECK_NOTHROW(c.validate_all());
}

TEST_CASE("manifest json round-trip") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  m.capture_notes = "eval mode";
  m.seed = 18446744073709551615ULL;
  CHECK(manifest_from_json(manifest_to_json(m)) == m);
}

TEST_CASE("declared attention stream without arrays is a ShapeError") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  s.attention.clear();
  CHECK_THROWS_AS(write_capture(m, s, helpers::temp_path("bad.zip")), ShapeError);
}

TEST_CASE("tokens with the wrong width are a ShapeError naming the stream") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  s.tokens[0] = TensorF({4, 5, 2});
  try {
    write_capture(m, s, helpers::temp_path("bad.zip"));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.stream() == "tokens[0]");
  }
}

TEST_CASE("f64 token tensor is rejected with DtypeError") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  s.tokens[0] = TensorD({4, 5, 3});
  CHECK_THROWS_AS(write_capture(m, s, helpers::temp_path("bad.zip")), DtypeError);
}

TEST_CASE("attention row sum of 0.5 is located at layer 0 head 1 row 3") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  auto& a = std::get<TensorF>(s.attention[0]);
  const std::size_t n = 5;
  const std::size_t row = ((0 * 2 + 1) * n + 3) * n;  // image 0, head 1, row 3
  for (std::size_t j = 0; j < n; ++j) a.data[row + j] = j == 0 ? 0.5f : 0.f;
  const auto path = helpers::temp_path("corrupt.zip");
  write_capture(m, s, path);
  const Capture c(path);
  try {
    c.attention(0);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.where().layer == 0);
    CHECK(e.where().head == 1);
    CHECK(e.where().row == 3);
  }
  CHECK_THROWS_AS(c.validate_all(), ValidationError);
}

TEST_CASE("non-finite tokens fail validation") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  std::get<TensorF>(s.tokens[1]).data[7] = std::numeric_limits<float>::quiet_NaN();
  const auto path = helpers::temp_path("nan.zip");
  write_capture(m, s, path);
  CHECK_THROWS_AS(Capture(path).tokens(1), ValidationError);
}

TEST_CASE("labels outside [0, C) fail validation") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 3, 2, m, s);
  std::get<TensorI>(*s.labels).data[2] = 5;
  const auto path = helpers::temp_path("labels.zip");
  write_capture(m, s, path);
  CHECK_THROWS_AS(Capture(path).labels(), ValidationError);
}

TEST_CASE("unknown format version is a VersionError") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  const auto good = helpers::temp_path("v1.zip");
  write_capture(m, s, good);
  zip::Reader r(good);
  const auto path = helpers::temp_path("v2.zip");
  {
    zip::Writer w(path);
    for (const auto& e : r.entries()) {
      auto bytes = r.read(e);
      if (e.name == "manifest.json") {
        auto j = nlohmann::json::parse(std::string(bytes.begin(), bytes.end()));
        j["format_version"] = 2;
        const std::string text = j.dump();
        bytes.assign(text.begin(), text.end());
      }
      w.add(e.name, bytes);
    }
    w.finish();
  }
  CHECK_THROWS_AS(Capture{path}, VersionError);
}

TEST_CASE("truncated file is an IoError") {
  CaptureManifest m;
  CaptureStreams s;
  helpers::minimal_streams(2, 4, 4, 3, 2, 2, m, s);
  const auto path = helpers::temp_path("full.zip");
  write_capture(m, s, path);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto cut = helpers::temp_path("cut.zip");
  std::ofstream(cut, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  CHECK_THROWS_AS(Capture{cut}, IoError);
  CHECK_THROWS_AS(Capture{helpers::temp_path("missing.zip")}, IoError);
}

TEST_CASE("entry names encode negative layers") {
  CHECK(tokens_entry(-1) == "tokens_m1.npy");
  CHECK(tokens_entry(3) == "tokens_3.npy");
  CHECK(attention_entry(0) == "attn_0.npy");
}
