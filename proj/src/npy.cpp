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

#include "vitdiag/npy.hpp"

#include <bit>
#include <cstring>

#include "vitdiag/errors.hpp"

static_assert(std::endian::native == std::endian::little, "capture payloads are copied as little-endian");

namespace vitdiag {

std::string dtype_name(const AnyTensor& t) {
  switch (t.index()) {
    case 0: return "f32";
    case 1: return "f64";
    default: return "i64";
  }
}

namespace npy {
namespace {

constexpr char kMagic[] = "\x93NUMPY";
constexpr std::size_t kAlign = 64;

std::string shape_literal(const std::vector<std::int64_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  if (shape.size() == 1) s += ",";
  return s + ")";
}

std::vector<char> encode_raw(const std::string& descr, const std::vector<std::int64_t>& shape, const void* data,
                             std::size_t nbytes) {
  std::string dict = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape_literal(shape) + ", }";
  // Matches numpy: pad with spaces so magic + version + length + dict + '\n'
  // is a multiple of 64; use format 2.0 only if the header overflows u16.
  std::size_t prefix = 6 + 2 + 2;
  std::size_t total = prefix + dict.size() + 1;
  int major = 1;
  if (((total + kAlign - 1) / kAlign) * kAlign - prefix > 0xFFFF) {
    major = 2;
    prefix = 6 + 2 + 4;
    total = prefix + dict.size() + 1;
  }
  const std::size_t padded = ((total + kAlign - 1) / kAlign) * kAlign;
  dict.append(padded - total, ' ');
  dict.push_back('\n');

  std::vector<char> out;
  out.reserve(padded + nbytes);
  out.insert(out.end(), kMagic, kMagic + 6);
  out.push_back(static_cast<char>(major));
  out.push_back(0);
  const std::size_t hlen = dict.size();
  out.push_back(static_cast<char>(hlen & 0xFF));
  out.push_back(static_cast<char>((hlen >> 8) & 0xFF));
  if (major == 2) {
    out.push_back(static_cast<char>((hlen >> 16) & 0xFF));
    out.push_back(static_cast<char>((hlen >> 24) & 0xFF));
  }
  out.insert(out.end(), dict.begin(), dict.end());
  const auto* p = static_cast<const char*>(data);
  out.insert(out.end(), p, p + nbytes);
  return out;
}

std::string quoted_value(const std::string& dict, const std::string& key) {
  const auto k = dict.find("'" + key + "'");
  if (k == std::string::npos) throw IoError("NPY header missing key " + key);
  const auto colon = dict.find(':', k);
  const auto q1 = dict.find_first_of("'\"", colon);
  const auto q2 = dict.find(dict[q1], q1 + 1);
  if (colon == std::string::npos || q1 == std::string::npos || q2 == std::string::npos)
    throw IoError("malformed NPY header value for " + key);
  return dict.substr(q1 + 1, q2 - q1 - 1);
}

}  // namespace

Header parse_header(const char* data, std::size_t size) {
  if (size < 10 || std::memcmp(data, kMagic, 6) != 0) throw IoError("not an NPY array (bad magic)");
  const int major = static_cast<unsigned char>(data[6]);
  std::size_t hlen = 0;
  std::size_t prefix = 0;
  if (major == 1) {
    hlen = static_cast<unsigned char>(data[8]) | (static_cast<unsigned char>(data[9]) << 8);
    prefix = 10;
  } else if (major == 2 || major == 3) {
    if (size < 12) throw IoError("truncated NPY header");
    hlen = 0;
    for (int i = 0; i < 4; ++i) hlen |= static_cast<std::size_t>(static_cast<unsigned char>(data[8 + i])) << (8 * i);
    prefix = 12;
  } else {
    throw IoError("unsupported NPY format version " + std::to_string(major));
  }
  if (prefix + hlen > size) throw IoError("truncated NPY header");
  const std::string dict(data + prefix, hlen);

  Header h;
  h.data_offset = prefix + hlen;
  h.descr = quoted_value(dict, "descr");

  const auto fo = dict.find("'fortran_order'");
  if (fo == std::string::npos) throw IoError("NPY header missing fortran_order");
  const auto fv = dict.find_first_not_of(" :", fo + 15);
  h.fortran_order = dict.compare(fv, 4, "True") == 0;

  const auto sk = dict.find("'shape'");
  const auto open = dict.find('(', sk);
  const auto close = dict.find(')', open);
  if (sk == std::string::npos || open == std::string::npos || close == std::string::npos)
    throw IoError("NPY header missing shape");
  std::string inner = dict.substr(open + 1, close - open - 1);
  std::size_t p = 0;
  while (p < inner.size()) {
    const auto q = inner.find(',', p);
    std::string tok = inner.substr(p, q == std::string::npos ? std::string::npos : q - p);
    tok.erase(0, tok.find_first_not_of(" L"));
    tok.erase(tok.find_last_not_of(" L") + 1);
    if (!tok.empty()) h.shape.push_back(std::stoll(tok));
    if (q == std::string::npos) break;
    p = q + 1;
  }
  return h;
}

std::vector<char> encode(const TensorF& t) {
  return encode_raw("<f4", t.shape, t.data.data(), t.data.size() * sizeof(float));
}

std::vector<char> encode(const TensorI& t) {
  return encode_raw("<i8", t.shape, t.data.data(), t.data.size() * sizeof(std::int64_t));
}

std::vector<char> encode(const TensorD& t) {
  return encode_raw("<f8", t.shape, t.data.data(), t.data.size() * sizeof(double));
}

AnyTensor decode(const std::vector<char>& bytes, const std::string& stream) {
  const Header h = parse_header(bytes.data(), bytes.size());
  if (h.fortran_order) throw ShapeError(stream, "array is Fortran-ordered; captures require C order");
  const std::size_t count = TensorF::element_count(h.shape);

  auto fill = [&](auto tensor) -> AnyTensor {
    using Scalar = typename decltype(tensor)::value_type;
    const std::size_t nbytes = count * sizeof(Scalar);
    if (h.data_offset + nbytes > bytes.size()) throw IoError("truncated NPY payload in stream '" + stream + "'");
    tensor.shape = h.shape;
    tensor.data.resize(count);
    std::memcpy(tensor.data.data(), bytes.data() + h.data_offset, nbytes);
    return tensor;
  };

  if (h.descr == "<f4") return fill(TensorF{});
  if (h.descr == "<f8") return fill(TensorD{});
  if (h.descr == "<i8") return fill(TensorI{});
  throw DtypeError("stream '" + stream + "' has unsupported dtype '" + h.descr + "'");
}

}  // namespace npy
}  // namespace vitdiag
