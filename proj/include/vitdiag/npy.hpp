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

// NPY (format 1.0 / 2.0) encoding compatible with numpy.save.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vitdiag/tensor.hpp"

namespace vitdiag::npy {

struct Header {
  std::string descr;
  bool fortran_order = false;
  std::vector<std::int64_t> shape;
  std::size_t data_offset = 0;
};

/// Parses the header; throws IoError on malformed input.
Header parse_header(const char* data, std::size_t size);

std::vector<char> encode(const TensorF& t);
std::vector<char> encode(const TensorI& t);
std::vector<char> encode(const TensorD& t);

/// Decodes '<f4', '<f8' and '<i8' arrays. Any other descr raises DtypeError;
/// Fortran-ordered arrays raise ShapeError.
AnyTensor decode(const std::vector<char>& bytes, const std::string& stream);

}  // namespace vitdiag::npy
