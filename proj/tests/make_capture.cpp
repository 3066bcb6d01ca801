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

// Writes a small capture without the attention stream. With "bad_labels"
// one label is outside [0, C).

#include <iostream>
#include <string>

#include "helpers.hpp"

int main(int argc, char** argv) {
  if (argc < 2 || argc > 3) {
    std::cerr << "usage: make_capture <path> [bad_labels]\n";
    return 1;
  }
  vitdiag::CaptureManifest m;
  vitdiag::CaptureStreams s;
  helpers::minimal_streams(2, 8, 4, 3, 2, 1, m, s);
  s.attention.clear();
  m.present_streams = {vitdiag::Stream::tokens, vitdiag::Stream::labels, vitdiag::Stream::pe, vitdiag::Stream::z0};
  if (argc == 3 && std::string(argv[2]) == "bad_labels") std::get<vitdiag::TensorI>(*s.labels).data[1] = 7;
  vitdiag::write_capture(m, s, argv[1]);
  return 0;
}
