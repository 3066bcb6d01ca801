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

// Minimal ZIP container support: stored entries on write, stored or deflated
// entries on read, Zip64 in both directions.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace vitdiag::zip {

struct Entry {
  std::string name;
  std::uint16_t method = 0;  // 0 stored, 8 deflate
  std::uint32_t crc32 = 0;
  std::uint64_t compressed_size = 0;
  std::uint64_t uncompressed_size = 0;
  std::uint64_t local_header_offset = 0;
};

/// Read-only view of an archive. Entry payloads are read on demand; the
/// reader holds no open file handle and is safe to share across threads.
class Reader {
 public:
  explicit Reader(std::filesystem::path path);

  const std::vector<Entry>& entries() const { return entries_; }
  const Entry* find(const std::string& name) const;

  std::vector<char> read(const Entry& entry) const;
  std::vector<char> read(const std::string& name) const;

  /// First `n` uncompressed bytes (or fewer if the entry is shorter).
  std::vector<char> read_prefix(const Entry& entry, std::size_t n) const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::uint64_t data_offset(std::ifstream& in, const Entry& entry) const;

  std::filesystem::path path_;
  std::uint64_t file_size_ = 0;
  std::vector<Entry> entries_;
};

/// Writes an archive to `path` via a temporary sibling file that is renamed
/// into place by finish(). Entries are stored uncompressed with a fixed
/// timestamp so identical inputs give identical bytes.
class Writer {
 public:
  explicit Writer(std::filesystem::path path);
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  void add(const std::string& name, const void* data, std::size_t size);
  void add(const std::string& name, const std::vector<char>& bytes) { add(name, bytes.data(), bytes.size()); }
  void finish();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::ofstream out_;
  std::vector<Entry> entries_;
  std::uint64_t offset_ = 0;
  bool finished_ = false;
};

std::uint32_t crc32(const void* data, std::size_t size);

}  // namespace vitdiag::zip
