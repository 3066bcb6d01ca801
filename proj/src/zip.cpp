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

#include "vitdiag/zip.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <limits>

#include "vitdiag/errors.hpp"

namespace vitdiag::zip {
namespace {

constexpr std::uint32_t kLocalSig = 0x04034b50;
constexpr std::uint32_t kCentralSig = 0x02014b50;
constexpr std::uint32_t kEndSig = 0x06054b50;
constexpr std::uint32_t kZip64EndSig = 0x06064b50;
constexpr std::uint32_t kZip64LocatorSig = 0x07064b50;
constexpr std::uint32_t k32Max = 0xFFFFFFFFu;
constexpr std::uint16_t k16Max = 0xFFFFu;

// 1980-01-01 00:00:00 in DOS format.
constexpr std::uint16_t kDosTime = 0;
constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;

std::uint16_t get16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t get32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint64_t get64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get32(p)) | (static_cast<std::uint64_t>(get32(p + 4)) << 32);
}

class ByteSink {
 public:
  void u16(std::uint16_t v) {
    buf_.push_back(static_cast<char>(v & 0xFF));
    buf_.push_back(static_cast<char>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void bytes(const std::vector<char>& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  const std::vector<char>& data() const { return buf_; }
  std::size_t size() const { return buf_.size(); }

 private:
  std::vector<char> buf_;
};

void read_exact(std::ifstream& in, std::uint64_t offset, void* dst, std::size_t n, const std::string& what) {
  in.clear();
  in.seekg(static_cast<std::streamoff>(offset));
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (!in || static_cast<std::size_t>(in.gcount()) != n) throw IoError("truncated archive while reading " + what);
}

std::vector<char> inflate_raw(const std::vector<char>& src, std::uint64_t expected, std::size_t limit) {
  std::vector<char> out(static_cast<std::size_t>(std::min<std::uint64_t>(expected, limit)));
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) throw IoError("inflateInit failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(src.data()));
  zs.avail_in = static_cast<uInt>(src.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = Z_OK;
  while (zs.avail_out > 0 && rc == Z_OK) rc = inflate(&zs, Z_NO_FLUSH);
  const auto produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_OK && rc != Z_STREAM_END) throw IoError("corrupt deflate stream");
  out.resize(produced);
  return out;
}

}  // namespace

std::uint32_t crc32(const void* data, std::size_t size) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  const auto* p = static_cast<const Bytef*>(data);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, std::numeric_limits<uInt>::max()));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

Reader::Reader(std::filesystem::path path) : path_(std::move(path)) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path_, ec)) throw IoError("no such capture file: " + path_.string());
  file_size_ = std::filesystem::file_size(path_, ec);
  if (ec) throw IoError("cannot stat " + path_.string());
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_.string());
  if (file_size_ < 22) throw IoError("file too short to be a ZIP archive: " + path_.string());

  const std::uint64_t tail = std::min<std::uint64_t>(file_size_, 22 + 65535);
  std::vector<unsigned char> buf(static_cast<std::size_t>(tail));
  read_exact(in, file_size_ - tail, buf.data(), buf.size(), "end of central directory");
  std::int64_t eocd = -1;
  for (std::int64_t i = static_cast<std::int64_t>(buf.size()) - 22; i >= 0; --i) {
    if (get32(&buf[static_cast<std::size_t>(i)]) == kEndSig) {
      eocd = i;
      break;
    }
  }
  if (eocd < 0) throw IoError("end of central directory not found (truncated or not a ZIP): " + path_.string());
  const unsigned char* e = &buf[static_cast<std::size_t>(eocd)];
  std::uint64_t count = get16(e + 10);
  std::uint64_t cd_size = get32(e + 12);
  std::uint64_t cd_offset = get32(e + 16);
  const std::uint64_t eocd_abs = file_size_ - tail + static_cast<std::uint64_t>(eocd);

  if (count == k16Max || cd_size == k32Max || cd_offset == k32Max) {
    if (eocd_abs < 20) throw IoError("missing Zip64 locator");
    unsigned char loc[20];
    read_exact(in, eocd_abs - 20, loc, sizeof loc, "Zip64 locator");
    if (get32(loc) != kZip64LocatorSig) throw IoError("missing Zip64 locator");
    const std::uint64_t z64 = get64(loc + 8);
    unsigned char rec[56];
    read_exact(in, z64, rec, sizeof rec, "Zip64 end record");
    if (get32(rec) != kZip64EndSig) throw IoError("bad Zip64 end record");
    count = get64(rec + 32);
    cd_size = get64(rec + 40);
    cd_offset = get64(rec + 48);
  }
  if (cd_offset + cd_size > file_size_) throw IoError("central directory extends past end of file");

  std::vector<unsigned char> cd(static_cast<std::size_t>(cd_size));
  read_exact(in, cd_offset, cd.data(), cd.size(), "central directory");
  std::size_t pos = 0;
  entries_.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    if (pos + 46 > cd.size() || get32(&cd[pos]) != kCentralSig) throw IoError("corrupt central directory");
    const unsigned char* h = &cd[pos];
    Entry entry;
    const std::uint16_t flags = get16(h + 8);
    entry.method = get16(h + 10);
    entry.crc32 = get32(h + 16);
    entry.compressed_size = get32(h + 20);
    entry.uncompressed_size = get32(h + 24);
    const std::uint16_t name_len = get16(h + 28);
    const std::uint16_t extra_len = get16(h + 30);
    const std::uint16_t comment_len = get16(h + 32);
    entry.local_header_offset = get32(h + 42);
    if (pos + 46 + name_len + extra_len + comment_len > cd.size()) throw IoError("corrupt central directory");
    entry.name.assign(reinterpret_cast<const char*>(h + 46), name_len);
    if (flags & 0x1) throw IoError("encrypted entries are not supported: " + entry.name);

    const unsigned char* x = h + 46 + name_len;
    std::size_t xp = 0;
    while (xp + 4 <= extra_len) {
      const std::uint16_t id = get16(x + xp);
      const std::uint16_t sz = get16(x + xp + 2);
      if (id == 0x0001) {
        std::size_t q = xp + 4;
        auto take = [&](std::uint64_t& field) {
          if (field == k32Max && q + 8 <= xp + 4 + sz) {
            field = get64(x + q);
            q += 8;
          }
        };
        take(entry.uncompressed_size);
        take(entry.compressed_size);
        take(entry.local_header_offset);
      }
      xp += 4 + sz;
    }
    if (entry.method != 0 && entry.method != 8)
      throw IoError("unsupported compression method " + std::to_string(entry.method) + " for " + entry.name);
    entries_.push_back(std::move(entry));
    pos += 46 + name_len + extra_len + comment_len;
  }
}

const Entry* Reader::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

std::uint64_t Reader::data_offset(std::ifstream& in, const Entry& entry) const {
  unsigned char h[30];
  if (entry.local_header_offset + 30 > file_size_) throw IoError("local header past end of file: " + entry.name);
  read_exact(in, entry.local_header_offset, h, sizeof h, entry.name);
  if (get32(h) != kLocalSig) throw IoError("bad local header for " + entry.name);
  const std::uint64_t off = entry.local_header_offset + 30 + get16(h + 26) + get16(h + 28);
  if (off + entry.compressed_size > file_size_) throw IoError("entry data truncated: " + entry.name);
  return off;
}

std::vector<char> Reader::read(const Entry& entry) const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_.string());
  const auto off = data_offset(in, entry);
  std::vector<char> raw(static_cast<std::size_t>(entry.compressed_size));
  read_exact(in, off, raw.data(), raw.size(), entry.name);
  std::vector<char> out;
  if (entry.method == 0) {
    out = std::move(raw);
  } else {
    out = inflate_raw(raw, entry.uncompressed_size, std::numeric_limits<std::size_t>::max());
  }
  if (out.size() != entry.uncompressed_size) throw IoError("size mismatch for " + entry.name);
  if (crc32(out.data(), out.size()) != entry.crc32) throw IoError("CRC mismatch for " + entry.name);
  return out;
}

std::vector<char> Reader::read(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw IoError("archive has no entry " + name);
  return read(*e);
}

std::vector<char> Reader::read_prefix(const Entry& entry, std::size_t n) const {
  std::ifstream in(path_, std::ios::binary);
  if (!in) throw IoError("cannot open " + path_.string());
  const auto off = data_offset(in, entry);
  if (entry.method == 0) {
    std::vector<char> out(static_cast<std::size_t>(std::min<std::uint64_t>(n, entry.compressed_size)));
    read_exact(in, off, out.data(), out.size(), entry.name);
    return out;
  }
  std::vector<char> raw(static_cast<std::size_t>(entry.compressed_size));
  read_exact(in, off, raw.data(), raw.size(), entry.name);
  return inflate_raw(raw, entry.uncompressed_size, n);
}

Writer::Writer(std::filesystem::path path) : path_(std::move(path)) {
  tmp_path_ = path_;
  tmp_path_ += ".tmp";
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open for writing: " + tmp_path_.string());
}

Writer::~Writer() {
  if (!finished_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void Writer::add(const std::string& name, const void* data, std::size_t size) {
  if (finished_) throw IoError("archive already finished");
  Entry entry;
  entry.name = name;
  entry.crc32 = crc32(data, size);
  entry.compressed_size = entry.uncompressed_size = size;
  entry.local_header_offset = offset_;

  const bool big = size >= k32Max;
  ByteSink h;
  h.u32(kLocalSig);
  h.u16(big ? 45 : 20);
  h.u16(0);
  h.u16(0);
  h.u16(kDosTime);
  h.u16(kDosDate);
  h.u32(entry.crc32);
  h.u32(big ? k32Max : static_cast<std::uint32_t>(size));
  h.u32(big ? k32Max : static_cast<std::uint32_t>(size));
  h.u16(static_cast<std::uint16_t>(name.size()));
  h.u16(big ? 20 : 0);
  h.bytes(name);
  if (big) {
    h.u16(0x0001);
    h.u16(16);
    h.u64(size);
    h.u64(size);
  }
  out_.write(h.data().data(), static_cast<std::streamsize>(h.size()));
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out_) throw IoError("write failed: " + tmp_path_.string());
  offset_ += h.size() + size;
  entries_.push_back(std::move(entry));
}

void Writer::finish() {
  if (finished_) return;
  const std::uint64_t cd_offset = offset_;
  ByteSink cd;
  for (const auto& e : entries_) {
    const bool big_size = e.uncompressed_size >= k32Max;
    const bool big_off = e.local_header_offset >= k32Max;
    ByteSink extra;
    if (big_size || big_off) {
      extra.u16(0x0001);
      extra.u16(static_cast<std::uint16_t>((big_size ? 16 : 0) + (big_off ? 8 : 0)));
      if (big_size) {
        extra.u64(e.uncompressed_size);
        extra.u64(e.compressed_size);
      }
      if (big_off) extra.u64(e.local_header_offset);
    }
    const bool z64 = big_size || big_off;
    cd.u32(kCentralSig);
    cd.u16(z64 ? 45 : 20);
    cd.u16(z64 ? 45 : 20);
    cd.u16(0);
    cd.u16(0);
    cd.u16(kDosTime);
    cd.u16(kDosDate);
    cd.u32(e.crc32);
    cd.u32(big_size ? k32Max : static_cast<std::uint32_t>(e.compressed_size));
    cd.u32(big_size ? k32Max : static_cast<std::uint32_t>(e.uncompressed_size));
    cd.u16(static_cast<std::uint16_t>(e.name.size()));
    cd.u16(static_cast<std::uint16_t>(extra.size()));
    cd.u16(0);
    cd.u16(0);
    cd.u16(0);
    cd.u32(0);
    cd.u32(big_off ? k32Max : static_cast<std::uint32_t>(e.local_header_offset));
    cd.bytes(e.name);
    cd.bytes(extra.data());
  }
  const std::uint64_t cd_size = cd.size();
  const std::uint64_t count = entries_.size();
  const bool z64 = count >= k16Max || cd_offset >= k32Max || cd_size >= k32Max;
  if (z64) {
    const std::uint64_t rec_offset = cd_offset + cd_size;
    cd.u32(kZip64EndSig);
    cd.u64(44);
    cd.u16(45);
    cd.u16(45);
    cd.u32(0);
    cd.u32(0);
    cd.u64(count);
    cd.u64(count);
    cd.u64(cd_size);
    cd.u64(cd_offset);
    cd.u32(kZip64LocatorSig);
    cd.u32(0);
    cd.u64(rec_offset);
    cd.u32(1);
  }
  cd.u32(kEndSig);
  cd.u16(0);
  cd.u16(0);
  cd.u16(z64 ? k16Max : static_cast<std::uint16_t>(count));
  cd.u16(z64 ? k16Max : static_cast<std::uint16_t>(count));
  cd.u32(z64 ? k32Max : static_cast<std::uint32_t>(cd_size));
  cd.u32(z64 ? k32Max : static_cast<std::uint32_t>(cd_offset));
  cd.u16(0);
  out_.write(cd.data().data(), static_cast<std::streamsize>(cd.size()));
  out_.close();
  if (!out_) throw IoError("write failed: " + tmp_path_.string());
  std::error_code ec;
  std::filesystem::rename(tmp_path_, path_, ec);
  if (ec) throw IoError("cannot rename " + tmp_path_.string() + " to " + path_.string() + ": " + ec.message());
  finished_ = true;
}

}  // namespace vitdiag::zip
