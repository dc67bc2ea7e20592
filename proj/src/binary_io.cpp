// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include "drdt3/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "drdt3/errors.hpp"

namespace drdt3::io {

namespace {

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace

void ByteWriter::header(std::string_view json_line) {
  buf_.append(json_line);
  buf_.push_back('\n');
}

void ByteWriter::u64(std::uint64_t v) {
  const std::uint64_t le = to_le(v);
  char raw[8];
  std::memcpy(raw, &le, 8);
  buf_.append(raw, 8);
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::f64s(std::span<const double> vs) {
  for (double v : vs) f64(v);
}

ByteReader::ByteReader(std::string_view bytes, std::string what)
    : bytes_(bytes), what_(std::move(what)) {}

void ByteReader::need(std::size_t n) const {
  if (bytes_.size() - pos_ < n) {
    throw TruncationError(what_ + " is truncated: needed " + std::to_string(n) +
                          " more bytes at offset " + std::to_string(pos_) + ", file has " +
                          std::to_string(bytes_.size()));
  }
}

std::string ByteReader::header() {
  const auto nl = bytes_.find('\n', pos_);
  if (nl == std::string_view::npos) throw TruncationError(what_ + " has no complete header line");
  std::string h(bytes_.substr(pos_, nl - pos_));
  pos_ = nl + 1;
  return h;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t le = 0;
  std::memcpy(&le, bytes_.data() + pos_, 8);
  pos_ += 8;
  return to_le(le);
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> ByteReader::f64s(std::size_t n) {
  if (n > (bytes_.size() - pos_) / 8) need(n * 8);
  std::vector<double> out(n);
  for (auto& v : out) v = f64();
  return out;
}

void ByteReader::expect_end() const {
  if (!at_end()) {
    throw FormatError(what_ + " has " + std::to_string(bytes_.size() - pos_) +
                      " unexpected trailing bytes");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace drdt3::io
