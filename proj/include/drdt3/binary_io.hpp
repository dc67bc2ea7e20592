// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0
//
// Container helpers shared by trajectory files, policy bundles and trainer
// checkpoints: a single JSON header line followed by little-endian blocks.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace drdt3::io {

class ByteWriter {
 public:
  void header(std::string_view json_line);
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(std::span<const double> vs);

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  /// `what` names the file kind in error messages.
  ByteReader(std::string_view bytes, std::string what);

  /// Text up to the first newline. Throws TruncationError when absent.
  std::string header();
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t n);
  bool at_end() const { return pos_ == bytes_.size(); }
  /// Throws FormatError when bytes remain.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace drdt3::io
