// Copyright 2026 The ecdiff Authors
//
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

#include "ecdiff/numerics/binary_io.hpp"

#include <bit>
#include <cstring>

namespace ecdiff::num {

namespace {

constexpr std::uint64_t kMaxLength = 1ull << 34;

template <typename T>
void to_le(T v, unsigned char* out) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out[i] = static_cast<unsigned char>(v >> (8 * i));
}

template <typename T>
T from_le(const unsigned char* in) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in[i]) << (8 * i);
  return v;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

void BinaryWriter::u32(std::uint32_t v) {
  unsigned char b[4];
  to_le(v, b);
  bytes(b, 4);
}

void BinaryWriter::u64(std::uint64_t v) {
  unsigned char b[8];
  to_le(v, b);
  bytes(b, 8);
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinaryWriter::f64s(std::span<const double> v) {
  u64(v.size());
  for (double x : v) f64(x);
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw std::runtime_error("cannot open " + path.string());
}

void BinaryReader::bytes(void* data, std::size_t n) {
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in_) throw FormatError("truncated file: " + path_.string());
}

std::uint32_t BinaryReader::u32() {
  unsigned char b[4];
  bytes(b, 4);
  return from_le<std::uint32_t>(b);
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  bytes(b, 8);
  return from_le<std::uint64_t>(b);
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  std::uint64_t n = u64();
  if (n > kMaxLength) throw FormatError("implausible string length in " + path_.string());
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

std::vector<double> BinaryReader::f64s() {
  std::uint64_t n = u64();
  if (n > kMaxLength) throw FormatError("implausible array length in " + path_.string());
  std::vector<double> v(n);
  for (double& x : v) x = f64();
  return v;
}

void BinaryReader::expect_magic(const std::string& magic) {
  std::string got(magic.size(), '\0');
  in_.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in_ || got != magic) {
    throw FormatError(path_.string() + " is not a " + magic.substr(0, magic.find('\0')) + " file");
  }
}

bool BinaryReader::at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

}  // namespace ecdiff::num
