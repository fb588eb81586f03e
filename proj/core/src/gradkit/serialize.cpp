// Copyright (c) 2026 The unipde Authors
// SPDX-License-Identifier: Apache-2.0

#include "unipde/gradkit/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unipde/common.hpp"

namespace unipde::gk {
namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  bool at_end() const { return pos_ == b_.size(); }

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) {
    if (b_.size() - pos_ < n) {
      throw FormatError(std::string("weight file truncated while reading ") + what + " at byte " + std::to_string(pos_));
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const NamedTensors& tensors) {
  std::string out(kWeightMagic, 4);
  put_le<std::uint32_t>(out, kWeightVersion);
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto s : t.shape()) put_le<std::uint64_t>(out, s);
    out.push_back(static_cast<char>(t.dtype()));
    if (t.dtype() == DType::kReal32) {
      for (double v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

NamedTensors decode_weights(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kWeightMagic, 4)) throw FormatError("not a weight file (bad magic)");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kWeightVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  NamedTensors out;
  while (!r.at_end()) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name = r.bytes(name_len, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank == 0 || rank > 16) throw FormatError("invalid rank " + std::to_string(rank) + " for '" + name + "'");
    Shape shape(rank);
    for (auto& s : shape) {
      s = r.get<std::uint64_t>("extent");
      if (s == 0 || s > (std::uint64_t{1} << 40)) throw FormatError("invalid extent for '" + name + "'");
    }
    const auto tag = r.get<std::uint8_t>("dtype");
    if (tag > 2) throw FormatError("unknown dtype tag " + std::to_string(tag) + " for '" + name + "'");
    const auto dtype = static_cast<DType>(tag);
    Tensor t(shape, dtype == DType::kComplex ? DType::kComplex : DType::kReal64);
    if (dtype == DType::kReal32) {
      for (double& v : t.data()) v = static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>("data")));
      t.set_dtype_tag(DType::kReal32);
    } else {
      for (double& v : t.data()) v = std::bit_cast<double>(r.get<std::uint64_t>("data"));
    }
    if (!out.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor name '" + name + "'");
  }
  return out;
}

void write_weights(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_weights(tensors);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

NamedTensors read_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_weights(ss.str());
}

}  // namespace unipde::gk
