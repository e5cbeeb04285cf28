#pragma once

// Binary tensor files and reference-curve CSV files.
//
// Tensor file layout (all integers u64 little-endian, reals IEEE f64 LE):
//   "TPCATNSR"            8-byte magic
//   version               1 byte (currently 1)
//   k                     1 byte
//   symmetric flag        1 byte
//   dims[k]               u64 each
//   entries               f64 each, row-major
//   truth flag            1 byte; when 1 the ground-truth section follows:
//     seed                u64
//     symmetric noise     1 byte
//     spike count         u64
//     per spike: beta f64, scale f64, axis count u64, then per axis
//                length u64 and that many f64

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tpca/dense_tensor.hpp"
#include "tpca/diagnostics.hpp"
#include "tpca/error.hpp"
#include "tpca/spiked_model.hpp"

namespace tpca {

inline constexpr char kTensorMagic[8] = {'T', 'P', 'C', 'A', 'T', 'N', 'S', 'R'};
inline constexpr std::uint8_t kTensorFormatVersion = 1;

struct GroundTruth {
  std::uint64_t seed = 0;
  bool symmetric_noise = false;
  std::vector<Spike> spikes;
};

struct TensorFile {
  DenseTensor tensor;
  std::optional<GroundTruth> truth;

  /// Noise tensor implied by the ground truth: T minus every planted term.
  DenseTensor noise() const {
    detail::require(truth.has_value(), "TensorFile::noise: file has no ground truth");
    DenseTensor z = tensor;
    for (const auto& sp : truth->spikes) {
      const bool sym = std::all_of(sp.axes.begin(), sp.axes.end(), [&](const Vector& a) { return a == sp.axes[0]; });
      z = sym && z.is_symmetric() ? axpy(-1.0, symmetric_rank_one(sp.scale, sp.axes[0], z.order()), z)
                                  : axpy(-sp.scale, rank_one(1.0, sp.axes), z);
    }
    return z;
  }
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t x) { buf_.push_back(static_cast<char>(x)); }
  void u64(std::uint64_t x) {
    for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(x >> (8 * b)));
  }
  void f64(double x) { u64(std::bit_cast<std::uint64_t>(x)); }
  void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
  const std::string& str() const noexcept { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t x = 0;
    for (int b = 0; b < 8; ++b) x |= std::uint64_t(static_cast<std::uint8_t>(data_[pos_ + b])) << (8 * b);
    pos_ += 8;
    return x;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const noexcept { return pos_ == data_.size(); }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(path_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated file");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace detail

inline std::string encode_tensor(const DenseTensor& t, const std::optional<GroundTruth>& truth = std::nullopt) {
  detail::ByteWriter w;
  w.bytes(kTensorMagic, sizeof kTensorMagic);
  w.u8(kTensorFormatVersion);
  w.u8(static_cast<std::uint8_t>(t.order()));
  w.u8(t.is_symmetric() ? 1 : 0);
  for (std::size_t d : t.dims()) w.u64(d);
  for (double x : t.entries()) w.f64(x);
  w.u8(truth ? 1 : 0);
  if (truth) {
    w.u64(truth->seed);
    w.u8(truth->symmetric_noise ? 1 : 0);
    w.u64(truth->spikes.size());
    for (const auto& sp : truth->spikes) {
      w.f64(sp.beta);
      w.f64(sp.scale);
      w.u64(sp.axes.size());
      for (const auto& a : sp.axes) {
        w.u64(a.size());
        for (double x : a) w.f64(x);
      }
    }
  }
  return w.str();
}

inline TensorFile decode_tensor(std::string data, const std::string& path = "<memory>") {
  detail::ByteReader r(std::move(data), path);
  if (r.bytes(sizeof kTensorMagic) != std::string(kTensorMagic, sizeof kTensorMagic)) r.fail("bad magic");
  const std::uint8_t version = r.u8();
  if (version != kTensorFormatVersion) r.fail("unsupported format version " + std::to_string(version));
  const std::size_t k = r.u8();
  const bool symmetric = r.u8() != 0;
  if (k < 3 || k > 8) r.fail("unsupported order " + std::to_string(k));
  DenseTensor::Dims dims(k);
  std::size_t count = 1;
  for (auto& d : dims) {
    d = r.u64();
    if (d == 0 || count > r.remaining() / 8 / d) r.fail("implausible dimensions");
    count *= d;
  }
  std::vector<double> entries(count);
  for (auto& x : entries) x = r.f64();
  TensorFile f{symmetric ? DenseTensor::symmetric(dims, std::move(entries)) : DenseTensor(dims, std::move(entries)),
               std::nullopt};
  if (r.u8() != 0) {
    GroundTruth g;
    g.seed = r.u64();
    g.symmetric_noise = r.u8() != 0;
    const std::uint64_t spikes = r.u64();
    if (spikes > r.remaining()) r.fail("implausible spike count");
    for (std::uint64_t l = 0; l < spikes; ++l) {
      Spike sp;
      sp.beta = r.f64();
      sp.scale = r.f64();
      const std::uint64_t axes = r.u64();
      if (axes != k) r.fail("spike axis count does not match tensor order");
      for (std::uint64_t a = 0; a < axes; ++a) {
        const std::uint64_t len = r.u64();
        if (len != dims[a]) r.fail("spike vector length does not match tensor dimension");
        Vector v(len);
        for (auto& x : v) x = r.f64();
        sp.axes.push_back(std::move(v));
      }
      g.spikes.push_back(std::move(sp));
    }
    f.truth = std::move(g);
  }
  if (!r.at_end()) r.fail("trailing bytes after tensor data");
  return f;
}

inline void write_tensor(const std::string& path, const DenseTensor& t,
                         const std::optional<GroundTruth>& truth = std::nullopt) {
  detail::write_file(path, encode_tensor(t, truth));
}

inline void write_instance(const std::string& path, const SpikedInstance& inst) {
  write_tensor(path, inst.tensor, GroundTruth{inst.seed, inst.symmetric_noise, inst.spikes});
}

inline TensorFile read_tensor(const std::string& path) { return decode_tensor(detail::read_file(path), path); }

/// Parses "beta,corr_opt" rows; a non-numeric first line is taken as a header.
inline ReferenceCurve parse_reference_curve(const std::string& text, const std::string& path = "<memory>") {
  std::istringstream in(text);
  std::string line;
  std::vector<double> betas, corrs;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path + ":" + std::to_string(lineno) + ": expected 'beta,corr_opt'");
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      const double beta = std::stod(a, &u1), corr = std::stod(b, &u2);
      if (a.find_first_not_of(" \t", u1) != std::string::npos || b.find_first_not_of(" \t", u2) != std::string::npos)
        throw std::invalid_argument("trailing characters");
      betas.push_back(beta);
      corrs.push_back(corr);
    } catch (const std::exception&) {
      if (lineno == 1 && betas.empty()) continue;
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  try {
    return ReferenceCurve(std::move(betas), std::move(corrs));
  } catch (const Error& e) {
    throw IoError(path + ": " + e.what());
  }
}

inline ReferenceCurve read_reference_curve(const std::string& path) {
  return parse_reference_curve(detail::read_file(path), path);
}

}  // namespace tpca
