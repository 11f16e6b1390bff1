#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xvqa/tensor.hpp"

namespace xvqa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout (all integers u64 little-endian, values IEEE-754 binary64 LE):
//   "XVQACKPT" | version | kind length | kind bytes | #dims | dims...
//   | #tensors | per tensor: rank | shape... | values...
inline constexpr std::array<char, 8> kCheckpointMagic = {'X', 'V', 'Q', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::vector<std::uint64_t> dims;
  std::vector<Tensor<double>> tensors;
};

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffU);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw CheckpointError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline std::uint64_t bounded(std::uint64_t v, std::uint64_t limit, const char* what) {
  if (v > limit) throw CheckpointError(std::string("checkpoint: implausible ") + what);
  return v;
}

}  // namespace detail

template <class T>
void write_checkpoint(std::ostream& out, const std::string& kind, const std::vector<std::uint64_t>& dims,
                      const std::vector<const Tensor<T>*>& tensors) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_u64(out, kCheckpointVersion);
  detail::put_u64(out, kind.size());
  out.write(kind.data(), static_cast<std::streamsize>(kind.size()));
  detail::put_u64(out, dims.size());
  for (auto d : dims) detail::put_u64(out, d);
  detail::put_u64(out, tensors.size());
  for (const Tensor<T>* t : tensors) {
    detail::put_u64(out, t->rank());
    for (auto d : t->shape()) detail::put_u64(out, d);
    for (T v : t->values()) detail::put_f64(out, static_cast<double>(v));
  }
  if (!out) throw CheckpointError("checkpoint: write failed");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw CheckpointError("checkpoint: bad magic");
  }
  const auto version = detail::get_u64(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.kind.resize(detail::bounded(detail::get_u64(in), 256, "kind length"));
  if (!in.read(c.kind.data(), static_cast<std::streamsize>(c.kind.size()))) {
    throw CheckpointError("checkpoint: truncated file");
  }
  c.dims.resize(detail::bounded(detail::get_u64(in), 64, "dimension count"));
  for (auto& d : c.dims) d = detail::get_u64(in);
  const auto n = detail::bounded(detail::get_u64(in), 4096, "tensor count");
  for (std::uint64_t k = 0; k < n; ++k) {
    const auto rank = detail::bounded(detail::get_u64(in), 8, "tensor rank");
    std::vector<std::size_t> shape(rank);
    std::uint64_t count = 1;
    for (auto& d : shape) {
      d = detail::bounded(detail::get_u64(in), std::uint64_t{1} << 32, "tensor dimension");
      count *= d;
    }
    detail::bounded(count, std::uint64_t{1} << 32, "tensor size");
    std::vector<double> values(count);
    for (auto& v : values) v = detail::get_f64(in);
    try {
      c.tensors.emplace_back(std::move(shape), std::move(values));
    } catch (const ShapeError& e) {
      throw CheckpointError(std::string("checkpoint: ") + e.what());
    }
  }
  return c;
}

template <class T>
void save_checkpoint(const std::string& path, const std::string& kind, const std::vector<std::uint64_t>& dims,
                     const std::vector<const Tensor<T>*>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path + " for writing");
  write_checkpoint(out, kind, dims, tensors);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path);
  return read_checkpoint(in);
}

/// Copies checkpoint tensors into `params` (declaration order), checking
/// kind, count and shapes.
template <class T>
void restore_tensors(const Checkpoint& c, const std::string& kind, const std::vector<Tensor<T>*>& params) {
  if (c.kind != kind) throw CheckpointError("checkpoint: expected kind '" + kind + "', found '" + c.kind + "'");
  if (c.tensors.size() != params.size()) {
    throw CheckpointError("checkpoint: expected " + std::to_string(params.size()) + " tensors, found " +
                          std::to_string(c.tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (c.tensors[i].shape() != params[i]->shape()) {
      throw CheckpointError("checkpoint: tensor " + std::to_string(i) + " has shape " +
                            shape_string(c.tensors[i].shape()) + ", expected " + shape_string(params[i]->shape()));
    }
    for (std::size_t k = 0; k < params[i]->size(); ++k) (*params[i])[k] = static_cast<T>(c.tensors[i][k]);
  }
}

}  // namespace xvqa
