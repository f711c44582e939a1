#pragma once

// Versioned binary checkpoint container.
//
// Layout (all integers little-endian):
//   "PUREXCKP"                      8-byte magic
//   u32 version
//   u64 n, n bytes                  canonical JSON header (config, vocab, state)
//   u64 tensor count
//   per tensor:
//     u64 block length              bytes that follow in this block
//     u32 n, n bytes                name
//     u8  dtype                     1 = float32, 2 = float64
//     u32 rank, rank x u64          shape
//     payload                       row-major values

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "purex/kernel.hpp"

namespace purex {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

template <typename Scalar>
constexpr DType dtype_of() {
  return sizeof(Scalar) == 4 ? DType::F32 : DType::F64;
}

struct TensorBlock {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;  // widened; narrowed back to dtype on write
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json header = nlohmann::json::object();
  std::vector<TensorBlock> tensors;

  const TensorBlock* find(const std::string& name) const;
  const TensorBlock& at(const std::string& name) const;

  template <typename Scalar>
  void put(const std::string& name, const Matrix<Scalar>& m, DType dtype = dtype_of<Scalar>()) {
    TensorBlock block;
    block.name = name;
    block.dtype = dtype;
    block.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
    block.values.assign(m.data(), m.data() + m.size());
    tensors.push_back(std::move(block));
  }

  template <typename Scalar>
  Matrix<Scalar> get(const std::string& name) const {
    const TensorBlock& block = at(name);
    if (block.shape.size() != 2) throw DataError("checkpoint tensor " + name + " is not rank 2");
    Matrix<Scalar> m(static_cast<Index>(block.shape[0]), static_cast<Index>(block.shape[1]));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(block.values[static_cast<std::size_t>(i)]);
    return m;
  }
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace purex
