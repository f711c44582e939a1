#include "purex/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace purex {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'P', 'U', 'R', 'E', 'X', 'C', 'K', 'P'};

template <typename T>
void put_raw(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T take() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take_bytes(std::uint64_t n) {
    need(n);
    std::string out = bytes_.substr(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return out;
  }

  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const TensorBlock* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const TensorBlock& Checkpoint::at(const std::string& name) const {
  const TensorBlock* t = find(name);
  if (!t) throw DataError("checkpoint has no tensor named " + name);
  return *t;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put_raw<std::uint32_t>(out, ckpt.version);
  const std::string header = ckpt.header.dump();
  put_raw<std::uint64_t>(out, header.size());
  out += header;
  put_raw<std::uint64_t>(out, ckpt.tensors.size());
  for (const auto& t : ckpt.tensors) {
    std::string block;
    put_raw<std::uint32_t>(block, static_cast<std::uint32_t>(t.name.size()));
    block += t.name;
    put_raw<std::uint8_t>(block, static_cast<std::uint8_t>(t.dtype));
    put_raw<std::uint32_t>(block, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_raw<std::uint64_t>(block, d);
    for (double v : t.values) {
      if (t.dtype == DType::F32) {
        put_raw<float>(block, static_cast<float>(v));
      } else {
        put_raw<double>(block, v);
      }
    }
    put_raw<std::uint64_t>(out, block.size());
    out += block;
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take_bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  Checkpoint ckpt;
  ckpt.version = in.take<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw DataError("checkpoint version " + std::to_string(ckpt.version) +
                    " is not supported (this build reads version " +
                    std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = in.take<std::uint64_t>();
  const std::string header = in.take_bytes(header_len);
  ckpt.header = nlohmann::json::parse(header, nullptr, false);
  if (ckpt.header.is_discarded()) throw DataError("checkpoint header is not valid JSON");
  const auto count = in.take<std::uint64_t>();
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto block_len = in.take<std::uint64_t>();
    const std::size_t block_end = in.position() + static_cast<std::size_t>(block_len);
    TensorBlock t;
    t.name = in.take_bytes(in.take<std::uint32_t>());
    const auto dtype = in.take<std::uint8_t>();
    if (dtype != 1 && dtype != 2) throw DataError("checkpoint tensor " + t.name + ": unknown dtype");
    t.dtype = static_cast<DType>(dtype);
    const auto rank = in.take<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.shape.push_back(in.take<std::uint64_t>());
      n *= t.shape.back();
    }
    const std::uint64_t width = t.dtype == DType::F32 ? 4 : 8;
    if (n > (bytes.size() - in.position()) / width) {
      throw DataError("checkpoint truncated inside tensor " + t.name);
    }
    t.values.resize(static_cast<std::size_t>(n));
    for (auto& v : t.values) {
      v = t.dtype == DType::F32 ? static_cast<double>(in.take<float>()) : in.take<double>();
    }
    if (in.position() != block_end) throw DataError("checkpoint tensor " + t.name + ": block length mismatch");
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw DataError("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace purex
