// Copyright (c) 2026 The MUTE Lab Authors. All Rights Reserved.
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

#include "model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "model/model.hpp"

namespace mute::model {

namespace {

constexpr char kEndMarker[4] = {'E', 'N', 'D', '!'};
constexpr std::uint32_t kMaxRank = 8;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
    return v;
  }
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void put_string32(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  void put_string64(const std::string& s) {
    put<std::uint64_t>(s.size());
    put_bytes(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string get_string32() { return get_bytes(get<std::uint32_t>()); }
  std::string get_string64() { return get_bytes(get<std::uint64_t>()); }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    require(n <= buf_.size() - pos_, ErrorKind::Format, "checkpoint is truncated");
  }
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

const TensorBlock* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(ckpt.version);
  w.put_string64(ckpt.config_text);
  w.put<std::uint64_t>(ckpt.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.rng_states.size()));
  for (const auto& [name, state] : ckpt.rng_states) {
    w.put_string32(name);
    w.put_string64(state);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    require(b.values.size() == num::shape_numel(b.shape), ErrorKind::Contract,
            "checkpoint block '" + b.name + "' has inconsistent size");
    w.put_string32(b.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(b.shape.size()));
    for (auto e : b.shape) w.put<std::uint64_t>(e);
    for (double v : b.values) w.put<double>(v);
  }
  w.put_bytes(kEndMarker, 4);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(os), ErrorKind::Io, "cannot write checkpoint " + path);
    os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    require(static_cast<bool>(os), ErrorKind::Io, "write failed for checkpoint " + path);
  }
  require(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::Io,
          "cannot move checkpoint into place at " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot read checkpoint " + path);
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(is), {}));

  require(r.get_bytes(4) == std::string(kCheckpointMagic, 4), ErrorKind::Format,
          path + " is not a MUTE checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  require(ckpt.version == kCheckpointVersion, ErrorKind::Format,
          "checkpoint format version " + std::to_string(ckpt.version) + " is not supported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  ckpt.config_text = r.get_string64();
  ckpt.step = r.get<std::uint64_t>();
  const auto rng_count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < rng_count; ++i) {
    std::string name = r.get_string32();
    ckpt.rng_states[name] = r.get_string64();
  }
  const auto block_count = r.get<std::uint32_t>();
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < block_count; ++i) {
    TensorBlock b;
    b.name = r.get_string32();
    require(names.insert(b.name).second, ErrorKind::Format,
            "duplicate checkpoint block '" + b.name + "'");
    const auto rank = r.get<std::uint32_t>();
    require(rank >= 1 && rank <= kMaxRank, ErrorKind::Format,
            "checkpoint block '" + b.name + "' has invalid rank");
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto e = r.get<std::uint64_t>();
      require(e >= 1 && e < (1ULL << 32), ErrorKind::Format,
              "checkpoint block '" + b.name + "' has invalid extent");
      b.shape.push_back(e);
    }
    const std::size_t n = num::shape_numel(b.shape);
    b.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) b.values[k] = r.get<double>();
    ckpt.blocks.push_back(std::move(b));
  }
  require(r.get_bytes(4) == std::string(kEndMarker, 4), ErrorKind::Format,
          "checkpoint end marker missing");
  require(r.at_end(), ErrorKind::Format, "trailing bytes after checkpoint end marker");
  return ckpt;
}

std::vector<TensorBlock> export_parameters(const Model& model) {
  std::vector<TensorBlock> blocks;
  for (const auto& p : model.parameters()) {
    const auto data = p.tensor.data();
    blocks.push_back({p.name, p.tensor.shape(), std::vector<double>(data.begin(), data.end())});
  }
  return blocks;
}

void import_parameters(Model& model, const Checkpoint& ckpt) {
  const std::string optimizer_prefix = kOptimizerPrefix;
  for (const auto& b : ckpt.blocks) {
    if (b.name.rfind(optimizer_prefix, 0) == 0) continue;
    Tensor t = model.find(b.name);
    require(t.shape() == b.shape, ErrorKind::Format,
            "checkpoint parameter '" + b.name + "' has shape " + num::shape_str(b.shape) +
                ", model expects " + num::shape_str(t.shape()));
  }
  for (const auto& p : model.parameters()) {
    const TensorBlock* b = ckpt.find(p.name);
    require(b != nullptr, ErrorKind::Format, "checkpoint lacks parameter '" + p.name + "'");
    Tensor t = p.tensor;
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(b->values[i]);
  }
}

}  // namespace mute::model
