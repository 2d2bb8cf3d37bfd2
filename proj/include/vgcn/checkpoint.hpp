#pragma once

// Binary checkpoint container.
//
//   "VGCNCKPT"                 8 bytes magic
//   u32 version
//   u32 n, n bytes             model config as JSON
//   u32 count                  number of tensors
//   per tensor:
//     u32 n, n bytes           name
//     u8  scalar width         4 (float) or 8 (double)
//     u32 rank, u64 dims[rank]
//     raw scalars              little-endian, row-major
//
// Loading checks every name and shape against the layout implied by the
// stored config.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <type_traits>

#include "json.hpp"

#include "vgcn/errors.hpp"
#include "vgcn/image.hpp"
#include "vgcn/model.hpp"

namespace vgcn {

inline constexpr char kCheckpointMagic[8] = {'V', 'G', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"topology", to_string(c.topology)},
          {"use_motion_features", c.use_motion_features},
          {"iterations", c.iterations},
          {"hidden", c.hidden},
          {"blocks", c.blocks},
          {"points", c.points},
          {"interval", c.interval},
          {"encoder", {{"stage1", c.encoder.stage1}, {"stage2", c.encoder.stage2}, {"appearance", c.encoder.appearance}}}};
}

/// Reads a model config; absent keys keep the values of `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  try {
    if (j.contains("topology")) base.topology = topology_from_string(j["topology"].get<std::string>());
    base.use_motion_features = j.value("use_motion_features", base.use_motion_features);
    base.iterations = j.value("iterations", base.iterations);
    base.hidden = j.value("hidden", base.hidden);
    base.blocks = j.value("blocks", base.blocks);
    base.points = j.value("points", base.points);
    base.interval = j.value("interval", base.interval);
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      base.encoder.stage1 = e.value("stage1", base.encoder.stage1);
      base.encoder.stage2 = e.value("stage2", base.encoder.stage2);
      base.encoder.appearance = e.value("appearance", base.encoder.appearance);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("model config: ") + e.what());
  }
  base.validate();
  return base;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::string& out, std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("checkpoint truncated");
  }
  template <class U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

template <class T>
std::string serialize_checkpoint(const ModelConfig& cfg, const Params<T>& params) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::string out(kCheckpointMagic, 8);
  detail::put_u32(out, kCheckpointVersion);
  const std::string js = model_config_json(cfg).dump();
  detail::put_u32(out, static_cast<std::uint32_t>(js.size()));
  out += js;
  detail::put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    detail::put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    out.push_back(static_cast<char>(sizeof(T)));
    detail::put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) detail::put_u64(out, d);
    out.append(reinterpret_cast<const char*>(p.value.data().data()), p.value.size() * sizeof(T));
  }
  return out;
}

template <class T>
struct Checkpoint {
  ModelConfig config;
  Params<T> params;
};

/// Parses a checkpoint, converting stored scalars to T.
template <class T>
Checkpoint<T> parse_checkpoint(const std::string& bytes) {
  detail::Reader r(bytes);
  if (r.bytes(8) != std::string(kCheckpointMagic, 8)) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint<T> ck;
  const std::string js = r.bytes(r.get<std::uint32_t>());
  try {
    ck.config = model_config_from_json(nlohmann::json::parse(js));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  const auto layout = param_layout(ck.config);
  const auto count = r.get<std::uint32_t>();
  if (count != layout.size()) {
    throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, config expects " +
                      std::to_string(layout.size()));
  }
  for (const auto& [name, shape] : layout) {
    const std::string stored = r.bytes(r.get<std::uint32_t>());
    if (stored != name) throw FormatError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    const auto width = static_cast<std::uint8_t>(r.bytes(1)[0]);
    if (width != 4 && width != 8) throw FormatError("checkpoint tensor '" + name + "' has scalar width " + std::to_string(width));
    Shape s(r.get<std::uint32_t>());
    for (auto& d : s) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (s != shape) {
      throw FormatError("checkpoint tensor '" + name + "' is " + shape_string(s) + ", config expects " +
                        shape_string(shape));
    }
    Tensor<T> value(s);
    const std::size_t n = value.size();
    if (width == 4) {
      const std::string raw = r.bytes(n * 4);
      for (std::size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, raw.data() + 4 * i, 4);
        value[i] = static_cast<T>(f);
      }
    } else {
      const std::string raw = r.bytes(n * 8);
      for (std::size_t i = 0; i < n; ++i) {
        double d;
        std::memcpy(&d, raw.data() + 8 * i, 8);
        value[i] = static_cast<T>(d);
      }
    }
    ck.params.add(name, group_of(name), std::move(value));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes");
  return ck;
}

template <class T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const Params<T>& params) {
  write_file(path, serialize_checkpoint(cfg, params));
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  return parse_checkpoint<T>(read_file(path));
}

}  // namespace vgcn
