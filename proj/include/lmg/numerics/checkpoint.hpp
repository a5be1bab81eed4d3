#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lmg/error.hpp"
#include "lmg/numerics/optim.hpp"
#include "lmg/rng.hpp"

namespace lmg::nn {

// Layout: a magic line, one line of JSON manifest, then the raw payload.
// The payload is every parameter's data as little-endian IEEE-754 doubles,
// concatenated in manifest order.
inline constexpr std::string_view kCheckpointMagic = "LMGCKPT 1";

class CheckpointError : public Error {
public:
  using Error::Error;
};

struct CheckpointManifest {
  struct Param {
    std::string name;
    Shape shape;
  };
  std::vector<Param> params;
  std::int64_t step = 0;
  std::string config_hash;
  std::string payload_hash;
  nlohmann::json meta = nlohmann::json::object();
};

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace detail {

inline void append_le(std::string& out, double d) {
  auto bits = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

inline double read_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline std::string encode_checkpoint(const ParamStore& params, const std::string& config_hash,
                                     const nlohmann::json& meta = nlohmann::json::object()) {
  std::string payload;
  payload.reserve(params.scalar_count() * 8);
  nlohmann::ordered_json manifest;
  manifest["config_hash"] = config_hash;
  manifest["step"] = params.step();
  auto plist = nlohmann::ordered_json::array();
  for (const auto& e : params.entries()) {
    plist.push_back({{"name", e.name}, {"shape", e.value.shape()}});
    for (double d : e.value.values()) detail::append_le(payload, d);
  }
  manifest["params"] = std::move(plist);
  manifest["payload_fnv1a"] = hex64(fnv1a(payload));
  manifest["meta"] = meta;
  std::string out(kCheckpointMagic);
  out += '\n';
  out += manifest.dump();
  out += '\n';
  out += payload;
  return out;
}

inline void save_checkpoint(const std::string& path, const ParamStore& params, const std::string& config_hash,
                            const nlohmann::json& meta = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  const auto bytes = encode_checkpoint(params, config_hash, meta);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to checkpoint '" + path + "'");
}

/// Decoded checkpoint: manifest plus one tensor per manifest entry.
struct Checkpoint {
  CheckpointManifest manifest;
  std::vector<Tensor> tensors;
};

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  const auto nl1 = bytes.find('\n');
  if (nl1 == std::string_view::npos || bytes.substr(0, nl1) != kCheckpointMagic) {
    throw CheckpointError(source + ": not a checkpoint (bad magic line)");
  }
  const auto nl2 = bytes.find('\n', nl1 + 1);
  if (nl2 == std::string_view::npos) throw CheckpointError(source + ": truncated manifest");
  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(nl1 + 1, nl2 - nl1 - 1));
    ck.manifest.config_hash = j.at("config_hash").get<std::string>();
    ck.manifest.step = j.at("step").get<std::int64_t>();
    ck.manifest.payload_hash = j.at("payload_fnv1a").get<std::string>();
    ck.manifest.meta = j.value("meta", nlohmann::json::object());
    for (const auto& p : j.at("params")) {
      ck.manifest.params.push_back({p.at("name").get<std::string>(), p.at("shape").get<Shape>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(source + ": malformed manifest: " + e.what());
  }
  const auto payload = bytes.substr(nl2 + 1);
  if (hex64(fnv1a(payload)) != ck.manifest.payload_hash) {
    throw CheckpointError(source + ": payload hash does not match manifest hash " + ck.manifest.payload_hash);
  }
  std::size_t expected = 0;
  for (const auto& p : ck.manifest.params) expected += shape_size(p.shape) * 8;
  if (payload.size() != expected) {
    throw CheckpointError(source + ": payload has " + std::to_string(payload.size()) + " bytes, manifest needs " +
                          std::to_string(expected));
  }
  std::size_t off = 0;
  for (const auto& p : ck.manifest.params) {
    std::vector<double> data(shape_size(p.shape));
    for (auto& d : data) {
      d = detail::read_le(payload.data() + off);
      off += 8;
    }
    ck.tensors.emplace_back(p.shape, std::move(data));
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path);
}

/// Copies checkpoint tensors into an already-shaped store. Names, order and
/// shapes must agree; any mismatch names both shapes.
inline void restore_params(ParamStore& params, const Checkpoint& ck) {
  const auto& mp = ck.manifest.params;
  if (mp.size() != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(mp.size()) + " parameters, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < mp.size(); ++i) {
    auto& e = params.entries()[i];
    if (mp[i].name != e.name) {
      throw CheckpointError("checkpoint parameter " + std::to_string(i) + " is '" + mp[i].name + "', model expects '" +
                            e.name + "'");
    }
    if (mp[i].shape != e.value.shape()) {
      throw CheckpointError("parameter '" + e.name + "': checkpoint shape " + shape_str(mp[i].shape) +
                            " vs model shape " + shape_str(e.value.shape()));
    }
    e.value.values() = ck.tensors[i].values();
  }
  params.set_step(ck.manifest.step);
}

}  // namespace lmg::nn
