#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cvt/errors.hpp"
#include "cvt/model.hpp"

namespace cvt {

// Checkpoint container: 8-byte magic, little-endian u64 metadata length,
// JSON metadata (format version, config, vocab hash, step, tensor manifest),
// then the named tensors as little-endian 32-bit floats in manifest order.
inline constexpr char kCheckpointMagic[8] = {'C', 'V', 'T', 'C', 'K', 'P', 'T', '1'};

struct CheckpointMeta {
  int format_version = 1;
  CvtConfig config;
  std::uint64_t vocab_hash = 0;
  long step = 0;
  std::vector<std::pair<std::string, Shape>> tensors;
};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  char buf[8];
  in.read(buf, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i]))
                                  << (8 * i);
  return v;
}

inline nlohmann::json meta_to_json(const CheckpointMeta& m) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, shape] : m.tensors) tensors.push_back({{"name", name}, {"shape", shape}});
  return {{"format_version", m.format_version},
          {"config", m.config.to_json()},
          {"vocab_hash", m.vocab_hash},
          {"step", m.step},
          {"tensors", tensors}};
}

inline CheckpointMeta meta_from_json(const nlohmann::json& j) {
  CheckpointMeta m;
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != 1)
    throw DataError("checkpoint: unsupported format version " +
                    std::to_string(m.format_version));
  m.config = CvtConfig::from_json(j.at("config"));
  m.vocab_hash = j.at("vocab_hash").get<std::uint64_t>();
  m.step = j.at("step").get<long>();
  for (const auto& t : j.at("tensors"))
    m.tensors.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
  return m;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const CvtModel<S>& model, std::uint64_t vocab_hash,
                     long step) {
  CheckpointMeta meta;
  meta.config = model.config();
  meta.vocab_hash = vocab_hash;
  meta.step = step;
  for (const auto& [name, t] : model.named_params()) meta.tensors.emplace_back(name, t.shape());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, 8);
  const std::string meta_str = detail::meta_to_json(meta).dump();
  detail::write_u64_le(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  std::vector<float> buf;
  for (const auto& [name, t] : model.named_params()) {
    buf.resize(static_cast<std::size_t>(t.size()));
    for (Index i = 0; i < t.size(); ++i)
      buf[static_cast<std::size_t>(i)] = static_cast<float>(t.array()(i));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError("short write to checkpoint: " + path);
}

inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  const std::uint64_t len = detail::read_u64_le(in);
  std::string meta_str(len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint metadata: " + path);
  try {
    return detail::meta_from_json(nlohmann::json::parse(meta_str));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid checkpoint metadata in " + path + ": " + e.what());
  }
}

// Loads and validates every tensor shape against the stored config.
template <typename S>
CvtModel<S> load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  const CheckpointMeta meta = read_checkpoint_meta(path);
  Rng init_rng(0);
  CvtModel<S> model(meta.config, init_rng);
  auto& params = model.named_params();
  if (params.size() != meta.tensors.size())
    throw DataError("checkpoint " + path + ": expected " + std::to_string(params.size()) +
                    " tensors, found " + std::to_string(meta.tensors.size()));
  std::ifstream in(path, std::ios::binary);
  in.seekg(8);
  const std::uint64_t len = detail::read_u64_le(in);
  in.seekg(static_cast<std::streamoff>(16 + len));
  std::vector<float> buf;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, t] = params[i];
    const auto& [mname, mshape] = meta.tensors[i];
    if (mname != name || mshape != t.shape())
      throw DataError("checkpoint " + path + ": tensor " + mname + " has shape " +
                      shape_str(mshape) + ", model expects " + name + " " + shape_str(t.shape()));
    buf.resize(static_cast<std::size_t>(t.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw DataError("truncated checkpoint data: " + path);
    for (Index k = 0; k < t.size(); ++k)
      t.array()(k) = static_cast<S>(buf[static_cast<std::size_t>(k)]);
  }
  if (meta_out) *meta_out = meta;
  return model;
}

}  // namespace cvt
