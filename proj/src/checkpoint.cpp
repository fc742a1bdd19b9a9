// SPDX-License-Identifier: Apache-2.0
#include "eyedent/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "eyedent/sha256.hpp"

namespace eyedent::model {
namespace {

nlohmann::json zstats_to_json(const signal::ZScoreStats<float>& z) {
  return {{"mean_x", z.mean_x}, {"mean_y", z.mean_y}, {"sd_x", z.sd_x}, {"sd_y", z.sd_y}};
}

signal::ZScoreStats<float> zstats_from_json(const nlohmann::json& j) {
  signal::ZScoreStats<float> z;
  z.mean_x = j.at("mean_x").get<float>();
  z.mean_y = j.at("mean_y").get<float>();
  z.sd_x = j.at("sd_x").get<float>();
  z.sd_y = j.at("sd_y").get<float>();
  return z;
}

struct HashingWriter {
  std::ofstream out;
  Sha256 sha;

  void write(const void* data, std::size_t len) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    sha.update(data, len);
  }
  template <class T>
  void write_pod(const T& v) {
    write(&v, sizeof(T));
  }
};

}  // namespace

void save_checkpoint(ModelBundle& bundle, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["transform"] = {{"c", bundle.transform.c}, {"v_min", bundle.transform.v_min}};
  header["zscore"] = zstats_to_json(bundle.zstats);
  header["window_length"] = bundle.window_length;
  header["labels"] = bundle.labels;
  header["slow_config"] = bundle.slow.cfg;
  header["fast_config"] = bundle.fast.cfg;
  header["stages"] = {{"slow", bundle.slow_trained}, {"fast", bundle.fast_trained}, {"joint", bundle.joint_trained}};
  header["train_meta"] = bundle.train_meta;

  auto tensors = bundle.named_tensors();
  for (auto& [name, t] : tensors) {
    nlohmann::json shape = nlohmann::json::array();
    for (auto d : t->shape) shape.push_back(d);
    header["tensors"].push_back({{"name", name}, {"shape", shape}});
  }
  const std::string header_str = header.dump();

  HashingWriter w;
  w.out.open(path, std::ios::binary);
  if (!w.out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  w.write(kCheckpointMagic, 4);
  w.write_pod(kCheckpointVersion);
  const std::uint64_t hlen = header_str.size();
  w.write_pod(hlen);
  w.write(header_str.data(), header_str.size());
  for (auto& [name, t] : tensors)
    w.write(t->data.data(), static_cast<std::size_t>(t->size()) * sizeof(float));
  const auto digest = w.sha.finish();
  w.out.write(reinterpret_cast<const char*>(digest.data()), static_cast<std::streamsize>(digest.size()));
  if (!w.out) throw Error(ErrorCode::io, "failed writing " + path.string());
  w.out.close();
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  const std::streamoff size = in.tellg();
  in.seekg(0);
  std::vector<char> bytes(static_cast<std::size_t>(size));
  in.read(bytes.data(), size);
  if (!in) throw Error(ErrorCode::io, "failed reading " + path.string());

  constexpr std::size_t kFixed = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kFixed + 32)
    throw Error(ErrorCode::checkpoint_truncated, path.string() + ": shorter than the fixed checkpoint layout");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw Error(ErrorCode::parse, path.string() + ": not a checkpoint (bad magic)");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, sizeof(version));
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::checkpoint_version,
                path.string() + ": format version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  std::uint64_t hlen = 0;
  std::memcpy(&hlen, bytes.data() + 8, sizeof(hlen));
  if (bytes.size() < kFixed + hlen + 32)
    throw Error(ErrorCode::checkpoint_truncated, path.string() + ": header extends past end of file");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<long>(kFixed),
                                   bytes.begin() + static_cast<long>(kFixed + hlen));
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::checkpoint_checksum, path.string() + ": header is corrupted");
  }

  // Rebuild the bundle skeleton, then overwrite every tensor from the payload.
  ModelBundle bundle;
  try {
    signal::TransformConfig transform;
    transform.c = header.at("transform").at("c").get<double>();
    transform.v_min = header.at("transform").at("v_min").get<double>();
    SubnetConfig slow_cfg = header.at("slow_config").get<SubnetConfig>();
    SubnetConfig fast_cfg = header.at("fast_config").get<SubnetConfig>();
    bundle = build_model(slow_cfg, fast_cfg, header.at("labels").get<std::vector<std::string>>(), transform,
                         zstats_from_json(header.at("zscore")), header.at("window_length").get<Index>(),
                         /*seed=*/0, /*init_weights=*/false);
    bundle.slow_trained = header.at("stages").at("slow").get<bool>();
    bundle.fast_trained = header.at("stages").at("fast").get<bool>();
    bundle.joint_trained = header.at("stages").at("joint").get<bool>();
    bundle.train_meta = header.value("train_meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse, path.string() + ": malformed header: " + e.what());
  }

  auto tensors = bundle.named_tensors();
  const auto& index = header.at("tensors");
  if (index.size() != tensors.size())
    throw Error(ErrorCode::parse, path.string() + ": tensor index does not match the declared architecture");

  std::size_t payload = 0;
  for (size_t i = 0; i < tensors.size(); ++i) {
    if (index[i].at("name").get<std::string>() != tensors[i].first)
      throw Error(ErrorCode::parse, path.string() + ": tensor " + std::to_string(i) + " is named '" +
                                        index[i].at("name").get<std::string>() + "', expected '" +
                                        tensors[i].first + "'");
    Shape shape;
    for (const auto& d : index[i].at("shape")) shape.push_back(d.get<Index>());
    if (shape != tensors[i].second->shape)
      throw Error(ErrorCode::parse, path.string() + ": tensor '" + tensors[i].first + "' has shape " +
                                        autograd::shape_str(shape) + ", expected " +
                                        autograd::shape_str(tensors[i].second->shape));
    payload += static_cast<std::size_t>(tensors[i].second->size()) * sizeof(float);
  }
  if (bytes.size() < kFixed + hlen + payload + 32)
    throw Error(ErrorCode::checkpoint_truncated, path.string() + ": payload extends past end of file");

  const std::size_t trailer_at = kFixed + static_cast<std::size_t>(hlen) + payload;
  const auto digest = Sha256::digest(bytes.data(), trailer_at);
  if (std::memcmp(digest.data(), bytes.data() + trailer_at, 32) != 0)
    throw Error(ErrorCode::checkpoint_checksum, path.string() + ": SHA-256 trailer mismatch");

  std::size_t off = kFixed + static_cast<std::size_t>(hlen);
  for (auto& [name, t] : tensors) {
    std::memcpy(t->data.data(), bytes.data() + off, static_cast<std::size_t>(t->size()) * sizeof(float));
    off += static_cast<std::size_t>(t->size()) * sizeof(float);
  }
  return bundle;
}

}  // namespace eyedent::model
