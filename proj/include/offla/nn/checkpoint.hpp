#pragma once

// Checkpoints are two files: `<base>.bin` holds every parameter as raw
// little-endian f64 back to back, `<base>.json` is the manifest with names,
// shapes, byte offsets and the hash of the config that produced them.

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "offla/nn/layers.hpp"
#include "offla/util/binary_io.hpp"

namespace offla::nn {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline void save_checkpoint(const ParameterList& params, const std::string& base, std::uint64_t config_hash,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open for writing: " + base + ".bin");
  nlohmann::ordered_json manifest;
  manifest["format"] = "offla-checkpoint";
  manifest["version"] = 1;
  manifest["config_hash"] = hex64(config_hash);
  manifest["extra"] = extra;
  auto tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    const Matrix& v = p.tensor.value();
    tensors.push_back({{"name", p.name}, {"rows", v.rows()}, {"cols", v.cols()}, {"offset", offset}});
    for (Eigen::Index i = 0; i < v.size(); ++i) io::write_f64(bin, v.data()[i]);
    offset += static_cast<std::uint64_t>(v.size()) * sizeof(double);
  }
  manifest["tensors"] = std::move(tensors);
  manifest["total_bytes"] = offset;
  if (!bin) throw std::runtime_error("write failed: " + base + ".bin");
  std::ofstream js(base + ".json");
  if (!js) throw std::runtime_error("cannot open for writing: " + base + ".json");
  js << manifest.dump(2) << '\n';
}

inline nlohmann::json read_checkpoint_manifest(const std::string& base) {
  std::ifstream js(base + ".json");
  if (!js) throw std::runtime_error("cannot open for reading: " + base + ".json");
  nlohmann::json manifest = nlohmann::json::parse(js);
  if (manifest.value("format", "") != "offla-checkpoint") throw std::runtime_error("not a checkpoint manifest: " + base);
  return manifest;
}

/// Loads values into `params`, which must match the manifest by name and shape.
inline void load_checkpoint(const ParameterList& params, const std::string& base,
                            std::optional<std::uint64_t> expected_hash = std::nullopt) {
  const nlohmann::json manifest = read_checkpoint_manifest(base);
  if (expected_hash && manifest.at("config_hash").get<std::string>() != hex64(*expected_hash))
    throw std::runtime_error("checkpoint " + base + " was produced by a different config");
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.size())
    throw std::runtime_error("checkpoint " + base + " holds " + std::to_string(tensors.size()) + " tensors, model has " +
                             std::to_string(params.size()));
  std::ifstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open for reading: " + base + ".bin");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    Tensor dst = params[i].tensor;
    if (t.at("name").get<std::string>() != params[i].name || t.at("rows").get<Eigen::Index>() != dst.rows() ||
        t.at("cols").get<Eigen::Index>() != dst.cols())
      throw std::runtime_error("checkpoint tensor mismatch at " + params[i].name);
    bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    Matrix& v = dst.mutable_value();
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = io::read_f64(bin);
  }
}

}  // namespace offla::nn
