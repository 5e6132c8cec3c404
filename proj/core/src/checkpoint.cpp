#include "shufflerl/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "shufflerl/errors.hpp"

namespace shufflerl {

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kBlobName = "params.bin";

void put_le(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

double get_le(const char* in) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, ActorCritic& network,
                     const nlohmann::json& metadata) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  std::vector<char> blob;
  for (const auto& p : network.parameters()) {
    entries.push_back({{"name", p.name}, {"count", p.value.size()}, {"trainable", p.trainable}});
    for (double v : p.value) put_le(blob, v);
  }
  const nlohmann::json manifest = {{"format", "shufflerl-checkpoint"},
                                   {"version", kCheckpointVersion},
                                   {"seed", network.seed()},
                                   {"architecture", network.spec()},
                                   {"parameters", entries},
                                   {"blob", kBlobName},
                                   {"blob_bytes", blob.size()},
                                   {"metadata", metadata}};
  std::ofstream(dir / kManifestName) << manifest.dump(2) << '\n';
  std::ofstream out(dir / kBlobName, std::ios::binary);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error(fmt::format("failed writing checkpoint to {}", dir.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream manifest_in(dir / kManifestName);
  if (!manifest_in)
    throw DataError(fmt::format("{}: missing {}", dir.string(), kManifestName));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("{}: invalid manifest: {}", dir.string(), e.what()));
  }
  if (manifest.value("format", "") != "shufflerl-checkpoint" ||
      manifest.value("version", 0) != kCheckpointVersion)
    throw DataError(fmt::format("{}: unsupported checkpoint format", dir.string()));

  ActorCritic network(manifest.at("architecture").get<ArchitectureSpec>(),
                      manifest.at("seed").get<std::uint64_t>());

  std::ifstream blob_in(dir / kBlobName, std::ios::binary);
  if (!blob_in) throw DataError(fmt::format("{}: missing {}", dir.string(), kBlobName));
  const std::vector<char> blob((std::istreambuf_iterator<char>(blob_in)),
                               std::istreambuf_iterator<char>());

  auto params = network.parameters();
  const auto& entries = manifest.at("parameters");
  if (entries.size() != params.size())
    throw DataError(fmt::format("{}: manifest lists {} parameters, architecture has {}",
                                dir.string(), entries.size(), params.size()));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = entries[i];
    if (e.at("name").get<std::string>() != params[i].name ||
        e.at("count").get<std::size_t>() != params[i].value.size())
      throw DataError(fmt::format("{}: parameter {} ('{}') does not match the architecture",
                                  dir.string(), i, e.at("name").get<std::string>()));
    if (offset + 8 * params[i].value.size() > blob.size())
      throw DataError(fmt::format("{}: parameter blob is truncated", dir.string()));
    for (auto& v : params[i].value) {
      v = get_le(blob.data() + offset);
      offset += 8;
    }
  }
  if (offset != blob.size())
    throw DataError(fmt::format("{}: parameter blob has {} trailing bytes", dir.string(),
                                blob.size() - offset));
  return {std::move(network), manifest.value("metadata", nlohmann::json::object())};
}

}  // namespace shufflerl
