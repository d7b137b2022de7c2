// SPDX-License-Identifier: Apache-2.0

#include "csn/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace csn {

namespace {

using json = nlohmann::json;

constexpr std::array<char, 8> kMagic = {'C', 'S', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

float get_f32(const unsigned char* b) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const Vocabulary& vocabulary,
                     const CsnModel<T>& model) {
  json header;
  header["config"] = config.serialize();
  header["vocabulary"] = vocabulary.tokens();
  json params = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.parameters()) {
    params.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  header["parameters"] = params;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.parameters())
    for (Index i = 0; i < p.value.size(); ++i) put_f32(out, static_cast<float>(p.value.data()[i]));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic)
    throw DataError(path.string() + " is not a checkpoint file");
  const std::uint64_t length = get_u64(in);
  if (length > (1ULL << 32)) throw DataError("checkpoint header is implausibly large");
  std::string text(static_cast<std::size_t>(length), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw DataError("checkpoint truncated");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  }
  RunConfig config;
  Vocabulary vocab;
  try {
    config = RunConfig::parse(header.at("config").get<std::string>());
    vocab = Vocabulary::from_tokens(header.at("vocabulary").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header: " + std::string(e.what()));
  } catch (const ConfigError& e) {
    throw DataError("checkpoint configuration invalid: " + std::string(e.what()));
  }

  Checkpoint ck{config, vocab, CsnModel<float>(config.model_config(), vocab.size())};
  auto& params = ck.model.parameters();
  const json& entries = header.at("parameters");
  if (entries.size() != params.size())
    throw DataError("checkpoint has " + std::to_string(entries.size()) + " parameters, configuration expects " +
                    std::to_string(params.size()));

  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const json& e = entries[i];
    const auto name = e.at("name").get<std::string>();
    const auto rows = e.at("rows").get<Index>(), cols = e.at("cols").get<Index>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols())
      throw DataError("checkpoint parameter " + name + " (" + std::to_string(rows) + "x" + std::to_string(cols) +
                      ") does not match configuration (" + p.name + " " + std::to_string(p.value.rows()) + "x" +
                      std::to_string(p.value.cols()) + ")");
    if ((offset + static_cast<std::uint64_t>(p.value.size())) * 4 > payload.size())
      throw DataError("checkpoint payload truncated at " + name);
    for (Index k = 0; k < p.value.size(); ++k) p.value.data()[k] = get_f32(bytes + (offset + static_cast<std::uint64_t>(k)) * 4);
  }
  return ck;
}

template void save_checkpoint<float>(const std::filesystem::path&, const RunConfig&, const Vocabulary&,
                                     const CsnModel<float>&);
template void save_checkpoint<double>(const std::filesystem::path&, const RunConfig&, const Vocabulary&,
                                      const CsnModel<double>&);

}  // namespace csn
