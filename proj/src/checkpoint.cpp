#include "uta/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace uta {

namespace {

constexpr char kMagic[] = "UTASIGN-CKPT-v1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

nlohmann::json sis_cfg_json(const SisConfig& c) {
  return {{"levels", c.levels}, {"base_channels", c.base_channels}};
}

nlohmann::json tcc_cfg_json(const TccConfig& c) {
  return {{"n_frames", c.n_frames},
          {"window", {c.window_d, c.window_h, c.window_w}},
          {"stage_depths", c.stage_depths},
          {"embed_dim", c.embed_dim},
          {"heads", c.heads},
          {"patch_size", c.patch_size},
          {"align_kernel", c.align_kernel},
          {"decode_dim", c.decode_dim},
          {"decode_heads", c.decode_heads},
          {"decode_window", c.decode_window}};
}

SisConfig sis_cfg_from_json(const nlohmann::json& j) {
  SisConfig c;
  c.levels = j.at("levels").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  return c;
}

TccConfig tcc_cfg_from_json(const nlohmann::json& j) {
  TccConfig c;
  c.n_frames = j.at("n_frames").get<int>();
  c.window_d = j.at("window").at(0).get<int>();
  c.window_h = j.at("window").at(1).get<int>();
  c.window_w = j.at("window").at(2).get<int>();
  for (int i = 0; i < 4; ++i) {
    c.stage_depths[i] = j.at("stage_depths").at(i).get<int>();
    c.heads[i] = j.at("heads").at(i).get<int>();
  }
  c.embed_dim = j.at("embed_dim").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.align_kernel = j.at("align_kernel").get<int>();
  c.decode_dim = j.at("decode_dim").get<int>();
  c.decode_heads = j.at("decode_heads").get<int>();
  c.decode_window = j.at("decode_window").get<int>();
  return c;
}

}  // namespace

ModelBundle ModelBundle::create(const SisConfig& sis_cfg, const TccConfig& tcc_cfg,
                                std::uint64_t seed) {
  ModelBundle b;
  b.sis_cfg = sis_cfg;
  b.tcc_cfg = tcc_cfg;
  b.sis = std::make_unique<SisNet>(sis_cfg, seed);
  b.tcc = std::make_unique<TccNet>(tcc_cfg, seed + 1);
  return b;
}

std::vector<nn::Var> ModelBundle::all_params() const {
  std::vector<nn::Var> out;
  for (auto& [name, var] : sis->named_params()) out.push_back(var);
  for (auto& [name, var] : tcc->named_params()) out.push_back(var);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  nn::NamedParams params = bundle.sis->named_params();
  for (auto& p : bundle.tcc->named_params()) params.push_back(p);

  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, var] : params)
    manifest.push_back({{"name", name}, {"shape", var.shape()}});
  nlohmann::json header = {{"sis", sis_cfg_json(bundle.sis_cfg)},
                           {"tcc", tcc_cfg_json(bundle.tcc_cfg)},
                           {"params", manifest}};
  const std::string hdr = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, static_cast<std::streamsize>(kMagicLen));
  const std::uint64_t len = hdr.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  for (const auto& [name, var] : params)
    out.write(reinterpret_cast<const char*>(var.value().data()),
              static_cast<std::streamsize>(var.size() * sizeof(double)));
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  in.read(magic, static_cast<std::streamsize>(kMagicLen));
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
    throw IoError("bad checkpoint magic in " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hdr(len, '\0');
  in.read(hdr.data(), static_cast<std::streamsize>(len));
  const nlohmann::json header = nlohmann::json::parse(hdr);

  ModelBundle bundle = ModelBundle::create(sis_cfg_from_json(header.at("sis")),
                                           tcc_cfg_from_json(header.at("tcc")), 0);
  nn::NamedParams params = bundle.sis->named_params();
  for (auto& p : bundle.tcc->named_params()) params.push_back(p);

  const auto& manifest = header.at("params");
  if (manifest.size() != params.size())
    throw IoError("checkpoint parameter count mismatch in " + path.string());
  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, var] = params[i];
    if (manifest.at(i).at("name").get<std::string>() != name)
      throw IoError("checkpoint parameter order mismatch at " + name);
    in.read(reinterpret_cast<char*>(var.mutable_value().data()),
            static_cast<std::streamsize>(var.size() * sizeof(double)));
  }
  if (!in) throw IoError("truncated checkpoint " + path.string());
  return bundle;
}

}  // namespace uta
