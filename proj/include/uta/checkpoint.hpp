#pragma once

#include <filesystem>
#include <memory>

#include "uta/sis.hpp"
#include "uta/tcc.hpp"

namespace uta {

/// Joint SIS+TCC model bundle backing the `UTASIGN-CKPT-v1` archive.
struct ModelBundle {
  SisConfig sis_cfg;
  TccConfig tcc_cfg;
  std::unique_ptr<SisNet> sis;
  std::unique_ptr<TccNet> tcc;

  static ModelBundle create(const SisConfig& sis_cfg, const TccConfig& tcc_cfg,
                            std::uint64_t seed);
  std::vector<nn::Var> all_params() const;
};

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace uta
