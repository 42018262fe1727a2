#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uta/checkpoint.hpp"
#include "uta/losses.hpp"
#include "uta/metrics.hpp"
#include "uta/pseudo_gt.hpp"
#include "uta/simgen.hpp"

namespace uta {

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double lr_start = 5e-4;
  double lr_end = 1e-6;
  int batch_size = 16;
  int epochs = 300;
  int steps_override = 0;  // > 0 runs exactly that many steps
  int crop_h = 0, crop_w = 0;  // 0: half of each input dimension (1/4 area)
  bool augment_flip = true;
  bool augment_rotate = true;
  bool detach_tcc_input = false;
  std::uint64_t seed = 42;
  LossWeights loss_weights;
};

/// One parsed configuration document covering all module configs. The env
/// var UTA_SEED, when set, overrides train.seed.
struct PipelineConfig {
  TrainConfig train;
  SisConfig sis;
  TccConfig tcc;
  SimConfig sim;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_json_text(const std::string& text);
void save_pipeline_config(const std::filesystem::path& path, const PipelineConfig& cfg);

// --- Scene storage ----------------------------------------------------------
// <root>/<scene>/thermal/%06d.png, events.csv, rig.json, optional scene.json
// (frame clock), optional events/%06d.png pre-rendered slices; caches under
// <root>/<scene>/{masks,sis_gt,tcc_gt}/.

struct SceneData {
  std::string name;
  std::filesystem::path dir;
  int n_frames = 0;
  RigCalibration rig;
  FrameClock clock;
  bool has_event_rasters = false;  // events/%06d.png present
};

struct GroupRef {
  int scene_index = 0;
  int start_frame = 0;  // first frame of the T-frame window
};

struct SceneDataset {
  std::filesystem::path root;
  std::vector<SceneData> scenes;
  std::vector<GroupRef> groups;
  int group_len = 7;
  std::vector<std::string> diagnostics;  // one line per rejected group
};

SceneDataset load_dataset(const std::filesystem::path& root, int group_len = 7, int stride = 7);

/// Writes a scene directory from RGB frames: pseudo-thermal frames, the
/// synthesized event stream, per-frame event rasters, rig and clock files.
void write_scene(const std::filesystem::path& scene_dir, const std::vector<ColorImage>& frames,
                 const SimConfig& cfg, const RigCalibration& rig);

/// Loads the frames of one scene (thermal plus rendered event rasters).
struct SceneFrames {
  std::vector<ThermalFrame> thermal;
  std::vector<EventFrame> events;
};
SceneFrames load_scene_frames(const SceneData& scene, const SimConfig& sim = {});

struct PseudoGtOptions {
  RegionExtractionConfig regions;
  TccGtConfig tcc;
  bool overwrite = false;
};

/// Builds the masks/sis_gt/tcc_gt caches for every group of the dataset.
void build_pseudo_gt_cache(const SceneDataset& ds, const SimConfig& sim,
                           const PseudoGtOptions& opts = {});

// --- Training ----------------------------------------------------------------

struct TrainResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_csv;
  std::vector<LossReport> reports;  // one per step
  double first_ma10 = 0.0;          // 10-step moving average of the total at start
  double final_total = 0.0;
};

/// End-to-end training per the configured schedule. Deterministic for a fixed
/// seed. Throws on NaN/Inf total loss.
TrainResult train(const SceneDataset& ds, const PipelineConfig& cfg,
                  const std::filesystem::path& out_dir);

// --- Inference / evaluation ---------------------------------------------------

/// Sliding-window video inference: frames t < N (1-based) emit the SIS sketch,
/// later frames the TCC refinement of the N most recent sketches. Returns the
/// written file paths (one per input frame).
std::vector<std::filesystem::path> infer_video(const ModelBundle& bundle, const SceneData& scene,
                                               const std::filesystem::path& out_dir,
                                               const SimConfig& sim = {});

struct EvalRow {
  std::string frame;
  std::optional<double> en, sd, niqe_score;
};

/// Per-frame metrics plus a trailing mean row; written as CSV when out_csv is
/// non-empty.
std::vector<EvalRow> evaluate(const std::filesystem::path& frames_dir,
                              const std::vector<std::string>& metric_names,
                              const NiqeModel* model,
                              const std::filesystem::path& out_csv = {});

}  // namespace uta
