#include <doctest.h>

#include <fstream>
#include <random>

#include "uta/harness.hpp"
#include "uta/io.hpp"

using namespace uta;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("uta_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

PseudoGtOptions small_scene_gt_options() {
  // 64x64 frames carry fewer detectable corners than full-size captures.
  PseudoGtOptions opts;
  opts.tcc.motion.min_corners = 10;
  opts.tcc.motion.min_corner_distance = 4;
  return opts;
}

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.sis.levels = 2;
  cfg.sis.base_channels = 4;
  cfg.tcc.n_frames = 3;
  cfg.tcc.embed_dim = 8;
  cfg.tcc.heads = {1, 2, 4, 8};
  cfg.tcc.patch_size = 4;
  cfg.tcc.decode_dim = 8;
  cfg.tcc.decode_heads = 2;
  cfg.sim.group_len = 3;
  cfg.train.batch_size = 1;
  cfg.train.steps_override = 3;
  cfg.train.crop_h = 32;
  cfg.train.crop_w = 32;
  cfg.train.seed = 5;
  return cfg;
}

void write_demo_dataset(const std::filesystem::path& root, const PipelineConfig& cfg,
                        int scenes = 1, int frames = 6) {
  for (int s = 0; s < scenes; ++s) {
    DemoSceneConfig dc;
    dc.width = 64;
    dc.height = 64;
    dc.n_frames = frames;
    dc.seed = 100 + s;
    RigCalibration rig;
    rig.ir_resolution = {dc.width, dc.height};
    rig.ev_resolution = rig.ir_resolution;
    write_scene(root / ("scene" + std::to_string(s)), make_demo_scene(dc), cfg.sim, rig);
  }
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("pipeline config document") {
  const std::string text = R"({
    "train": {"batch_size": 4, "epochs": 20, "lr_start": 5e-4, "seed": 9,
              "loss_weights": {"gradient": 0.5}},
    "sis": {"levels": 3, "base_channels": 16},
    "tcc": {"n_frames": 7, "stage_depths": [2, 2, 6, 2], "embed_dim": 24},
    "sim": {"contrast_threshold": 0.25}
  })";
  const PipelineConfig cfg = pipeline_config_from_json_text(text);
  CHECK(cfg.train.batch_size == 4);
  CHECK(cfg.train.loss_weights.gradient == 0.5);
  CHECK(cfg.train.loss_weights.sis == 1.0);
  CHECK(cfg.sis.levels == 3);
  CHECK(cfg.tcc.embed_dim == 24);
  CHECK(cfg.sim.contrast_threshold == 0.25);
  CHECK(cfg.train.beta1 == 0.9);
  CHECK(cfg.train.beta2 == 0.95);

  SUBCASE("UTA_SEED environment override wins") {
    setenv("UTA_SEED", "777", 1);
    const PipelineConfig over = pipeline_config_from_json_text(text);
    unsetenv("UTA_SEED");
    CHECK(over.train.seed == 777);
  }
}

TEST_CASE("dataset loading and validation") {
  SUBCASE("empty root loads an empty dataset") {
    const SceneDataset ds = load_dataset("/nonexistent/uta_nowhere", 7, 7);
    CHECK(ds.groups.empty());
    CHECK(ds.scenes.empty());
  }
  SUBCASE("14 frames at stride 7 give two groups") {
    TempDir tmp("ds14");
    PipelineConfig cfg = tiny_config();
    write_demo_dataset(tmp.path, cfg, 1, 14);
    const SceneDataset ds = load_dataset(tmp.path, 7, 7);
    CHECK(ds.scenes.size() == 1);
    CHECK(ds.groups.size() == 2);
  }
  SUBCASE("a missing event raster excludes the group with a diagnostic") {
    TempDir tmp("dsmiss");
    PipelineConfig cfg = tiny_config();
    write_demo_dataset(tmp.path, cfg, 1, 14);
    std::filesystem::remove(tmp.path / "scene0" / "events" / "000003.png");
    const SceneDataset ds = load_dataset(tmp.path, 7, 7);
    CHECK(ds.groups.size() == 1);
    REQUIRE(ds.diagnostics.size() == 1);
    CHECK(ds.diagnostics[0].find("000003.png") != std::string::npos);
  }
}

TEST_CASE("pseudo ground truth cache and augmentation consistency") {
  TempDir tmp("cache");
  PipelineConfig cfg = tiny_config();
  write_demo_dataset(tmp.path, cfg, 1, 6);
  const SceneDataset ds = load_dataset(tmp.path, cfg.sim.group_len, cfg.sim.group_len);
  REQUIRE(ds.groups.size() == 2);
  build_pseudo_gt_cache(ds, cfg.sim, small_scene_gt_options());

  for (int f = 0; f < 6; ++f) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06d.png", f);
    CHECK(std::filesystem::exists(tmp.path / "scene0" / "masks" / name));
    CHECK(std::filesystem::exists(tmp.path / "scene0" / "sis_gt" / name));
    CHECK(std::filesystem::exists(tmp.path / "scene0" / "tcc_gt" / name));
  }

  // The cached Eq.-5 relation must survive every flip/rotation bit-exactly.
  const Image mask = read_png_gray(tmp.path / "scene0" / "masks" / "000002.png");
  const Image sis_gt = read_png_gray(tmp.path / "scene0" / "sis_gt" / "000002.png");
  const Image ev = read_png_gray(tmp.path / "scene0" / "events" / "000002.png");
  const Image ir = read_png_gray(tmp.path / "scene0" / "thermal" / "000002.png");
  auto check_relation = [](const Image& m, const Image& g, const Image& e, const Image& i) {
    for (size_t p = 0; p < m.size(); ++p) {
      const double want = m[p] > 0.5 ? e[p] : i[p];
      CHECK(g[p] == want);
    }
  };
  check_relation(mask, sis_gt, ev, ir);
  check_relation(flip_horizontal(mask), flip_horizontal(sis_gt), flip_horizontal(ev),
                 flip_horizontal(ir));
  check_relation(rotate90(mask, 1), rotate90(sis_gt, 1), rotate90(ev, 1), rotate90(ir, 1));
  check_relation(flip_vertical(rotate90(mask, 3)), flip_vertical(rotate90(sis_gt, 3)),
                 flip_vertical(rotate90(ev, 3)), flip_vertical(rotate90(ir, 3)));
}

TEST_CASE("training smoke: runs, logs, reproduces bit-exactly") {
  TempDir tmp("train");
  PipelineConfig cfg = tiny_config();
  write_demo_dataset(tmp.path / "data", cfg, 1, 6);
  SceneDataset ds = load_dataset(tmp.path / "data", cfg.sim.group_len, cfg.sim.group_len);
  REQUIRE(ds.groups.size() == 2);
  build_pseudo_gt_cache(ds, cfg.sim, small_scene_gt_options());

  const TrainResult a = train(ds, cfg, tmp.path / "run_a");
  REQUIRE(a.reports.size() == 3);
  CHECK(std::filesystem::exists(a.checkpoint));
  CHECK(std::filesystem::exists(a.loss_csv));
  for (const auto& r : a.reports) CHECK(std::isfinite(r.total));

  // Loss CSV has a header plus one row per step.
  std::ifstream csv(a.loss_csv);
  std::string line;
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);

  const TrainResult b = train(ds, cfg, tmp.path / "run_b");
  std::ifstream fa(a.loss_csv), fb(b.loss_csv);
  std::stringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  CHECK(sa.str() == sb.str());

  SUBCASE("learning rate endpoints follow the linear schedule") {
    PipelineConfig big = cfg;
    big.train.steps_override = 0;
    big.train.epochs = 2;
    // total steps = 2 epochs * ceil(2 groups / 1) = 4; endpoints checked via
    // the documented formula rather than a full run here.
    const int total = 4;
    const double lr0 = big.train.lr_start;
    const double lrN = big.train.lr_start +
                       (big.train.lr_end - big.train.lr_start) * (total - 1) / (total - 1);
    CHECK(lr0 == doctest::Approx(5e-4).epsilon(1e-12));
    CHECK(lrN == doctest::Approx(1e-6).epsilon(1e-9));
  }

  SUBCASE("checkpoint round-trips through the archive") {
    const ModelBundle loaded = load_checkpoint(a.checkpoint);
    CHECK(loaded.sis_cfg.levels == cfg.sis.levels);
    CHECK(loaded.tcc_cfg.n_frames == cfg.tcc.n_frames);
    // Identical forward on a fixed input.
    std::mt19937_64 rng(3);
    Image ev(32, 32), ir(32, 32);
    std::uniform_real_distribution<double> v(0, 1);
    for (size_t i = 0; i < ev.size(); ++i) {
      ev[i] = v(rng);
      ir[i] = v(rng);
    }
    const ModelBundle loaded2 = load_checkpoint(a.checkpoint);
    const Image o1 = loaded.sis->forward_image(ev, ir);
    const Image o2 = loaded2.sis->forward_image(ev, ir);
    CHECK(o1 == o2);
  }

  SUBCASE("inference emits one output per input frame") {
    const ModelBundle bundle = load_checkpoint(a.checkpoint);
    const auto files = infer_video(bundle, ds.scenes[0], tmp.path / "out");
    CHECK(files.size() == 6);  // 2 SIS-only frames, then TCC refinements
    for (const auto& f : files) CHECK(std::filesystem::exists(f));
  }
}

TEST_CASE("evaluate reports per-frame metrics plus a mean row") {
  TempDir tmp("eval");
  // Two constant frames: EN = 0, SD = 0.
  write_png_gray(tmp.path / "a.png", Image(32, 32, 0.25));
  write_png_gray(tmp.path / "b.png", Image(32, 32, 0.75));
  const auto rows = evaluate(tmp.path, {"en", "sd"}, nullptr, tmp.path / "report.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].en == 0.0);
  CHECK(rows[0].sd == 0.0);
  CHECK(rows[2].frame == "mean");
  CHECK(*rows[2].en == doctest::Approx((*rows[0].en + *rows[1].en) / 2).epsilon(1e-9));
  CHECK(*rows[2].sd == doctest::Approx((*rows[0].sd + *rows[1].sd) / 2).epsilon(1e-9));
  CHECK(std::filesystem::exists(tmp.path / "report.csv"));
}

TEST_SUITE_END();
