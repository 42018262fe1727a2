#include <algorithm>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "uta/harness.hpp"
#include "uta/io.hpp"

namespace uta {

namespace {

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

nlohmann::json tcc_to_json(const TccConfig& c) {
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

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

PipelineConfig pipeline_config_from_json_text(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  PipelineConfig cfg;
  if (j.contains("train")) {
    const auto& t = j.at("train");
    maybe(t, "beta1", cfg.train.beta1);
    maybe(t, "beta2", cfg.train.beta2);
    maybe(t, "lr_start", cfg.train.lr_start);
    maybe(t, "lr_end", cfg.train.lr_end);
    maybe(t, "batch_size", cfg.train.batch_size);
    maybe(t, "epochs", cfg.train.epochs);
    maybe(t, "steps_override", cfg.train.steps_override);
    maybe(t, "crop_h", cfg.train.crop_h);
    maybe(t, "crop_w", cfg.train.crop_w);
    maybe(t, "augment_flip", cfg.train.augment_flip);
    maybe(t, "augment_rotate", cfg.train.augment_rotate);
    maybe(t, "detach_tcc_input", cfg.train.detach_tcc_input);
    maybe(t, "seed", cfg.train.seed);
    if (t.contains("loss_weights")) {
      const auto& w = t.at("loss_weights");
      maybe(w, "sis", cfg.train.loss_weights.sis);
      maybe(w, "tcc", cfg.train.loss_weights.tcc);
      maybe(w, "perceptual", cfg.train.loss_weights.perceptual);
      maybe(w, "gradient", cfg.train.loss_weights.gradient);
    }
  }
  if (j.contains("sis")) {
    maybe(j.at("sis"), "levels", cfg.sis.levels);
    maybe(j.at("sis"), "base_channels", cfg.sis.base_channels);
  }
  if (j.contains("tcc")) {
    const auto& t = j.at("tcc");
    maybe(t, "n_frames", cfg.tcc.n_frames);
    if (t.contains("window")) {
      cfg.tcc.window_d = t.at("window").at(0).get<int>();
      cfg.tcc.window_h = t.at("window").at(1).get<int>();
      cfg.tcc.window_w = t.at("window").at(2).get<int>();
    }
    if (t.contains("stage_depths"))
      for (int i = 0; i < 4; ++i) cfg.tcc.stage_depths[i] = t.at("stage_depths").at(i).get<int>();
    if (t.contains("heads"))
      for (int i = 0; i < 4; ++i) cfg.tcc.heads[i] = t.at("heads").at(i).get<int>();
    maybe(t, "embed_dim", cfg.tcc.embed_dim);
    maybe(t, "patch_size", cfg.tcc.patch_size);
    maybe(t, "align_kernel", cfg.tcc.align_kernel);
    maybe(t, "decode_dim", cfg.tcc.decode_dim);
    maybe(t, "decode_heads", cfg.tcc.decode_heads);
    maybe(t, "decode_window", cfg.tcc.decode_window);
  }
  if (j.contains("sim")) {
    const auto& s = j.at("sim");
    maybe(s, "contrast_threshold", cfg.sim.contrast_threshold);
    maybe(s, "window_us", cfg.sim.window_us);
    maybe(s, "group_len", cfg.sim.group_len);
    maybe(s, "render_gain", cfg.sim.render_gain);
    maybe(s, "quant_levels", cfg.sim.quant_levels);
    maybe(s, "blur_sigma", cfg.sim.blur_sigma);
  }
  if (const char* env_seed = std::getenv("UTA_SEED"))
    cfg.train.seed = std::strtoull(env_seed, nullptr, 10);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return pipeline_config_from_json_text(text);
}

void save_pipeline_config(const std::filesystem::path& path, const PipelineConfig& cfg) {
  nlohmann::json j;
  j["train"] = {{"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"lr_start", cfg.train.lr_start},
                {"lr_end", cfg.train.lr_end},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"steps_override", cfg.train.steps_override},
                {"crop_h", cfg.train.crop_h},
                {"crop_w", cfg.train.crop_w},
                {"augment_flip", cfg.train.augment_flip},
                {"augment_rotate", cfg.train.augment_rotate},
                {"detach_tcc_input", cfg.train.detach_tcc_input},
                {"seed", cfg.train.seed},
                {"loss_weights",
                 {{"sis", cfg.train.loss_weights.sis},
                  {"tcc", cfg.train.loss_weights.tcc},
                  {"perceptual", cfg.train.loss_weights.perceptual},
                  {"gradient", cfg.train.loss_weights.gradient}}}};
  j["sis"] = {{"levels", cfg.sis.levels}, {"base_channels", cfg.sis.base_channels}};
  j["tcc"] = tcc_to_json(cfg.tcc);
  j["sim"] = {{"contrast_threshold", cfg.sim.contrast_threshold},
              {"window_us", cfg.sim.window_us},
              {"group_len", cfg.sim.group_len},
              {"render_gain", cfg.sim.render_gain},
              {"quant_levels", cfg.sim.quant_levels},
              {"blur_sigma", cfg.sim.blur_sigma}};
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Scene storage
// ---------------------------------------------------------------------------

void write_scene(const std::filesystem::path& scene_dir, const std::vector<ColorImage>& frames,
                 const SimConfig& cfg, const RigCalibration& rig) {
  if (frames.empty()) throw Error("write_scene: no frames");
  std::filesystem::create_directories(scene_dir / "thermal");
  std::filesystem::create_directories(scene_dir / "events");
  std::filesystem::create_directories(scene_dir / "rgb");

  std::vector<Image> lum;
  std::vector<std::int64_t> ts;
  for (size_t k = 0; k < frames.size(); ++k) {
    lum.push_back(frames[k].luminance());
    ts.push_back(static_cast<std::int64_t>(k) * cfg.window_us);
    write_png_gray(scene_dir / "thermal" / frame_name(static_cast<int>(k)),
                   rgb_to_pseudo_thermal(frames[k], cfg));
    write_png_rgb(scene_dir / "rgb" / frame_name(static_cast<int>(k)), frames[k]);
  }

  EventStream events = synthesize_events(lum, ts, cfg);
  // Shift times so every event is non-negative with the centered-window clock.
  const std::int64_t t_shift = cfg.window_us / 2;
  for (EventRecord& e : events) e.t_us += t_shift;
  write_events_csv(scene_dir / "events.csv", events);

  const FrameClock clock{cfg.window_us, 0};
  const Resolution res{frames[0].width(), frames[0].height()};
  const auto slices = partition_stream(events, clock, static_cast<int>(frames.size()));
  for (size_t k = 0; k < slices.size(); ++k) {
    EventFrame ef = render_frame(slices[k], res, cfg.render_gain,
                                 clock.t0_us + static_cast<std::int64_t>(k) * clock.period_us,
                                 clock.t0_us + static_cast<std::int64_t>(k + 1) * clock.period_us);
    write_png_gray(scene_dir / "events" / frame_name(static_cast<int>(k)), ef.pixels);
  }

  save_rig(scene_dir / "rig.json", rig);
  nlohmann::json sj = {{"period_us", clock.period_us}, {"t0_us", clock.t0_us}};
  std::ofstream out(scene_dir / "scene.json");
  out << sj.dump(2) << '\n';
}

SceneDataset load_dataset(const std::filesystem::path& root, int group_len, int stride) {
  SceneDataset ds;
  ds.root = root;
  ds.group_len = group_len;
  if (!std::filesystem::exists(root)) return ds;

  std::vector<std::filesystem::path> scene_dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) scene_dirs.push_back(entry.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());

  for (const auto& dir : scene_dirs) {
    SceneData scene;
    scene.name = dir.filename().string();
    scene.dir = dir;
    if (!std::filesystem::exists(dir / "thermal")) {
      ds.diagnostics.push_back(scene.name + ": no thermal/ directory, skipped");
      continue;
    }
    int n = 0;
    while (std::filesystem::exists(dir / "thermal" / frame_name(n))) ++n;
    scene.n_frames = n;

    if (std::filesystem::exists(dir / "rig.json")) {
      scene.rig = load_rig(dir / "rig.json");
    } else {
      Image first = read_png_gray(dir / "thermal" / frame_name(0));
      scene.rig.h_ir_to_ev = Homography::identity();
      scene.rig.ir_resolution = {first.width(), first.height()};
      scene.rig.ev_resolution = scene.rig.ir_resolution;
    }
    if (std::filesystem::exists(dir / "scene.json")) {
      std::ifstream in(dir / "scene.json");
      nlohmann::json j;
      in >> j;
      scene.clock.period_us = j.value("period_us", scene.clock.period_us);
      scene.clock.t0_us = j.value("t0_us", scene.clock.t0_us);
    }
    scene.has_event_rasters = std::filesystem::exists(dir / "events");
    const bool has_stream = std::filesystem::exists(dir / "events.csv") ||
                            std::filesystem::exists(dir / "events.bin");

    const int scene_index = static_cast<int>(ds.scenes.size());
    for (int start = 0; start + group_len <= scene.n_frames; start += stride) {
      bool ok = true;
      for (int k = 0; k < group_len && ok; ++k) {
        if (!std::filesystem::exists(dir / "thermal" / frame_name(start + k))) ok = false;
        if (scene.has_event_rasters &&
            !std::filesystem::exists(dir / "events" / frame_name(start + k))) {
          ds.diagnostics.push_back(scene.name + ": group@" + std::to_string(start) +
                                   " missing event raster " + frame_name(start + k));
          ok = false;
        }
      }
      if (!scene.has_event_rasters && !has_stream) {
        ds.diagnostics.push_back(scene.name + ": group@" + std::to_string(start) +
                                 " has no event source");
        ok = false;
      }
      if (ok) ds.groups.push_back({scene_index, start});
    }
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

SceneFrames load_scene_frames(const SceneData& scene, const SimConfig& sim) {
  SceneFrames out;
  for (int k = 0; k < scene.n_frames; ++k)
    out.thermal.push_back(read_png_gray(scene.dir / "thermal" / frame_name(k)));

  if (scene.has_event_rasters) {
    for (int k = 0; k < scene.n_frames; ++k) {
      EventFrame ef;
      ef.pixels = read_png_gray(scene.dir / "events" / frame_name(k));
      ef.t_start_us = scene.clock.t0_us + static_cast<std::int64_t>(k) * scene.clock.period_us;
      ef.t_end_us = ef.t_start_us + scene.clock.period_us;
      out.events.push_back(std::move(ef));
    }
    return out;
  }

  const auto stream_path = std::filesystem::exists(scene.dir / "events.csv")
                               ? scene.dir / "events.csv"
                               : scene.dir / "events.bin";
  const EventStream stream = read_events(stream_path);
  const auto slices = partition_stream(stream, scene.clock, scene.n_frames);
  const Resolution res{scene.rig.ev_resolution.width, scene.rig.ev_resolution.height};
  const bool registered = scene.rig.h_ir_to_ev.approx_equal(Homography::identity(), 1e-12) &&
                          scene.rig.ev_resolution.width == scene.rig.ir_resolution.width &&
                          scene.rig.ev_resolution.height == scene.rig.ir_resolution.height;
  for (int k = 0; k < scene.n_frames; ++k) {
    EventFrame ef = render_frame(slices[k], res, sim.render_gain,
                                 scene.clock.t0_us + static_cast<std::int64_t>(k) * scene.clock.period_us,
                                 scene.clock.t0_us + static_cast<std::int64_t>(k + 1) * scene.clock.period_us);
    if (!registered) {
      // Place the event content into thermal pixel coordinates.
      Image warped(out.thermal[k].height(), out.thermal[k].width());
      const Homography& h = scene.rig.h_ir_to_ev;
      for (int y = 0; y < warped.height(); ++y)
        for (int x = 0; x < warped.width(); ++x) {
          double u = 0, v = 0;
          h.apply(x, y, u, v);
          warped.at(y, x) = ef.pixels.sample_bilinear(u, v);
        }
      ef.pixels = std::move(warped);
    }
    out.events.push_back(std::move(ef));
  }
  return out;
}

void build_pseudo_gt_cache(const SceneDataset& ds, const SimConfig& sim,
                           const PseudoGtOptions& opts) {
  for (const GroupRef& group : ds.groups) {
    const SceneData& scene = ds.scenes[group.scene_index];
    // Frames are loaded per group so huge scenes never sit in memory at once.
    SceneFrames frames = load_scene_frames(scene, sim);

    std::vector<EventFrame> ev(frames.events.begin() + group.start_frame,
                               frames.events.begin() + group.start_frame + ds.group_len);
    std::vector<ThermalFrame> ir(frames.thermal.begin() + group.start_frame,
                                 frames.thermal.begin() + group.start_frame + ds.group_len);

    // Event rasters are already in thermal coordinates here, so the Eq.-11
    // transfer runs against an identity rig.
    RigCalibration identity_rig;
    identity_rig.h_ir_to_ev = Homography::identity();
    identity_rig.ir_resolution = {ir[0].width(), ir[0].height()};
    identity_rig.ev_resolution = identity_rig.ir_resolution;

    for (int t = 1; t <= ds.group_len; ++t) {
      const int frame_index = group.start_frame + t - 1;
      const auto mask_path = scene.dir / "masks" / frame_name(frame_index);
      const auto sis_path = scene.dir / "sis_gt" / frame_name(frame_index);
      const auto tcc_path = scene.dir / "tcc_gt" / frame_name(frame_index);
      if (!opts.overwrite && std::filesystem::exists(mask_path) &&
          std::filesystem::exists(sis_path) && std::filesystem::exists(tcc_path))
        continue;

      const auto regions = extract_signage_regions(ev[t - 1], ir[t - 1], opts.regions);
      const SignageMask mask =
          build_mask(regions, {ir[t - 1].width(), ir[t - 1].height()});
      const Image sis_gt = compose_sis_gt(mask, ev[t - 1], ir[t - 1]);
      const TccTarget tcc_gt = build_tcc_gt(ev, ir, identity_rig, t, opts.tcc);

      write_png_gray(mask_path, mask.pixels);
      write_png_gray(sis_path, sis_gt);
      write_png_gray(tcc_path, tcc_gt.pixels);
    }
  }
}

}  // namespace uta
