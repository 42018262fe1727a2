#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <vector>

#include "uta/harness.hpp"
#include "uta/io.hpp"
#include "uta/metrics.hpp"

namespace fs = std::filesystem;

namespace {

uta::PipelineConfig load_cfg_or_default(const std::string& path) {
  if (path.empty()) return uta::pipeline_config_from_json_text("{}");
  return uta::load_pipeline_config(path);
}

std::vector<uta::ColorImage> read_rgb_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<uta::ColorImage> frames;
  for (const auto& f : files) frames.push_back(uta::read_png_rgb(f));
  return frames;
}

int run(int argc, char** argv) {
  CLI::App app{"UTA-Sign thermal-event signage sketching pipeline"};
  app.require_subcommand(1);

  // --- calib register ---
  auto* calib = app.add_subcommand("calib", "camera rig calibration");
  calib->require_subcommand(1);
  auto* reg = calib->add_subcommand("register", "register event gray frame to thermal frame");
  std::string reg_ev, reg_ir, reg_out = "rig.json";
  reg->add_option("--ev", reg_ev, "event-camera grayscale PNG")->required();
  reg->add_option("--ir", reg_ir, "thermal PNG")->required();
  reg->add_option("--out", reg_out, "output rig file");
  reg->callback([&] {
    const uta::Image ev = uta::read_png_gray(reg_ev);
    const uta::Image ir = uta::read_png_gray(reg_ir);
    const uta::Homography h_ev_to_ir = uta::register_modalities(ev, ir);
    const uta::RigCalibration rig = uta::make_rig_from_registration(h_ev_to_ir, ev, ir);
    uta::save_rig(reg_out, rig);
    std::cout << "wrote " << reg_out << "\n";
  });

  // --- simgen ---
  auto* simgen = app.add_subcommand("simgen", "build a simulated scene from RGB frames");
  std::string sg_in, sg_out, sg_cfg;
  int sg_demo = 0, sg_frames = 14, sg_size = 96;
  std::uint64_t sg_seed = 1;
  simgen->add_option("--in", sg_in, "directory of RGB PNG frames");
  simgen->add_option("--out", sg_out, "scene directory (or dataset root with --demo)")
      ->required();
  simgen->add_option("--cfg", sg_cfg, "pipeline config JSON");
  simgen->add_option("--demo", sg_demo, "generate N synthetic demo scenes instead of reading --in");
  simgen->add_option("--demo-frames", sg_frames, "frames per demo scene");
  simgen->add_option("--demo-size", sg_size, "demo scene width/height in px");
  simgen->add_option("--seed", sg_seed, "demo scene seed");
  simgen->callback([&] {
    const uta::PipelineConfig cfg = load_cfg_or_default(sg_cfg);
    uta::RigCalibration rig;
    rig.h_ir_to_ev = uta::Homography::identity();
    if (sg_demo > 0) {
      for (int s = 0; s < sg_demo; ++s) {
        uta::DemoSceneConfig dc;
        dc.width = dc.height = sg_size;
        dc.n_frames = sg_frames;
        dc.seed = sg_seed + s;
        dc.dx_per_frame = 2.0;
        dc.dy_per_frame = (s % 2 == 0) ? 0.0 : 1.0;
        const auto frames = uta::make_demo_scene(dc);
        rig.ir_resolution = {dc.width, dc.height};
        rig.ev_resolution = rig.ir_resolution;
        const fs::path dir = fs::path(sg_out) / ("scene" + std::to_string(s));
        uta::write_scene(dir, frames, cfg.sim, rig);
        std::cout << "wrote " << dir << "\n";
      }
      return;
    }
    if (sg_in.empty()) throw CLI::ValidationError("--in or --demo is required");
    const auto frames = read_rgb_dir(sg_in);
    if (frames.empty()) throw CLI::ValidationError("no PNG frames in " + sg_in);
    rig.ir_resolution = {frames[0].width(), frames[0].height()};
    rig.ev_resolution = rig.ir_resolution;
    uta::write_scene(sg_out, frames, cfg.sim, rig);
    std::cout << "wrote " << sg_out << "\n";
  });

  // --- pseudo-gt ---
  auto* pgt = app.add_subcommand("pseudo-gt", "build mask/sis_gt/tcc_gt caches");
  std::string pg_root, pg_cfg;
  bool pg_overwrite = false;
  pgt->add_option("--root", pg_root, "dataset root")->required();
  pgt->add_option("--cfg", pg_cfg, "pipeline config JSON");
  pgt->add_flag("--overwrite", pg_overwrite, "rebuild existing cache entries");
  pgt->callback([&] {
    const uta::PipelineConfig cfg = load_cfg_or_default(pg_cfg);
    const uta::SceneDataset ds = uta::load_dataset(pg_root, cfg.sim.group_len, cfg.sim.group_len);
    for (const auto& line : ds.diagnostics) std::cerr << "note: " << line << "\n";
    uta::PseudoGtOptions opts;
    opts.overwrite = pg_overwrite;
    uta::build_pseudo_gt_cache(ds, cfg.sim, opts);
    std::cout << "cached pseudo ground truth for " << ds.groups.size() << " groups\n";
  });

  // --- train ---
  auto* tr = app.add_subcommand("train", "train SIS+TCC on a dataset");
  std::string tr_root, tr_cfg, tr_out = "run";
  tr->add_option("--root", tr_root, "dataset root")->required();
  tr->add_option("--cfg", tr_cfg, "pipeline config JSON");
  tr->add_option("--out", tr_out, "output directory (checkpoint + loss CSV)");
  tr->callback([&] {
    const uta::PipelineConfig cfg = load_cfg_or_default(tr_cfg);
    uta::SceneDataset ds = uta::load_dataset(tr_root, cfg.tcc.n_frames, cfg.tcc.n_frames);
    for (const auto& line : ds.diagnostics) std::cerr << "note: " << line << "\n";
    uta::build_pseudo_gt_cache(ds, cfg.sim);
    const uta::TrainResult res = uta::train(ds, cfg, tr_out);
    std::cout << "checkpoint: " << res.checkpoint << "\nloss csv: " << res.loss_csv
              << "\nfinal total loss: " << res.final_total << "\n";
  });

  // --- infer ---
  auto* inf = app.add_subcommand("infer", "sliding-window video inference");
  std::string in_ckpt, in_scene, in_out = "out";
  inf->add_option("--ckpt", in_ckpt, "checkpoint file")->required();
  inf->add_option("--scene", in_scene, "scene directory")->required();
  inf->add_option("--out", in_out, "output frame directory");
  inf->callback([&] {
    const uta::ModelBundle bundle = uta::load_checkpoint(in_ckpt);
    uta::SceneDataset ds = uta::load_dataset(fs::path(in_scene).parent_path(), 1, 1);
    const std::string name = fs::path(in_scene).filename().string();
    const uta::SceneData* scene = nullptr;
    for (const auto& s : ds.scenes)
      if (s.name == name) scene = &s;
    if (!scene) throw CLI::ValidationError("scene not found: " + in_scene);
    const auto files = uta::infer_video(bundle, *scene, in_out);
    std::cout << "wrote " << files.size() << " frames to " << in_out << "\n";
  });

  // --- eval ---
  auto* ev = app.add_subcommand("eval", "no-reference metrics over a frame directory");
  std::string ev_dir, ev_metrics = "en,sd", ev_model, ev_out = "report.csv";
  ev->add_option("--dir", ev_dir, "frame directory")->required();
  ev->add_option("--metrics", ev_metrics, "comma list from {en,sd,niqe}");
  ev->add_option("--model", ev_model, "NIQE model file (required for niqe)");
  ev->add_option("--out", ev_out, "report CSV path");
  ev->callback([&] {
    std::vector<std::string> names;
    std::stringstream ss(ev_metrics);
    std::string item;
    while (std::getline(ss, item, ',')) names.push_back(item);
    uta::NiqeModel model;
    const bool want_niqe = std::count(names.begin(), names.end(), "niqe") > 0;
    if (want_niqe) model = uta::load_niqe_model(ev_model);
    const auto rows = uta::evaluate(ev_dir, names, want_niqe ? &model : nullptr, ev_out);
    std::cout << "wrote " << ev_out << " (" << rows.size() << " rows)\n";
  });

  // --- niqe-fit ---
  auto* nf = app.add_subcommand("niqe-fit", "fit the NIQE pristine model from PNG frames");
  std::string nf_dir, nf_out = "niqe.bin";
  int nf_patch = 32;
  nf->add_option("--dir", nf_dir, "directory of pristine PNG frames")->required();
  nf->add_option("--out", nf_out, "model output path");
  nf->add_option("--patch", nf_patch, "patch size");
  nf->callback([&] {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(nf_dir))
      if (entry.path().extension() == ".png") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<uta::Image> imgs;
    for (const auto& f : files) imgs.push_back(uta::read_png_gray(f));
    uta::NiqeOptions opts;
    opts.patch_size = nf_patch;
    uta::save_niqe_model(nf_out, uta::fit_niqe(imgs, opts));
    std::cout << "wrote " << nf_out << " from " << imgs.size() << " frames\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
