#include <cmath>
#include <fstream>
#include <random>

#include "uta/harness.hpp"
#include "uta/io.hpp"

namespace uta {

namespace {

using nn::Tensor;
using nn::Var;

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

struct GroupData {
  std::vector<Image> thermal, events, masks, sis_gt, tcc_gt;
};

struct Transform {
  int y0 = 0, x0 = 0, h = 0, w = 0;
  bool fh = false, fv = false;
  int rot = 0;

  Image apply(const Image& img) const {
    Image out = crop_image(img, y0, x0, h, w);
    if (fh) out = flip_horizontal(out);
    if (fv) out = flip_vertical(out);
    if (rot) out = rotate90(out, rot);
    return out;
  }
};

GroupData load_group(const SceneDataset& ds, const GroupRef& ref, const SimConfig& sim) {
  const SceneData& scene = ds.scenes[ref.scene_index];
  SceneFrames frames = load_scene_frames(scene, sim);
  GroupData g;
  for (int k = 0; k < ds.group_len; ++k) {
    const int fi = ref.start_frame + k;
    g.thermal.push_back(frames.thermal[fi]);
    g.events.push_back(frames.events[fi].pixels);
    g.masks.push_back(read_png_gray(scene.dir / "masks" / frame_name(fi)));
    g.sis_gt.push_back(read_png_gray(scene.dir / "sis_gt" / frame_name(fi)));
    g.tcc_gt.push_back(read_png_gray(scene.dir / "tcc_gt" / frame_name(fi)));
  }
  return g;
}

// Frame-major batch tensor: row t*B + b holds frame t of group b.
Tensor pack(const std::vector<std::vector<Image>>& per_group_frames, int T, int B) {
  const Image& first = per_group_frames[0][0];
  Tensor out({T * B, 1, first.height(), first.width()});
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) {
      const Image& img = per_group_frames[b][t];
      std::copy(img.data(), img.data() + img.size(),
                out.data() + (static_cast<size_t>(t) * B + b) * img.size());
    }
  return out;
}

}  // namespace

TrainResult train(const SceneDataset& ds, const PipelineConfig& cfg,
                  const std::filesystem::path& out_dir) {
  if (ds.groups.empty()) throw Error("train: dataset has no groups");
  const int T = ds.group_len;
  if (T != cfg.tcc.n_frames)
    throw Error("train: dataset group length and TCC n_frames disagree");
  std::filesystem::create_directories(out_dir);

  // The whole desk-scale dataset fits in memory; load it once.
  std::vector<GroupData> groups;
  groups.reserve(ds.groups.size());
  for (const GroupRef& ref : ds.groups) groups.push_back(load_group(ds, ref, cfg.sim));

  const int full_h = groups[0].thermal[0].height();
  const int full_w = groups[0].thermal[0].width();
  const int div = std::max(1 << cfg.sis.levels, cfg.tcc.patch_size);
  auto snap = [&](int v) { return std::max(div, v / div * div); };
  const int crop_h = snap(cfg.train.crop_h > 0 ? cfg.train.crop_h : full_h / 2);
  const int crop_w = snap(cfg.train.crop_w > 0 ? cfg.train.crop_w : full_w / 2);
  if (crop_h > full_h || crop_w > full_w) throw Error("train: crop larger than frames");

  ModelBundle bundle = ModelBundle::create(cfg.sis, cfg.tcc, cfg.train.seed);
  nn::Adam opt(bundle.all_params(), cfg.train.beta1, cfg.train.beta2);
  PerceptualExtractor perceptual;

  const int B = cfg.train.batch_size;
  const int steps_per_epoch =
      std::max<int>(1, (static_cast<int>(groups.size()) + B - 1) / B);
  const int total_steps = cfg.train.steps_override > 0 ? cfg.train.steps_override
                                                       : cfg.train.epochs * steps_per_epoch;

  std::mt19937_64 rng(cfg.train.seed);
  std::uniform_int_distribution<int> pick_group(0, static_cast<int>(groups.size()) - 1);
  std::uniform_int_distribution<int> pick_y(0, full_h - crop_h);
  std::uniform_int_distribution<int> pick_x(0, full_w - crop_w);
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_int_distribution<int> quarter(0, 3);

  TrainResult result;
  result.loss_csv = out_dir / "loss.csv";
  result.checkpoint = out_dir / "checkpoint.bin";
  std::ofstream csv(result.loss_csv);
  csv << "step,l_sis,l_tcc,l_per,l_grad,total\n";
  csv.precision(17);

  for (int step = 0; step < total_steps; ++step) {
    // Sample the batch and its geometric transforms.
    std::vector<std::vector<Image>> ev(B), ir(B), sis_t(B), tcc_t(B), masks(B);
    for (int b = 0; b < B; ++b) {
      const GroupData& g = groups[pick_group(rng)];
      Transform tf;
      tf.h = crop_h;
      tf.w = crop_w;
      tf.y0 = pick_y(rng);
      tf.x0 = pick_x(rng);
      if (cfg.train.augment_flip) {
        tf.fh = coin(rng) != 0;
        tf.fv = coin(rng) != 0;
      }
      if (cfg.train.augment_rotate && crop_h == crop_w) tf.rot = quarter(rng);
      for (int t = 0; t < T; ++t) {
        ev[b].push_back(tf.apply(g.events[t]));
        ir[b].push_back(tf.apply(g.thermal[t]));
        sis_t[b].push_back(tf.apply(g.sis_gt[t]));
        tcc_t[b].push_back(tf.apply(g.tcc_gt[t]));
        masks[b].push_back(tf.apply(g.masks[t]));
      }
    }
    const int h = ev[0][0].height(), w = ev[0][0].width();

    const Var ev_in(pack(ev, T, B));
    const Var ir_in(pack(ir, T, B));
    const Var sis_gt_all(pack(sis_t, T, B));

    Var sis_out = bundle.sis->forward(ev_in, ir_in);  // (T*B, 1, h, w)
    Var volume = nn::reshape(sis_out, {T, B, h, w});
    volume = nn::permute(volume, {1, 0, 2, 3});
    if (cfg.train.detach_tcc_input) volume = nn::detach(volume);
    Var tcc_out = bundle.tcc->forward(volume);  // (B, 1, h, w)

    Tensor tcc_target({B, 1, h, w});
    for (int b = 0; b < B; ++b)
      std::copy(tcc_t[b][T - 1].data(), tcc_t[b][T - 1].data() + tcc_t[b][T - 1].size(),
                tcc_target.data() + static_cast<size_t>(b) * h * w);

    // Eq. 15: per-frame sum of the four terms, accumulated t-ascending.
    LossReport report;
    Var total(Tensor::scalar(0.0));
    const LossWeights& lw = cfg.train.loss_weights;
    for (int t = 0; t < T; ++t) {
      LossReport::Frame fr;
      Var pred_t = nn::slice(sis_out, {{t * B, B}, {0, 1}, {0, h}, {0, w}});
      Var gt_t = nn::slice(sis_gt_all, {{t * B, B}, {0, 1}, {0, h}, {0, w}});
      Var term = nn::scale(l_sis(pred_t, gt_t), lw.sis);
      fr.sis = term.value()[0];
      total = nn::add(total, term);

      if (t == T - 1) {
        Var tcc_term = nn::scale(l_tcc(tcc_out, Var(tcc_target)), lw.tcc);
        fr.tcc = tcc_term.value()[0];
        total = nn::add(total, tcc_term);
      }

      // Perceptual term over the batch: mean of per-sample masked losses.
      Var per_sum(Tensor::scalar(0.0));
      for (int b = 0; b < B; ++b) {
        Var pred_b = nn::slice(sis_out, {{t * B + b, 1}, {0, 1}, {0, h}, {0, w}});
        Var gt_b = nn::slice(sis_gt_all, {{t * B + b, 1}, {0, 1}, {0, h}, {0, w}});
        per_sum = nn::add(per_sum, perceptual.loss(pred_b, gt_b, masks[b][t]));
      }
      Var per_term = nn::scale(per_sum, lw.perceptual / B);
      fr.perceptual = per_term.value()[0];
      total = nn::add(total, per_term);

      Var grad_term = nn::scale(l_gradient(pred_t, gt_t), lw.gradient);
      fr.gradient = grad_term.value()[0];
      total = nn::add(total, grad_term);
      report.frames.push_back(fr);
    }
    report.finalize();

    if (!std::isfinite(report.total))
      throw Error("train: total loss diverged at step " + std::to_string(step));

    opt.zero_grad();
    nn::backward(total);
    const double lr =
        total_steps > 1
            ? cfg.train.lr_start + (cfg.train.lr_end - cfg.train.lr_start) * step /
                                       static_cast<double>(total_steps - 1)
            : cfg.train.lr_start;
    opt.step(lr);

    csv << step << ',' << report.l_sis << ',' << report.l_tcc << ',' << report.l_per << ','
        << report.l_grad << ',' << report.total << '\n';
    result.reports.push_back(report);

    if ((step + 1) % steps_per_epoch == 0) save_checkpoint(result.checkpoint, bundle);
  }
  csv.close();
  save_checkpoint(result.checkpoint, bundle);

  const int ma = std::min<int>(10, static_cast<int>(result.reports.size()));
  for (int i = 0; i < ma; ++i) result.first_ma10 += result.reports[i].total / ma;
  result.final_total = result.reports.empty() ? 0.0 : result.reports.back().total;
  return result;
}

}  // namespace uta
