#include <algorithm>
#include <fstream>

#include "uta/harness.hpp"
#include "uta/io.hpp"
#include "uta/metrics.hpp"

namespace uta {

namespace {

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d.png", index);
  return buf;
}

}  // namespace

std::vector<std::filesystem::path> infer_video(const ModelBundle& bundle, const SceneData& scene,
                                               const std::filesystem::path& out_dir,
                                               const SimConfig& sim) {
  std::filesystem::create_directories(out_dir);
  const SceneFrames frames = load_scene_frames(scene, sim);
  const int n = static_cast<int>(frames.thermal.size());
  const int N = bundle.tcc_cfg.n_frames;

  std::vector<std::filesystem::path> written;
  std::vector<Image> sketches;
  sketches.reserve(n);
  for (int i = 0; i < n; ++i) {
    sketches.push_back(
        bundle.sis->forward_image(frames.events[i].pixels, frames.thermal[i]));
    Image out_frame;
    if (i + 1 >= N) {
      const std::vector<Image> volume(sketches.end() - N, sketches.end());
      out_frame = bundle.tcc->forward_image(volume);
    } else {
      out_frame = sketches.back();
    }
    const auto path = out_dir / frame_name(i);
    write_png_gray(path, out_frame);
    written.push_back(path);
  }
  return written;
}

std::vector<EvalRow> evaluate(const std::filesystem::path& frames_dir,
                              const std::vector<std::string>& metric_names,
                              const NiqeModel* model, const std::filesystem::path& out_csv) {
  const bool want_en = std::count(metric_names.begin(), metric_names.end(), "en") > 0;
  const bool want_sd = std::count(metric_names.begin(), metric_names.end(), "sd") > 0;
  const bool want_niqe = std::count(metric_names.begin(), metric_names.end(), "niqe") > 0;
  if (want_niqe && !model) throw Error("evaluate: niqe requested without a model");

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(frames_dir))
    if (entry.path().extension() == ".png") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<EvalRow> rows;
  EvalRow mean_row;
  mean_row.frame = "mean";
  mean_row.en = want_en ? std::optional<double>(0.0) : std::nullopt;
  mean_row.sd = want_sd ? std::optional<double>(0.0) : std::nullopt;
  mean_row.niqe_score = want_niqe ? std::optional<double>(0.0) : std::nullopt;

  for (const auto& file : files) {
    const Image img = read_png_gray(file);
    EvalRow row;
    row.frame = file.filename().string();
    if (want_en) {
      row.en = entropy(img);
      *mean_row.en += *row.en / files.size();
    }
    if (want_sd) {
      row.sd = std_dev(img);
      *mean_row.sd += *row.sd / files.size();
    }
    if (want_niqe) {
      row.niqe_score = niqe(img, *model);
      *mean_row.niqe_score += *row.niqe_score / files.size();
    }
    rows.push_back(std::move(row));
  }
  rows.push_back(mean_row);

  if (!out_csv.empty()) {
    if (!out_csv.parent_path().empty())
      std::filesystem::create_directories(out_csv.parent_path());
    std::ofstream out(out_csv);
    out.precision(12);
    out << "frame";
    if (want_en) out << ",en";
    if (want_sd) out << ",sd";
    if (want_niqe) out << ",niqe";
    out << '\n';
    for (const EvalRow& row : rows) {
      out << row.frame;
      if (want_en) out << ',' << *row.en;
      if (want_sd) out << ',' << *row.sd;
      if (want_niqe) out << ',' << *row.niqe_score;
      out << '\n';
    }
  }
  return rows;
}

}  // namespace uta
