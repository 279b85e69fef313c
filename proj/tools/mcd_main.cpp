// mcd — batch CLI over the minuscule-cell-detection pipeline.
//
// Subcommands: synth, segment, propose, train, detect, eval, search-lambda,
// overlay. Exit codes: 0 ok, 1 usage, 2 data error, 3 runtime failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mcd/baselines.hpp"
#include "mcd/errors.hpp"
#include "mcd/eval.hpp"
#include "mcd/fof.hpp"
#include "mcd/image_io.hpp"
#include "mcd/log.hpp"
#include "mcd/mirp.hpp"
#include "mcd/pipeline.hpp"
#include "mcd/san.hpp"
#include "mcd/synth.hpp"
#include "mcd/tuning.hpp"

namespace fs = std::filesystem;
using namespace mcd;

namespace {

struct ImageEntry {
  std::string stem;
  fs::path path;
};

std::vector<ImageEntry> list_images(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<ImageEntry> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".pgm") out.push_back({entry.path().stem().string(), entry.path()});
  }
  std::sort(out.begin(), out.end(),
            [](const ImageEntry& a, const ImageEntry& b) { return a.stem < b.stem; });
  if (out.empty()) throw DataError("no PNG/PGM images in " + dir);
  return out;
}

// Runs fn(i) for i in [0, n) on `jobs` threads; the first exception wins.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex mu;
  std::exception_ptr error;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += jobs) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

BinaryMask load_ac_mask_for(const std::string& masks_dir, const ImageEntry& img,
                            const GrayImage& g) {
  const fs::path p = fs::path(masks_dir) / (img.stem + ".png");
  BinaryMask m = load_mask_png(p.string());
  if (m.width != g.width || m.height != g.height) {
    throw DataError("AC mask " + p.string() + " does not match image size");
  }
  return m;
}

std::vector<GroundTruthAnnotation> load_gt_dir(const std::string& dir) {
  fs::path root(dir);
  if (fs::is_directory(root / "annotations")) root /= "annotations";
  if (!fs::is_directory(root)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no annotation files in " + dir);
  std::vector<GroundTruthAnnotation> out;
  for (const auto& f : files) {
    for (auto& a : read_annotations(f.string())) out.push_back(std::move(a));
  }
  return out;
}

std::vector<MatchCriterion> parse_criteria(const std::string& text) {
  std::vector<MatchCriterion> out;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) {
    if (token == "point") {
      out.push_back(MatchCriterion::point());
    } else if (token.rfind("iou", 0) == 0) {
      const int pct = std::stoi(token.substr(3));
      if (pct <= 0 || pct >= 100) throw CLI::ValidationError("--criteria", "bad IoU percent");
      out.push_back(MatchCriterion::iou(pct / 100.0));
    } else {
      throw CLI::ValidationError("--criteria", "unknown criterion '" + token + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("--criteria", "no criteria given");
  return out;
}

std::pair<double, double> parse_split(const std::string& text) {
  int a = 0, b = 0, c = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d", &a, &b, &c) != 3 || a < 0 || b < 0 || c < 0 ||
      a + b + c != 100) {
    throw CLI::ValidationError("--split", "expected three percentages summing to 100");
  }
  return {a / 100.0, b / 100.0};
}

void draw_box(GrayImage& img, const CandidateBox& b, std::uint8_t level) {
  const int x0 = std::clamp(b.x_tl, 0, img.width - 1);
  const int x1 = std::clamp(b.x_br - 1, 0, img.width - 1);
  const int y0 = std::clamp(b.y_tl, 0, img.height - 1);
  const int y1 = std::clamp(b.y_br - 1, 0, img.height - 1);
  for (int x = x0; x <= x1; ++x) {
    img.at(x, y0) = level;
    img.at(x, y1) = level;
  }
  for (int y = y0; y <= y1; ++y) {
    img.at(x0, y) = level;
    img.at(x1, y) = level;
  }
}

// ---- subcommand options ----

struct SynthOpts {
  std::string out;
  int count = 1;
  SynthConfig cfg;
};

struct SegmentOpts {
  std::string images, out, external_template;
  bool fallback = false;
  double merge_ratio = 0.65;
  int jobs = 1;
};

struct ProposeOpts {
  std::string images, ac_masks, out;
  MirpConfig mirp;
  int jobs = 1;
};

struct TrainOpts {
  std::string corpus, out, split = "40,10,50", ratio = "1,5";
  TrainConfig cfg;
  double mining_lambda = 1.0;
};

struct DetectOpts {
  std::string images, ac_masks, model, out;
  MirpConfig mirp;
  int jobs = 1;
};

struct EvalOpts {
  std::string pred, gt, pred_masks, gt_masks, report, criteria = "point,iou10,iou30";
};

struct SearchOpts {
  std::string corpus, model, report, split = "40,10,50";
  std::uint64_t seed = 0;
  MirpConfig mirp;
  LambdaGrid grid;
};

struct OverlayOpts {
  std::string image, pred, gt, out;
};

void run_synth(const SynthOpts& o) {
  const auto samples = generate(o.cfg, o.count);
  write_corpus(samples, o.cfg, o.out);
  log_info("wrote " + std::to_string(samples.size()) + " samples to " + o.out);
}

void run_segment(const SegmentOpts& o) {
  const auto images = list_images(o.images);
  fs::create_directories(o.out);
  I2ACPConfig cfg;
  cfg.merge_ratio = o.merge_ratio;
  std::vector<BinaryMask> results(images.size());
  parallel_for(images.size(), o.jobs, [&](std::size_t i) {
    const GrayImage g = load_gray(images[i].path.string());
    const SegmenterSpec spec = o.fallback
                                   ? SegmenterSpec::fallback()
                                   : SegmenterSpec::external(o.external_template, images[i].stem);
    results[i] = field_of_focus(g, cfg, spec);
  });
  for (std::size_t i = 0; i < images.size(); ++i) {
    save_mask_png(results[i], (fs::path(o.out) / (images[i].stem + ".png")).string());
  }
  log_info("segmented " + std::to_string(images.size()) + " images");
}

void run_propose(const ProposeOpts& o) {
  const auto images = list_images(o.images);
  std::vector<ImageDetections> records(images.size());
  parallel_for(images.size(), o.jobs, [&](std::size_t i) {
    const GrayImage g = load_gray(images[i].path.string());
    const BinaryMask ac = load_ac_mask_for(o.ac_masks, images[i], g);
    ImageDetections rec;
    rec.image_id = images[i].stem;
    for (const auto& box : propose(g, ac, o.mirp)) {
      rec.items.push_back(Detection{box, static_cast<double>(box.source_area)});
    }
    records[i] = std::move(rec);
  });
  write_detections(records, o.out);
}

void run_train(const TrainOpts& o) {
  TrainConfig cfg = o.cfg;
  if (std::sscanf(o.ratio.c_str(), "%d,%d", &cfg.ratio_pos, &cfg.ratio_neg) != 2) {
    throw CLI::ValidationError("--ratio", "expected POS,NEG");
  }
  const auto [train_frac, val_frac] = parse_split(o.split);
  const auto ids = corpus_ids(o.corpus);
  const CorpusSplit split = split_corpus(ids, train_frac, val_frac, cfg.seed);
  if (split.train.empty() || split.val.empty()) {
    throw DataError("train: corpus too small for the requested split");
  }

  MirpConfig mirp;
  mirp.lambda = o.mining_lambda;
  const LoadedCorpus tr = load_corpus(o.corpus, split.train);
  const LoadedCorpus va = load_corpus(o.corpus, split.val);
  Rng rng(mix_seed(cfg.seed, 0xda7a5e7ULL));
  const PatchSet train_patches =
      build_training_set(tr.images, tr.ac_masks, tr.annotations, mirp, cfg, rng);
  const PatchSet val_patches =
      build_training_set(va.images, va.ac_masks, va.annotations, mirp, cfg, rng);
  log_info("training on " + std::to_string(train_patches.items.size()) + " patches, validating on " +
           std::to_string(val_patches.items.size()));

  const TrainResult result = train(train_patches, val_patches, cfg);
  save_checkpoint(result.params, o.out);
  write_training_log(result.log, o.out + ".log");
  {
    std::ofstream sf(o.out + ".split");
    for (const auto& id : split.train) sf << "train," << id << "\n";
    for (const auto& id : split.val) sf << "val," << id << "\n";
    for (const auto& id : split.test) sf << "test," << id << "\n";
  }
  std::printf("trained %zu epochs, best epoch %d (val loss %.6f)\n", result.log.size(),
              result.best_epoch, result.best_val_loss);
}

void run_detect(const DetectOpts& o) {
  const auto images = list_images(o.images);
  const NetworkParams params = load_checkpoint(o.model);
  std::vector<ImageDetections> records(images.size());
  parallel_for(images.size(), o.jobs, [&](std::size_t i) {
    const GrayImage g = load_gray(images[i].path.string());
    const BinaryMask ac = load_ac_mask_for(o.ac_masks, images[i], g);
    ImageDetections rec;
    rec.image_id = images[i].stem;
    rec.items = to_detections(detect_cells(g, ac, params, o.mirp));
    records[i] = std::move(rec);
  });
  write_detections(records, o.out);
}

void run_eval(const EvalOpts& o) {
  const bool box_mode = !o.pred.empty() || !o.gt.empty();
  const bool mask_mode = !o.pred_masks.empty() || !o.gt_masks.empty();
  if (box_mode == mask_mode) {
    throw CLI::ValidationError("eval", "use either --pred/--gt or --pred-masks/--gt-masks");
  }
  EvalReport report;
  if (box_mode) {
    if (o.pred.empty() || o.gt.empty()) throw CLI::ValidationError("eval", "--pred and --gt required");
    report = detection_metrics(read_detections(o.pred), load_gt_dir(o.gt),
                               parse_criteria(o.criteria));
  } else {
    if (o.pred_masks.empty() || o.gt_masks.empty()) {
      throw CLI::ValidationError("eval", "--pred-masks and --gt-masks required");
    }
    const auto gt_files = list_images(o.gt_masks);
    std::vector<SegMetrics> per_image;
    for (const auto& gt_file : gt_files) {
      const BinaryMask gt = load_mask_png(gt_file.path.string());
      const fs::path pred_path = fs::path(o.pred_masks) / (gt_file.stem + ".png");
      per_image.push_back(seg_metrics(load_mask_png(pred_path.string()), gt));
    }
    report = segmentation_report(per_image);
  }
  std::fputs(format_report_table(report).c_str(), stdout);
  if (!o.report.empty()) write_report_kv(report, o.report);
}

void run_search(const SearchOpts& o) {
  const auto [train_frac, val_frac] = parse_split(o.split);
  const CorpusSplit split = split_corpus(corpus_ids(o.corpus), train_frac, val_frac, o.seed);
  if (split.val.empty()) throw DataError("search-lambda: empty validation split");
  const LoadedCorpus va = load_corpus(o.corpus, split.val);
  const NetworkParams params = load_checkpoint(o.model);
  const LambdaSearchResult result =
      search_lambda(va.images, va.annotations, va.ac_masks, params, o.mirp, o.grid);
  if (!o.report.empty()) write_lambda_report(result, o.report);
  std::printf("best lambda %.2f (F1_point %.4f over %zu grid points)\n", result.best_lambda,
              result.best_f1, result.table.size());
}

void run_overlay(const OverlayOpts& o) {
  GrayImage img = load_gray(o.image);
  const std::string stem = fs::path(o.image).stem().string();
  if (!o.gt.empty()) {
    for (const auto& a : read_annotations(o.gt)) {
      if (a.image_id != stem) continue;
      for (const auto& b : a.boxes) draw_box(img, b, 170);
    }
  }
  for (const auto& d : read_detections(o.pred)) {
    if (d.image_id != stem) continue;
    for (const auto& item : d.items) draw_box(img, item.box, 255);
  }
  save_png_gray(img, o.out);
}

void add_mirp_flags(CLI::App* cmd, MirpConfig& cfg, bool with_lambda) {
  if (with_lambda) {
    cmd->add_option("--lambda", cfg.lambda, "Threshold adjustment factor")
        ->check(CLI::Range(1e-9, 1.5));
  }
  cmd->add_option("--s-min", cfg.s_min, "Minimum component area")->check(CLI::PositiveNumber);
  cmd->add_option("--s-max", cfg.s_max, "Maximum component area")->check(CLI::PositiveNumber);
  cmd->add_option("--box-w", cfg.box_w, "Candidate box width")->check(CLI::PositiveNumber);
  cmd->add_option("--box-h", cfg.box_h, "Candidate box height")->check(CLI::PositiveNumber);
  cmd->add_flag("--clip-to-mask", cfg.clip_to_mask,
                "Intersect the bright mask with the AC mask instead of filtering by centroid");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minuscule cell detection pipeline"};
  app.require_subcommand(1);

  SynthOpts synth_opts;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->set_config("--config");
  synth_cmd->add_option("--out", synth_opts.out, "Output corpus directory")->required();
  synth_cmd->add_option("--count", synth_opts.count, "Number of samples")
      ->required()
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_opts.cfg.seed, "Corpus seed");
  synth_cmd->add_option("--width", synth_opts.cfg.width, "Image width");
  synth_cmd->add_option("--height", synth_opts.cfg.height, "Image height");
  synth_cmd->add_option("--cells-min", synth_opts.cfg.cell_count_min, "Min cells per image");
  synth_cmd->add_option("--cells-max", synth_opts.cfg.cell_count_max, "Max cells per image");
  synth_cmd->add_option("--dim-fraction", synth_opts.cfg.dim_cell_fraction,
                        "Fraction of cells placed below the Otsu threshold");
  synth_cmd->add_option("--speckle-inside", synth_opts.cfg.speckle_density_inside,
                        "Speckle density inside the chamber");
  synth_cmd->add_option("--speckle-outside", synth_opts.cfg.speckle_density_outside,
                        "Speckle density outside the chamber");
  synth_cmd->callback([&] { run_synth(synth_opts); });

  SegmentOpts seg_opts;
  auto* seg_cmd = app.add_subcommand("segment", "Field-of-Focus AC segmentation");
  seg_cmd->set_config("--config");
  seg_cmd->add_option("--images", seg_opts.images, "Input image directory")->required();
  seg_cmd->add_option("--out", seg_opts.out, "Output mask directory")->required();
  auto* ext = seg_cmd->add_option("--external-masks", seg_opts.external_template,
                                  "Path template with {stem} for precomputed masks");
  auto* fb = seg_cmd->add_flag("--fallback", seg_opts.fallback, "Use the flood-fill fallback");
  ext->excludes(fb);
  seg_cmd->add_option("--merge-ratio", seg_opts.merge_ratio, "Component merge ratio R")
      ->check(CLI::Range(1e-9, 1.0));
  seg_cmd->add_option("--jobs", seg_opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  seg_cmd->callback([&] {
    if (!seg_opts.fallback && seg_opts.external_template.empty()) {
      throw CLI::ValidationError("segment", "need --external-masks TEMPLATE or --fallback");
    }
    run_segment(seg_opts);
  });

  ProposeOpts prop_opts;
  auto* prop_cmd = app.add_subcommand("propose", "Minuscule region proposals");
  prop_cmd->set_config("--config");
  prop_cmd->add_option("--images", prop_opts.images, "Input image directory")->required();
  prop_cmd->add_option("--ac-masks", prop_opts.ac_masks, "AC mask directory")->required();
  prop_cmd->add_option("--out", prop_opts.out, "Output detection file")->required();
  prop_cmd->add_option("--jobs", prop_opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_mirp_flags(prop_cmd, prop_opts.mirp, true);
  prop_cmd->callback([&] { run_propose(prop_opts); });

  TrainOpts train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train the spatial attention network");
  train_cmd->set_config("--config");
  train_cmd->add_option("--corpus", train_opts.corpus, "Corpus directory")->required();
  train_cmd->add_option("--out", train_opts.out, "Checkpoint output path")->required();
  train_cmd->add_option("--split", train_opts.split, "train,val,test percentages");
  train_cmd->add_option("--seed", train_opts.cfg.seed, "Split/training seed");
  train_cmd->add_option("--epochs", train_opts.cfg.max_epochs, "Epoch cap")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_opts.cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--batch", train_opts.cfg.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--patience", train_opts.cfg.patience, "Early-stopping patience")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--dropout", train_opts.cfg.dropout_rate, "Dropout rate")
      ->check(CLI::Range(0.0, 0.99));
  train_cmd->add_option("--momentum", train_opts.cfg.momentum, "SGD momentum")
      ->check(CLI::Range(0.0, 0.999));
  train_cmd->add_option("--ratio", train_opts.ratio, "pos,neg sampling ratio");
  train_cmd->add_option("--lambda", train_opts.mining_lambda,
                        "Proposal lambda for hard-negative mining");
  train_cmd->callback([&] { run_train(train_opts); });

  DetectOpts det_opts;
  auto* det_cmd = app.add_subcommand("detect", "Full MCD detection");
  det_cmd->set_config("--config");
  det_cmd->add_option("--images", det_opts.images, "Input image directory")->required();
  det_cmd->add_option("--ac-masks", det_opts.ac_masks, "AC mask directory")->required();
  det_cmd->add_option("--model", det_opts.model, "Checkpoint path")->required();
  det_cmd->add_option("--out", det_opts.out, "Output detection file")->required();
  det_cmd->add_option("--jobs", det_opts.jobs, "Worker threads")->check(CLI::PositiveNumber);
  add_mirp_flags(det_cmd, det_opts.mirp, true);
  det_cmd->callback([&] { run_detect(det_opts); });

  EvalOpts eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "Detection / segmentation metrics");
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--pred", eval_opts.pred, "Detection file");
  eval_cmd->add_option("--gt", eval_opts.gt, "Ground-truth annotation directory");
  eval_cmd->add_option("--pred-masks", eval_opts.pred_masks, "Predicted mask directory");
  eval_cmd->add_option("--gt-masks", eval_opts.gt_masks, "Ground-truth mask directory");
  eval_cmd->add_option("--criteria", eval_opts.criteria, "Comma list: point,iou10,iou30");
  eval_cmd->add_option("--report", eval_opts.report, "Machine-readable report path");
  eval_cmd->callback([&] { run_eval(eval_opts); });

  SearchOpts search_opts;
  auto* search_cmd = app.add_subcommand("search-lambda", "Validation-split lambda sweep");
  search_cmd->set_config("--config");
  search_cmd->add_option("--corpus", search_opts.corpus, "Corpus directory")->required();
  search_cmd->add_option("--model", search_opts.model, "Checkpoint path")->required();
  search_cmd->add_option("--report", search_opts.report, "Sweep report path");
  search_cmd->add_option("--split", search_opts.split, "train,val,test percentages");
  search_cmd->add_option("--seed", search_opts.seed, "Split seed");
  search_cmd->add_option("--lambda-lo", search_opts.grid.lo, "Grid lower endpoint");
  search_cmd->add_option("--lambda-hi", search_opts.grid.hi, "Grid upper endpoint");
  search_cmd->add_option("--lambda-step", search_opts.grid.step, "Grid step");
  add_mirp_flags(search_cmd, search_opts.mirp, false);
  search_cmd->callback([&] { run_search(search_opts); });

  OverlayOpts ov_opts;
  auto* ov_cmd = app.add_subcommand("overlay", "Draw prediction/GT boxes for visual audit");
  ov_cmd->set_config("--config");
  ov_cmd->add_option("--image", ov_opts.image, "Source image")->required();
  ov_cmd->add_option("--pred", ov_opts.pred, "Detection file")->required();
  ov_cmd->add_option("--gt", ov_opts.gt, "Annotation file");
  ov_cmd->add_option("--out", ov_opts.out, "Output PNG")->required();
  ov_cmd->callback([&] { run_overlay(ov_opts); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  } catch (const DataError& e) {
    std::fprintf(stderr, "mcd: data error: %s\n", e.what());
    return 2;
  } catch (const ComputeError& e) {
    std::fprintf(stderr, "mcd: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mcd: %s\n", e.what());
    return 3;
  }
  return 0;
}
