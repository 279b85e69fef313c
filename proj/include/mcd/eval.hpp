#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mcd/image.hpp"
#include "mcd/mirp.hpp"

namespace mcd {

struct GroundTruthAnnotation {
  std::string image_id;
  std::vector<std::pair<int, int>> points;  // clinician click coordinates
  std::vector<CandidateBox> boxes;          // one per point, centering rule
};

// Builds the boxes for a set of click points (w x h centered, clamped by
// translation into the image).
std::vector<CandidateBox> boxes_from_points(const std::vector<std::pair<int, int>>& points, int w,
                                            int h, int img_w, int img_h);

struct MatchCriterion {
  enum class Kind { Point, Iou };
  Kind kind = Kind::Point;
  double iou_threshold = 0.0;

  static MatchCriterion point() { return MatchCriterion{Kind::Point, 0.0}; }
  static MatchCriterion iou(double threshold) { return MatchCriterion{Kind::Iou, threshold}; }
  std::string name() const;
};

struct Detection {
  CandidateBox box;
  double score = 0.0;
};

struct ImageDetections {
  std::string image_id;
  std::vector<Detection> items;
};

struct MatchOutcome {
  std::vector<std::pair<int, int>> pairs;  // (pred index, gt index), original indices
  std::vector<int> unmatched_preds;
  std::vector<int> unmatched_gts;
};

struct SegMetrics {
  double iou = 0.0;
  double dice = 0.0;
};

// Pixel-set IoU/Dice; two empty masks count as a perfect (1.0, 1.0).
SegMetrics seg_metrics(const BinaryMask& pred, const BinaryMask& gt);

double box_iou(const CandidateBox& a, const CandidateBox& b);

// Greedy matching in descending score order (ties by raster order of the box
// corners). A matched ground truth leaves the pool, preventing double counts.
MatchOutcome match_detections(const std::vector<Detection>& preds,
                              const GroundTruthAnnotation& gt, const MatchCriterion& crit);

struct CriterionMetrics {
  std::string criterion;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  double mae_c = 0.0;
  bool degenerate = false;  // some denominator was zero and the metric was forced to 0
};

struct ImageEvalRow {
  std::string image_id;
  long n_pred = 0, n_gt = 0;
  std::map<std::string, long> tp;  // by criterion name
};

struct EvalReport {
  std::vector<CriterionMetrics> criteria;
  double mae_all = 0.0;
  std::optional<SegMetrics> segmentation;  // corpus mean, when masks were evaluated
  std::vector<ImageEvalRow> per_image;
};

// Corpus-level detection metrics. Every ground-truth image is evaluated;
// images without a prediction record count as zero predictions. A prediction
// record whose id has no ground truth is a data error.
EvalReport detection_metrics(const std::vector<ImageDetections>& preds,
                             const std::vector<GroundTruthAnnotation>& gts,
                             const std::vector<MatchCriterion>& criteria);

// Mean per-image segmentation metrics attached to a fresh report.
EvalReport segmentation_report(const std::vector<SegMetrics>& per_image);

std::string format_report_table(const EvalReport& report);
void write_report_kv(const EvalReport& report, const std::string& path);

// Line-oriented record files shared by annotations and detections:
//   image_id,num_points,num_boxes,<x,y>*,<x_tl,y_tl,x_br,y_br>*,<score>*
// with a fixed header line; scores are present only in detection files.
void write_annotations(const std::vector<GroundTruthAnnotation>& annots, const std::string& path);
std::vector<GroundTruthAnnotation> read_annotations(const std::string& path);
void write_detections(const std::vector<ImageDetections>& dets, const std::string& path);
std::vector<ImageDetections> read_detections(const std::string& path);

struct CorpusSplit {
  std::vector<std::string> train, val, test;
};

// Seeded shuffle then partition: floor(train_frac*n) / floor(val_frac*n) /
// remainder.
CorpusSplit split_corpus(std::vector<std::string> ids, double train_frac, double val_frac,
                         std::uint64_t seed);

}  // namespace mcd
