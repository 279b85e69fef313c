#include "mcd/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mcd/errors.hpp"
#include "mcd/rng.hpp"

namespace mcd {

std::vector<CandidateBox> boxes_from_points(const std::vector<std::pair<int, int>>& points, int w,
                                            int h, int img_w, int img_h) {
  std::vector<CandidateBox> out;
  out.reserve(points.size());
  for (const auto& [px, py] : points) out.push_back(box_at_point(px, py, w, h, img_w, img_h));
  return out;
}

std::string MatchCriterion::name() const {
  if (kind == Kind::Point) return "point";
  return "iou" + std::to_string(static_cast<int>(std::lround(iou_threshold * 100)));
}

SegMetrics seg_metrics(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt)) throw DataError("seg_metrics: dimension mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fp + fn == 0) return SegMetrics{1.0, 1.0};
  return SegMetrics{static_cast<double>(tp) / static_cast<double>(tp + fp + fn),
                    2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn)};
}

double box_iou(const CandidateBox& a, const CandidateBox& b) {
  const int iw = std::min(a.x_br, b.x_br) - std::max(a.x_tl, b.x_tl);
  const int ih = std::min(a.y_br, b.y_br) - std::max(a.y_tl, b.y_tl);
  if (iw <= 0 || ih <= 0) return 0.0;
  const std::int64_t inter = static_cast<std::int64_t>(iw) * ih;
  const std::int64_t area_a = static_cast<std::int64_t>(a.width()) * a.height();
  const std::int64_t area_b = static_cast<std::int64_t>(b.width()) * b.height();
  return static_cast<double>(inter) / static_cast<double>(area_a + area_b - inter);
}

MatchOutcome match_detections(const std::vector<Detection>& preds,
                              const GroundTruthAnnotation& gt, const MatchCriterion& crit) {
  std::vector<int> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    const CandidateBox& ba = preds[a].box;
    const CandidateBox& bb = preds[b].box;
    if (ba.y_tl != bb.y_tl) return ba.y_tl < bb.y_tl;
    if (ba.x_tl != bb.x_tl) return ba.x_tl < bb.x_tl;
    if (ba.y_br != bb.y_br) return ba.y_br < bb.y_br;
    if (ba.x_br != bb.x_br) return ba.x_br < bb.x_br;
    return a < b;
  });

  MatchOutcome out;
  std::vector<bool> gt_taken(gt.points.size(), false);
  for (const int pi : order) {
    const CandidateBox& box = preds[pi].box;
    int chosen = -1;
    if (crit.kind == MatchCriterion::Kind::Point) {
      // Among contained unmatched points, the one nearest the box center.
      const double cx = (box.x_tl + box.x_br) / 2.0;
      const double cy = (box.y_tl + box.y_br) / 2.0;
      double best_d2 = 0.0;
      for (std::size_t gi = 0; gi < gt.points.size(); ++gi) {
        if (gt_taken[gi]) continue;
        const auto& [px, py] = gt.points[gi];
        if (!box.contains_point(px, py)) continue;
        const double d2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        if (chosen < 0 || d2 < best_d2) {
          chosen = static_cast<int>(gi);
          best_d2 = d2;
        }
      }
    } else {
      double best_iou = crit.iou_threshold;  // must strictly exceed
      for (std::size_t gi = 0; gi < gt.boxes.size(); ++gi) {
        if (gt_taken[gi]) continue;
        const double v = box_iou(box, gt.boxes[gi]);
        if (v > best_iou) {
          chosen = static_cast<int>(gi);
          best_iou = v;
        }
      }
    }
    if (chosen >= 0) {
      gt_taken[chosen] = true;
      out.pairs.emplace_back(pi, chosen);
    } else {
      out.unmatched_preds.push_back(pi);
    }
  }
  for (std::size_t gi = 0; gi < gt_taken.size(); ++gi) {
    if (!gt_taken[gi]) out.unmatched_gts.push_back(static_cast<int>(gi));
  }
  return out;
}

EvalReport detection_metrics(const std::vector<ImageDetections>& preds,
                             const std::vector<GroundTruthAnnotation>& gts,
                             const std::vector<MatchCriterion>& criteria) {
  if (gts.empty()) throw DataError("detection_metrics: empty corpus");
  std::map<std::string, const ImageDetections*> pred_by_id;
  for (const auto& p : preds) {
    if (!pred_by_id.emplace(p.image_id, &p).second) {
      throw DataError("detection_metrics: duplicate prediction record for " + p.image_id);
    }
  }
  std::map<std::string, bool> gt_ids;
  for (const auto& g : gts) {
    if (!gt_ids.emplace(g.image_id, true).second) {
      throw DataError("detection_metrics: duplicate ground truth for " + g.image_id);
    }
  }
  for (const auto& p : preds) {
    if (!gt_ids.count(p.image_id)) {
      throw DataError("detection_metrics: prediction for unknown image " + p.image_id);
    }
  }

  EvalReport report;
  static const std::vector<Detection> kNoDetections;
  double abs_count_err_sum = 0.0;
  std::map<std::string, std::array<long, 3>> tallies;  // criterion -> tp, fp, fn
  std::map<std::string, double> mae_c_sum;

  for (const auto& gt : gts) {
    const auto it = pred_by_id.find(gt.image_id);
    const std::vector<Detection>& dets = it == pred_by_id.end() ? kNoDetections : it->second->items;
    ImageEvalRow row;
    row.image_id = gt.image_id;
    row.n_pred = static_cast<long>(dets.size());
    row.n_gt = static_cast<long>(gt.points.size());
    abs_count_err_sum += std::abs(static_cast<double>(row.n_pred - row.n_gt));
    for (const auto& crit : criteria) {
      const MatchOutcome m = match_detections(dets, gt, crit);
      const long tp = static_cast<long>(m.pairs.size());
      auto& t = tallies[crit.name()];
      t[0] += tp;
      t[1] += static_cast<long>(m.unmatched_preds.size());
      t[2] += static_cast<long>(m.unmatched_gts.size());
      mae_c_sum[crit.name()] += std::abs(static_cast<double>(tp - row.n_gt));
      row.tp[crit.name()] = tp;
    }
    report.per_image.push_back(std::move(row));
  }

  const double n_images = static_cast<double>(gts.size());
  report.mae_all = abs_count_err_sum / n_images;
  for (const auto& crit : criteria) {
    const auto& t = tallies[crit.name()];
    CriterionMetrics cm;
    cm.criterion = crit.name();
    cm.tp = t[0];
    cm.fp = t[1];
    cm.fn = t[2];
    cm.mae_c = mae_c_sum[crit.name()] / n_images;
    if (cm.tp + cm.fp > 0) {
      cm.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    } else {
      cm.degenerate = true;
    }
    if (cm.tp + cm.fn > 0) {
      cm.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    } else {
      cm.degenerate = true;
    }
    if (cm.precision + cm.recall > 0) {
      cm.f1 = 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall);
    } else {
      cm.f1 = 0.0;
      cm.degenerate = true;
    }
    report.criteria.push_back(std::move(cm));
  }
  return report;
}

EvalReport segmentation_report(const std::vector<SegMetrics>& per_image) {
  if (per_image.empty()) throw DataError("segmentation_report: empty corpus");
  SegMetrics mean;
  for (const auto& m : per_image) {
    mean.iou += m.iou;
    mean.dice += m.dice;
  }
  mean.iou /= static_cast<double>(per_image.size());
  mean.dice /= static_cast<double>(per_image.size());
  EvalReport report;
  report.segmentation = mean;
  return report;
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream os;
  char line[256];
  if (!report.criteria.empty()) {
    os << "criterion        TP      FP      FN   Prec(%)  Recall(%)   F1(%)    MAE^c\n";
    for (const auto& c : report.criteria) {
      std::snprintf(line, sizeof(line), "%-10s %7ld %7ld %7ld   %7.2f   %7.2f  %7.2f   %6.2f%s\n",
                    c.criterion.c_str(), c.tp, c.fp, c.fn, 100.0 * c.precision, 100.0 * c.recall,
                    100.0 * c.f1, c.mae_c, c.degenerate ? "  [degenerate]" : "");
      os << line;
    }
    std::snprintf(line, sizeof(line), "MAE^all: %.4f over %zu images\n", report.mae_all,
                  report.per_image.size());
    os << line;
  }
  if (report.segmentation) {
    std::snprintf(line, sizeof(line), "segmentation IoU(%%): %.2f  Dice(%%): %.2f\n",
                  100.0 * report.segmentation->iou, 100.0 * report.segmentation->dice);
    os << line;
  }
  return os.str();
}

void write_report_kv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write report: " + path);
  char line[160];
  if (!report.criteria.empty()) {
    std::snprintf(line, sizeof(line), "images=%zu\nmae_all=%.6f\n", report.per_image.size(),
                  report.mae_all);
    out << line;
    for (const auto& c : report.criteria) {
      std::snprintf(line, sizeof(line),
                    "%s.tp=%ld\n%s.fp=%ld\n%s.fn=%ld\n%s.precision=%.6f\n%s.recall=%.6f\n"
                    "%s.f1=%.6f\n%s.mae_c=%.6f\n",
                    c.criterion.c_str(), c.tp, c.criterion.c_str(), c.fp, c.criterion.c_str(), c.fn,
                    c.criterion.c_str(), c.precision, c.criterion.c_str(), c.recall,
                    c.criterion.c_str(), c.f1, c.criterion.c_str(), c.mae_c);
      out << line;
      if (c.degenerate) out << c.criterion << ".degenerate=1\n";
    }
  }
  if (report.segmentation) {
    std::snprintf(line, sizeof(line), "seg.iou=%.6f\nseg.dice=%.6f\n", report.segmentation->iou,
                  report.segmentation->dice);
    out << line;
  }
  if (!out) throw DataError("cannot write report: " + path);
}

namespace {

constexpr const char* kRecordHeader = "image_id,num_points,num_boxes,points(x,y)*,boxes(x_tl,y_tl,x_br,y_br)*,scores*";

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

long parse_long(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("ill-formed record field '" + s + "' in " + path);
  }
}

double parse_double(const std::string& s, const std::string& path) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("ill-formed record field '" + s + "' in " + path);
  }
}

struct RawRecord {
  std::string image_id;
  std::vector<std::pair<int, int>> points;
  std::vector<CandidateBox> boxes;
  std::vector<double> scores;  // empty or one per box
};

void write_records(const std::vector<RawRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << kRecordHeader << "\n";
  char buf[64];
  for (const auto& r : records) {
    out << r.image_id << ',' << r.points.size() << ',' << r.boxes.size();
    for (const auto& [x, y] : r.points) out << ',' << x << ',' << y;
    for (const auto& b : r.boxes) {
      out << ',' << b.x_tl << ',' << b.y_tl << ',' << b.x_br << ',' << b.y_br;
    }
    for (const double s : r.scores) {
      std::snprintf(buf, sizeof(buf), "%.6f", s);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw DataError("cannot write " + path);
}

std::vector<RawRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("image_id,", 0) != 0) {
    throw DataError("missing record header in " + path);
  }
  std::vector<RawRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() < 3) throw DataError("short record in " + path);
    RawRecord r;
    r.image_id = f[0];
    const long np = parse_long(f[1], path);
    const long nb = parse_long(f[2], path);
    const std::size_t base = 3;
    const std::size_t after_points = base + 2 * np;
    const std::size_t after_boxes = after_points + 4 * nb;
    if (np < 0 || nb < 0 ||
        (f.size() != after_boxes && f.size() != after_boxes + static_cast<std::size_t>(nb))) {
      throw DataError("record field count mismatch in " + path);
    }
    for (long i = 0; i < np; ++i) {
      r.points.emplace_back(static_cast<int>(parse_long(f[base + 2 * i], path)),
                            static_cast<int>(parse_long(f[base + 2 * i + 1], path)));
    }
    for (long i = 0; i < nb; ++i) {
      CandidateBox b;
      b.x_tl = static_cast<int>(parse_long(f[after_points + 4 * i], path));
      b.y_tl = static_cast<int>(parse_long(f[after_points + 4 * i + 1], path));
      b.x_br = static_cast<int>(parse_long(f[after_points + 4 * i + 2], path));
      b.y_br = static_cast<int>(parse_long(f[after_points + 4 * i + 3], path));
      if (b.x_tl >= b.x_br || b.y_tl >= b.y_br) throw DataError("degenerate box in " + path);
      b.source_centroid = Point2d{(b.x_tl + b.x_br) / 2.0, (b.y_tl + b.y_br) / 2.0};
      r.boxes.push_back(b);
    }
    if (f.size() == after_boxes + static_cast<std::size_t>(nb)) {
      for (long i = 0; i < nb; ++i) r.scores.push_back(parse_double(f[after_boxes + i], path));
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace

void write_annotations(const std::vector<GroundTruthAnnotation>& annots, const std::string& path) {
  std::vector<RawRecord> records;
  records.reserve(annots.size());
  for (const auto& a : annots) records.push_back(RawRecord{a.image_id, a.points, a.boxes, {}});
  write_records(records, path);
}

std::vector<GroundTruthAnnotation> read_annotations(const std::string& path) {
  std::vector<GroundTruthAnnotation> out;
  for (auto& r : read_records(path)) {
    if (r.points.size() != r.boxes.size()) {
      throw DataError("annotation record for " + r.image_id + " must pair points with boxes in " +
                      path);
    }
    out.push_back(GroundTruthAnnotation{std::move(r.image_id), std::move(r.points),
                                        std::move(r.boxes)});
  }
  return out;
}

void write_detections(const std::vector<ImageDetections>& dets, const std::string& path) {
  std::vector<RawRecord> records;
  records.reserve(dets.size());
  for (const auto& d : dets) {
    RawRecord r;
    r.image_id = d.image_id;
    for (const auto& item : d.items) {
      r.boxes.push_back(item.box);
      r.scores.push_back(item.score);
    }
    records.push_back(std::move(r));
  }
  write_records(records, path);
}

std::vector<ImageDetections> read_detections(const std::string& path) {
  std::vector<ImageDetections> out;
  for (auto& r : read_records(path)) {
    ImageDetections d;
    d.image_id = std::move(r.image_id);
    for (std::size_t i = 0; i < r.boxes.size(); ++i) {
      d.items.push_back(Detection{r.boxes[i], r.scores.empty() ? 0.0 : r.scores[i]});
    }
    out.push_back(std::move(d));
  }
  return out;
}

CorpusSplit split_corpus(std::vector<std::string> ids, double train_frac, double val_frac,
                         std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
    throw DataError("split_corpus: invalid fractions");
  }
  Rng rng(mix_seed(seed, 0x51CED5EEDULL));
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const std::size_t n_train = static_cast<std::size_t>(train_frac * n);
  const std::size_t n_val = static_cast<std::size_t>(val_frac * n);
  CorpusSplit split;
  split.train.assign(ids.begin(), ids.begin() + n_train);
  split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  split.test.assign(ids.begin() + n_train + n_val, ids.end());
  return split;
}

}  // namespace mcd
