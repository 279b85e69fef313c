#include "mcd/tuning.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mcd/errors.hpp"
#include "mcd/pipeline.hpp"

namespace mcd {

LambdaSearchResult search_lambda(const std::vector<GrayImage>& images,
                                 const std::vector<GroundTruthAnnotation>& annotations,
                                 const std::vector<BinaryMask>& ac_masks,
                                 const NetworkParams& params, const MirpConfig& base_cfg,
                                 const LambdaGrid& grid) {
  if (images.empty()) throw DataError("search_lambda: empty validation set");
  if (images.size() != annotations.size() || images.size() != ac_masks.size()) {
    throw DataError("search_lambda: corpus size mismatch");
  }
  if (!(grid.step > 0.0 && grid.hi >= grid.lo)) throw DataError("search_lambda: bad grid");

  const int steps = static_cast<int>(std::lround((grid.hi - grid.lo) / grid.step));
  const MatchCriterion crit = MatchCriterion::point();

  LambdaSearchResult result;
  for (int k = 0; k <= steps; ++k) {
    MirpConfig cfg = base_cfg;
    cfg.lambda = grid.lo + k * grid.step;
    LambdaEval row;
    row.lambda = cfg.lambda;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto dets = to_detections(detect_cells(images[i], ac_masks[i], params, cfg));
      const MatchOutcome m = match_detections(dets, annotations[i], crit);
      row.tp += static_cast<long>(m.pairs.size());
      row.fp += static_cast<long>(m.unmatched_preds.size());
      row.fn += static_cast<long>(m.unmatched_gts.size());
    }
    row.precision = row.tp + row.fp > 0 ? static_cast<double>(row.tp) / (row.tp + row.fp) : 0.0;
    row.recall = row.tp + row.fn > 0 ? static_cast<double>(row.tp) / (row.tp + row.fn) : 0.0;
    row.f1 = row.precision + row.recall > 0
                 ? 2.0 * row.precision * row.recall / (row.precision + row.recall)
                 : 0.0;
    // >= keeps the later (larger) lambda on ties.
    if (result.table.empty() || row.f1 >= result.best_f1) {
      result.best_f1 = row.f1;
      result.best_lambda = row.lambda;
    }
    result.table.push_back(row);
  }
  return result;
}

void write_lambda_report(const LambdaSearchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write lambda report: " + path);
  char line[160];
  std::snprintf(line, sizeof(line), "best_lambda=%.2f\nbest_f1_point=%.6f\n", result.best_lambda,
                result.best_f1);
  out << line;
  for (std::size_t k = 0; k < result.table.size(); ++k) {
    const LambdaEval& r = result.table[k];
    std::snprintf(line, sizeof(line),
                  "sweep.%zu.lambda=%.2f\nsweep.%zu.tp=%ld\nsweep.%zu.fp=%ld\nsweep.%zu.fn=%ld\n"
                  "sweep.%zu.precision=%.6f\nsweep.%zu.recall=%.6f\nsweep.%zu.f1=%.6f\n",
                  k, r.lambda, k, r.tp, k, r.fp, k, r.fn, k, r.precision, k, r.recall, k, r.f1);
    out << line;
  }
  if (!out) throw DataError("cannot write lambda report: " + path);
}

}  // namespace mcd
