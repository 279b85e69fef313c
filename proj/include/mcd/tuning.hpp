#pragma once

#include <vector>

#include "mcd/eval.hpp"
#include "mcd/image.hpp"
#include "mcd/mirp.hpp"
#include "mcd/san.hpp"

namespace mcd {

struct LambdaGrid {
  double lo = 0.7;
  double hi = 1.0;
  double step = 0.01;
};

struct LambdaEval {
  double lambda = 0.0;
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct LambdaSearchResult {
  double best_lambda = 0.0;
  double best_f1 = 0.0;
  std::vector<LambdaEval> table;
};

// Full detection (proposal + classifier) per grid lambda on the validation
// corpus; returns the F1_point maximizer, ties resolved toward the largest
// lambda. Grid values come from integer indexing of [lo, hi].
LambdaSearchResult search_lambda(const std::vector<GrayImage>& images,
                                 const std::vector<GroundTruthAnnotation>& annotations,
                                 const std::vector<BinaryMask>& ac_masks,
                                 const NetworkParams& params, const MirpConfig& base_cfg,
                                 const LambdaGrid& grid);

void write_lambda_report(const LambdaSearchResult& result, const std::string& path);

}  // namespace mcd
