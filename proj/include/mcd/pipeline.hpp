#pragma once

#include <string>
#include <vector>

#include "mcd/eval.hpp"
#include "mcd/image.hpp"
#include "mcd/mirp.hpp"
#include "mcd/san.hpp"

namespace mcd {

// Full MCD detection for one image: proposals, classifier, keep boxes with
// cell probability > 0.5.
std::vector<ScoredBox> detect_cells(const GrayImage& g, const BinaryMask& ac_mask,
                                    const NetworkParams& params, const MirpConfig& cfg);

std::vector<Detection> to_detections(const std::vector<ScoredBox>& scored);

struct CorpusSample {
  std::string id;
  GrayImage image;
  BinaryMask ac_mask;
  GroundTruthAnnotation gt;
};

// Synthetic-corpus directory layout: images/, masks_ac/, annotations/ and a
// manifest.json with the id list.
std::vector<std::string> corpus_ids(const std::string& dir);
CorpusSample load_corpus_sample(const std::string& dir, const std::string& id);

struct LoadedCorpus {
  std::vector<std::string> ids;
  std::vector<GrayImage> images;
  std::vector<BinaryMask> ac_masks;
  std::vector<GroundTruthAnnotation> annotations;
};
LoadedCorpus load_corpus(const std::string& dir, const std::vector<std::string>& ids);

}  // namespace mcd
