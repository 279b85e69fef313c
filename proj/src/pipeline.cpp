#include "mcd/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "mcd/errors.hpp"
#include "mcd/image_io.hpp"

namespace mcd {

namespace fs = std::filesystem;

std::vector<ScoredBox> detect_cells(const GrayImage& g, const BinaryMask& ac_mask,
                                    const NetworkParams& params, const MirpConfig& cfg) {
  const std::vector<CandidateBox> candidates = propose(g, ac_mask, cfg);
  std::vector<ScoredBox> kept;
  for (const auto& scored : classify(params, g, candidates)) {
    if (scored.cell_probability > 0.5) kept.push_back(scored);
  }
  return kept;
}

std::vector<Detection> to_detections(const std::vector<ScoredBox>& scored) {
  std::vector<Detection> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(Detection{s.box, s.cell_probability});
  return out;
}

std::vector<std::string> corpus_ids(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open corpus manifest: " + manifest.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("ill-formed manifest " + manifest.string() + ": " + e.what());
  }
  if (!j.contains("ids") || !j["ids"].is_array()) {
    throw DataError("manifest missing id list: " + manifest.string());
  }
  std::vector<std::string> ids;
  for (const auto& v : j["ids"]) ids.push_back(v.get<std::string>());
  return ids;
}

CorpusSample load_corpus_sample(const std::string& dir, const std::string& id) {
  const fs::path root(dir);
  CorpusSample s;
  s.id = id;
  s.image = load_gray((root / "images" / (id + ".png")).string());
  s.ac_mask = load_mask_png((root / "masks_ac" / (id + ".png")).string());
  if (s.ac_mask.width != s.image.width || s.ac_mask.height != s.image.height) {
    throw DataError("AC mask size mismatch for corpus sample " + id);
  }
  const auto annots = read_annotations((root / "annotations" / (id + ".txt")).string());
  if (annots.size() != 1 || annots[0].image_id != id) {
    throw DataError("annotation file for " + id + " must hold exactly that record");
  }
  s.gt = annots[0];
  return s;
}

LoadedCorpus load_corpus(const std::string& dir, const std::vector<std::string>& ids) {
  LoadedCorpus c;
  c.ids = ids;
  for (const auto& id : ids) {
    CorpusSample s = load_corpus_sample(dir, id);
    c.images.push_back(std::move(s.image));
    c.ac_masks.push_back(std::move(s.ac_mask));
    c.annotations.push_back(std::move(s.gt));
  }
  return c;
}

}  // namespace mcd
