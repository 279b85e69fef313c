#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "mcd/errors.hpp"
#include "mcd/log.hpp"
#include "mcd/san.hpp"

namespace mcd {

namespace {

Patch crop_patch(const GrayImage& g, const CandidateBox& box, int label) {
  Patch p;
  p.label = label;
  p.pixels.reserve(static_cast<std::size_t>(box.width()) * box.height());
  for (int y = box.y_tl; y < box.y_br; ++y) {
    for (int x = box.x_tl; x < box.x_br; ++x) {
      if (!g.in_bounds(x, y)) throw DataError("crop_patch: box outside image");
      p.pixels.push_back(g.at(x, y) / 255.0);
    }
  }
  return p;
}

bool boxes_overlap(const CandidateBox& a, const CandidateBox& b) {
  return std::min(a.x_br, b.x_br) > std::max(a.x_tl, b.x_tl) &&
         std::min(a.y_br, b.y_br) > std::max(a.y_tl, b.y_tl);
}

}  // namespace

PatchSet build_training_set(const std::vector<GrayImage>& images,
                            const std::vector<BinaryMask>& ac_masks,
                            const std::vector<GroundTruthAnnotation>& annotations,
                            const MirpConfig& mirp_cfg, const TrainConfig& cfg, Rng& rng) {
  if (images.size() != ac_masks.size() || images.size() != annotations.size()) {
    throw DataError("build_training_set: images/masks/annotations size mismatch");
  }
  if (cfg.ratio_pos < 1 || cfg.ratio_neg < 1 || cfg.ratio_pos >= cfg.ratio_neg) {
    throw DataError("build_training_set: need 1 <= ratio_pos < ratio_neg");
  }
  PatchSet set;
  set.width = mirp_cfg.box_w;
  set.height = mirp_cfg.box_h;

  for (std::size_t i = 0; i < images.size(); ++i) {
    const GrayImage& img = images[i];
    const GroundTruthAnnotation& gt = annotations[i];
    for (const auto& box : gt.boxes) set.items.push_back(crop_patch(img, box, 1));

    const long n_pos = static_cast<long>(gt.boxes.size());
    const long n_neg = n_pos * cfg.ratio_neg / cfg.ratio_pos;
    if (n_neg == 0) continue;

    // Hard negatives: proposal candidates containing no ground-truth point.
    std::vector<CandidateBox> hard;
    for (const auto& cand : propose(img, ac_masks[i], mirp_cfg)) {
      bool has_point = false;
      for (const auto& [px, py] : gt.points) {
        if (cand.contains_point(px, py)) {
          has_point = true;
          break;
        }
      }
      if (!has_point) hard.push_back(cand);
    }
    rng.shuffle(hard);
    long taken = 0;
    for (const auto& cand : hard) {
      if (taken == n_neg) break;
      set.items.push_back(crop_patch(img, cand, 0));
      ++taken;
    }
    if (taken == n_neg) continue;

    // Top up with random AC positions clear of every ground-truth box.
    std::vector<std::int32_t> ac_pixels;
    for (std::size_t k = 0; k < ac_masks[i].bits.size(); ++k) {
      if (ac_masks[i].bits[k]) ac_pixels.push_back(static_cast<std::int32_t>(k));
    }
    if (ac_pixels.empty()) {
      log_warn("build_training_set: image " + gt.image_id +
               " has no AC area; negatives skipped");
      continue;
    }
    long attempts = 200 * (n_neg - taken) + 200;
    while (taken < n_neg && attempts-- > 0) {
      const std::int32_t pick = ac_pixels[rng.below(ac_pixels.size())];
      const int px = pick % img.width, py = pick / img.width;
      const CandidateBox box =
          box_at_point(px, py, mirp_cfg.box_w, mirp_cfg.box_h, img.width, img.height);
      bool clear = true;
      for (const auto& gbox : gt.boxes) {
        if (boxes_overlap(box, gbox)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      set.items.push_back(crop_patch(img, box, 0));
      ++taken;
    }
    if (taken < n_neg) {
      log_warn("build_training_set: image " + gt.image_id + " yielded only " +
               std::to_string(taken) + "/" + std::to_string(n_neg) + " negatives");
    }
  }
  return set;
}

Tensor patches_to_batch(const PatchSet& set, const std::vector<int>& indices) {
  const int n = static_cast<int>(indices.size());
  Tensor batch = Tensor::zeros({n, 1, set.height, set.width});
  const std::size_t plane = static_cast<std::size_t>(set.width) * set.height;
  for (int i = 0; i < n; ++i) {
    const Patch& p = set.items[indices[i]];
    if (p.pixels.size() != plane) throw DataError("patches_to_batch: inconsistent patch size");
    std::copy(p.pixels.begin(), p.pixels.end(), batch.data.begin() + i * plane);
  }
  return batch;
}

namespace {

double eval_loss(const NetworkParams& params, const PatchSet& set, int batch_size) {
  double total = 0.0;
  const int n = static_cast<int>(set.items.size());
  for (int start = 0; start < n; start += batch_size) {
    const int batch_n = std::min(batch_size, n - start);
    std::vector<int> idx(batch_n);
    std::iota(idx.begin(), idx.end(), start);
    std::vector<int> labels(batch_n);
    for (int i = 0; i < batch_n; ++i) labels[i] = set.items[start + i].label;
    const Tensor probs = forward_eval(params, patches_to_batch(set, idx));
    total += cross_entropy(probs, labels) * batch_n;
  }
  return total / n;
}

struct SgdState {
  std::vector<Tensor> velocity;
};

void sgd_step(NetworkParams& params, Gradients& grads, SgdState& state, double lr,
              double momentum) {
  auto ps = trainable_tensors(params);
  auto gs = trainable_tensors(grads);
  if (state.velocity.empty()) {
    state.velocity.reserve(ps.size());
    for (auto& [name, t] : ps) state.velocity.push_back(Tensor::zeros(t->shape));
  }
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor& w = *ps[k].second;
    const Tensor& g = *gs[k].second;
    Tensor& v = state.velocity[k];
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      v.data[i] = momentum * v.data[i] + g.data[i];
      w.data[i] -= lr * v.data[i];
    }
  }
}

}  // namespace

TrainResult train(const PatchSet& train_set, const PatchSet& val_set, const TrainConfig& cfg) {
  if (train_set.items.empty() || val_set.items.empty()) {
    throw DataError("train: training and validation sets must be nonempty");
  }
  if (train_set.width != kPatchSize || train_set.height != kPatchSize) {
    throw DataError("train: patches must be 10x10");
  }
  Rng rng(mix_seed(cfg.seed, 0x7ea1717ULL));
  NetworkParams params = NetworkParams::init(cfg.seed);
  SgdState sgd;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  NetworkParams best = params;
  int stagnant = 0;

  std::vector<int> order(train_set.items.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t batch_n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      std::vector<int> idx(order.begin() + start, order.begin() + start + batch_n);
      std::vector<int> labels(batch_n);
      for (std::size_t i = 0; i < batch_n; ++i) labels[i] = train_set.items[idx[i]].label;
      const Tensor batch = patches_to_batch(train_set, idx);
      ForwardCache cache = forward_train(params, batch, cfg.dropout_rate, &rng);
      const double batch_loss = cross_entropy(cache.probs, labels);
      if (!std::isfinite(batch_loss)) throw ComputeError("train: loss diverged (non-finite)");
      loss_sum += batch_loss * batch_n;
      Gradients grads = backward(params, cache, labels);
      sgd_step(params, grads, sgd, cfg.learning_rate, cfg.momentum);
    }
    const double train_loss = loss_sum / order.size();
    const double val_loss = eval_loss(params, val_set, cfg.batch_size);
    if (!std::isfinite(val_loss)) throw ComputeError("train: validation loss diverged");
    result.log.push_back(EpochLog{epoch, train_loss, val_loss});

    if (result.best_val_loss - val_loss >= 1e-6) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = params;
      stagnant = 0;
    } else {
      ++stagnant;
      if (stagnant >= cfg.patience) break;
    }
  }
  result.params = std::move(best);
  return result;
}

std::vector<ScoredBox> classify(const NetworkParams& params, const GrayImage& g,
                                const std::vector<CandidateBox>& boxes) {
  std::vector<ScoredBox> out;
  out.reserve(boxes.size());
  if (boxes.empty()) return out;

  PatchSet set;
  set.width = boxes[0].width();
  set.height = boxes[0].height();
  for (const auto& box : boxes) set.items.push_back(crop_patch(g, box, 0));

  constexpr int kBatch = 128;
  const int n = static_cast<int>(boxes.size());
  for (int start = 0; start < n; start += kBatch) {
    const int batch_n = std::min(kBatch, n - start);
    std::vector<int> idx(batch_n);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = forward_eval(params, patches_to_batch(set, idx));
    for (int i = 0; i < batch_n; ++i) {
      out.push_back(ScoredBox{boxes[start + i], probs.data[2 * i + 1]});
    }
  }
  return out;
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(buf, bits);
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;
  const std::string& path;

  void need(std::size_t n) {
    if (pos + n > buf.size()) throw DataError("truncated checkpoint: " + path);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[pos + i]);
    pos += 4;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  std::string buf;
  buf += "MCDW";
  put_u32(buf, kCheckpointVersion);
  auto tensors = all_tensors(const_cast<NetworkParams&>(params));
  for (const auto& [name, t] : tensors) {
    put_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf += name;
    put_u32(buf, static_cast<std::uint32_t>(t->shape.size()));
    for (int e : t->shape) put_u32(buf, static_cast<std::uint32_t>(e));
    for (double v : t->data) put_f32(buf, static_cast<float>(v));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
    throw DataError("cannot write checkpoint: " + path);
  }
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r{buf, 0, path};
  if (r.bytes(4) != "MCDW") throw DataError("bad checkpoint magic: " + path);
  if (r.u32() != kCheckpointVersion) throw DataError("unsupported checkpoint version: " + path);

  std::map<std::string, Tensor> loaded;
  while (r.pos < buf.size()) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DataError("bad tensor rank in checkpoint: " + path);
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (auto& e : shape) {
      e = static_cast<int>(r.u32());
      numel *= e;
    }
    Tensor t = Tensor::zeros(shape);
    for (std::int64_t i = 0; i < numel; ++i) t.data[i] = r.f32();
    if (!loaded.emplace(name, std::move(t)).second) {
      throw DataError("duplicate tensor '" + name + "' in checkpoint: " + path);
    }
  }

  NetworkParams params = NetworkParams::init(0);
  for (auto& [name, dst] : all_tensors(params)) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) throw DataError("missing tensor '" + name + "' in checkpoint: " + path);
    if (it->second.shape != dst->shape) {
      throw DataError("tensor '" + name + "' shape mismatch in checkpoint: " + path);
    }
    *dst = std::move(it->second);
    loaded.erase(it);
  }
  if (!loaded.empty()) {
    throw DataError("unexpected tensor '" + loaded.begin()->first + "' in checkpoint: " + path);
  }
  return params;
}

void write_training_log(const std::vector<EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write training log: " + path);
  char line[96];
  for (const auto& e : log) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.epoch, e.train_loss, e.val_loss);
    out << line;
  }
  if (!out) throw DataError("cannot write training log: " + path);
}

}  // namespace mcd
