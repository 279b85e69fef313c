#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcd/eval.hpp"
#include "mcd/image.hpp"
#include "mcd/mirp.hpp"
#include "mcd/rng.hpp"
#include "mcd/tensor.hpp"

namespace mcd {

// 10x10 single-channel patches; the architecture below is sized to them.
inline constexpr int kPatchSize = 10;

struct ConvBlockParams {
  Tensor w, b;                    // [out,in,k,k], [out]
  Tensor bn_gamma, bn_beta;       // [out]
  Tensor bn_run_mean, bn_run_var; // [out]
};

// conv1 1->16 (3x3) | conv2 16->32 | spatial attention (7x7, 2->1) |
// conv3 32->64 | fc1 64->32 | fc2 32->2. Each conv block is conv, BN, ReLU,
// 2x2 max-pool.
struct NetworkParams {
  ConvBlockParams conv1, conv2, conv3;
  Tensor attn_w, attn_b;
  Tensor fc1_w, fc1_b;  // [32,64], [32]
  Tensor fc2_w, fc2_b;  // [2,32], [2]

  static NetworkParams init(std::uint64_t seed);
};

// Trainable tensors in checkpoint order; running stats excluded.
std::vector<std::pair<std::string, Tensor*>> trainable_tensors(NetworkParams& p);
// Every tensor including batch-norm running statistics.
std::vector<std::pair<std::string, Tensor*>> all_tensors(NetworkParams& p);

struct Gradients {
  ConvBlockParams conv1, conv2, conv3;  // running-stat members unused
  Tensor attn_w, attn_b;
  Tensor fc1_w, fc1_b;
  Tensor fc2_w, fc2_b;

  static Gradients zeros_like(const NetworkParams& p);
};
std::vector<std::pair<std::string, Tensor*>> trainable_tensors(Gradients& g);

struct ForwardCache {
  bool train_mode = false;
  double dropout_rate = 0.0;
  Tensor x0;
  Tensor bn1_xhat, bn1_invstd, relu1_out, p1;
  std::vector<std::int32_t> pool1_arg;
  Tensor bn2_xhat, bn2_invstd, relu2_out, p2;
  std::vector<std::int32_t> pool2_arg;
  Tensor attn_cat, attn_a, f3;
  std::vector<std::int32_t> attn_argc;
  Tensor bn3_xhat, bn3_invstd, relu3_out, p3;
  std::vector<std::int32_t> pool3_arg;
  Tensor flat, fc1_relu_out, dropout_out;
  std::vector<std::uint8_t> dropout_mask;
  Tensor probs;  // [N,2]
};

// Train-mode forward: batch statistics, dropout, running stats updated on
// params. rng drives the dropout mask (may be null when dropout_rate == 0).
ForwardCache forward_train(NetworkParams& params, const Tensor& batch, double dropout_rate,
                           Rng* rng);

// Eval-mode forward: running statistics, no dropout, params untouched.
Tensor forward_eval(const NetworkParams& params, const Tensor& batch);

// Standalone spatial attention on one [C,H,W] feature map: channel-wise
// average and maximum maps, 7x7 conv (pad 3), sigmoid, broadcast product.
Tensor spatial_attention(const Tensor& f, const Tensor& attn_w, const Tensor& attn_b);

// Mean cross-entropy; probabilities are clamped at 1e-12 before the log.
double cross_entropy(const Tensor& probabilities, const std::vector<int>& labels);

// Analytic gradients of the mean cross-entropy for a train-mode cache.
Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const std::vector<int>& labels);

struct Patch {
  std::vector<double> pixels;  // w*h, scaled to [0,1]
  int label = 0;               // 1 = cell, 0 = background
};

struct PatchSet {
  int width = 0, height = 0;
  std::vector<Patch> items;
};

struct TrainConfig {
  int ratio_pos = 1;  // N^pos : N^neg imbalanced sampling
  int ratio_neg = 5;
  int patience = 30;
  int batch_size = 128;
  double learning_rate = 0.01;
  int max_epochs = 500;
  double dropout_rate = 0.5;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

// Positives crop every ground-truth box; negatives per image reach the
// configured ratio, drawn first from proposal candidates containing no
// ground-truth point, topped up with random in-AC positions that do not
// overlap any ground-truth box.
PatchSet build_training_set(const std::vector<GrayImage>& images,
                            const std::vector<BinaryMask>& ac_masks,
                            const std::vector<GroundTruthAnnotation>& annotations,
                            const MirpConfig& mirp_cfg, const TrainConfig& cfg, Rng& rng);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  NetworkParams params;
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// SGD with momentum; stops after `patience` epochs without the validation
// loss improving by at least 1e-6, returning the best-epoch parameters.
TrainResult train(const PatchSet& train_set, const PatchSet& val_set, const TrainConfig& cfg);

struct ScoredBox {
  CandidateBox box;
  double cell_probability = 0.0;
};

std::vector<ScoredBox> classify(const NetworkParams& params, const GrayImage& g,
                                const std::vector<CandidateBox>& boxes);

Tensor patches_to_batch(const PatchSet& set, const std::vector<int>& indices);

// Versioned little-endian checkpoint: "MCDW", u32 version, then per-tensor
// records (u32 name length, name, u32 rank, u32 extents, f32 payload).
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

// Text lines "epoch,train_loss,val_loss".
void write_training_log(const std::vector<EpochLog>& log, const std::string& path);

}  // namespace mcd
