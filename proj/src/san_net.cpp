#include <algorithm>
#include <cmath>

#include "mcd/errors.hpp"
#include "mcd/san.hpp"

namespace mcd {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Channel widths and spatial sizes along the 10x10 stack.
constexpr int kC1 = 16, kC2 = 32, kC3 = 64;
constexpr int kH0 = kPatchSize;         // 10
constexpr int kH1 = kH0 / 2;            // 5
constexpr int kH2 = kH1 / 2;            // 2
constexpr int kH3 = kH2 / 2;            // 1
constexpr int kFc1 = 32;

struct Dims {
  int n, c, h, w;
  std::int64_t plane() const { return static_cast<std::int64_t>(h) * w; }
  std::int64_t chw() const { return static_cast<std::int64_t>(c) * h * w; }
};

double& at4(Tensor& t, const Dims& d, int n, int c, int y, int x) {
  return t.data[((static_cast<std::int64_t>(n) * d.c + c) * d.h + y) * d.w + x];
}
double at4(const Tensor& t, const Dims& d, int n, int c, int y, int x) {
  return t.data[((static_cast<std::int64_t>(n) * d.c + c) * d.h + y) * d.w + x];
}

// pad = k/2, stride 1, zero padding.
void conv2d_forward(const Tensor& x, const Dims& xd, const Tensor& w, const Tensor& b, int k,
                    Tensor& y, const Dims& yd) {
  const int pad = k / 2;
  for (int n = 0; n < xd.n; ++n) {
    for (int o = 0; o < yd.c; ++o) {
      for (int oy = 0; oy < yd.h; ++oy) {
        for (int ox = 0; ox < yd.w; ++ox) {
          double acc = b.data[o];
          for (int ci = 0; ci < xd.c; ++ci) {
            const double* wp = &w.data[((static_cast<std::int64_t>(o) * xd.c + ci) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= xd.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= xd.w) continue;
                acc += wp[ky * k + kx] * at4(x, xd, n, ci, iy, ix);
              }
            }
          }
          at4(y, yd, n, o, oy, ox) = acc;
        }
      }
    }
  }
}

void conv2d_backward(const Tensor& dy, const Dims& yd, const Tensor& x, const Dims& xd,
                     const Tensor& w, int k, Tensor& dx, Tensor& dw, Tensor& db) {
  const int pad = k / 2;
  for (int n = 0; n < xd.n; ++n) {
    for (int o = 0; o < yd.c; ++o) {
      for (int oy = 0; oy < yd.h; ++oy) {
        for (int ox = 0; ox < yd.w; ++ox) {
          const double g = at4(dy, yd, n, o, oy, ox);
          if (g == 0.0) continue;
          db.data[o] += g;
          for (int ci = 0; ci < xd.c; ++ci) {
            double* dwp = &dw.data[((static_cast<std::int64_t>(o) * xd.c + ci) * k) * k];
            const double* wp = &w.data[((static_cast<std::int64_t>(o) * xd.c + ci) * k) * k];
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy + ky - pad;
              if (iy < 0 || iy >= xd.h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox + kx - pad;
                if (ix < 0 || ix >= xd.w) continue;
                dwp[ky * k + kx] += g * at4(x, xd, n, ci, iy, ix);
                at4(dx, xd, n, ci, iy, ix) += g * wp[ky * k + kx];
              }
            }
          }
        }
      }
    }
  }
}

// Train-mode batch norm over (N,H,W) per channel with biased variance.
// Returns xhat and per-channel 1/sqrt(var+eps); updates running stats.
void bn_forward_train(const Tensor& x, const Dims& d, ConvBlockParams& p, Tensor& y, Tensor& xhat,
                      Tensor& invstd) {
  const std::int64_t m = static_cast<std::int64_t>(d.n) * d.h * d.w;
  for (int c = 0; c < d.c; ++c) {
    double sum = 0.0;
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) sum += at4(x, d, n, c, yy, xx);
    const double mean = sum / static_cast<double>(m);
    double var_sum = 0.0;
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          const double diff = at4(x, d, n, c, yy, xx) - mean;
          var_sum += diff * diff;
        }
    const double var = var_sum / static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + kBnEps);
    invstd.data[c] = is;
    const double gamma = p.bn_gamma.data[c], beta = p.bn_beta.data[c];
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          const double xh = (at4(x, d, n, c, yy, xx) - mean) * is;
          at4(xhat, d, n, c, yy, xx) = xh;
          at4(y, d, n, c, yy, xx) = gamma * xh + beta;
        }
    p.bn_run_mean.data[c] = (1.0 - kBnMomentum) * p.bn_run_mean.data[c] + kBnMomentum * mean;
    p.bn_run_var.data[c] = (1.0 - kBnMomentum) * p.bn_run_var.data[c] + kBnMomentum * var;
  }
}

void bn_forward_eval(const Tensor& x, const Dims& d, const ConvBlockParams& p, Tensor& y) {
  for (int c = 0; c < d.c; ++c) {
    const double is = 1.0 / std::sqrt(p.bn_run_var.data[c] + kBnEps);
    const double gamma = p.bn_gamma.data[c], beta = p.bn_beta.data[c];
    const double mean = p.bn_run_mean.data[c];
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          at4(y, d, n, c, yy, xx) = gamma * (at4(x, d, n, c, yy, xx) - mean) * is + beta;
        }
  }
}

void bn_backward(const Tensor& dy, const Dims& d, const Tensor& xhat, const Tensor& invstd,
                 const Tensor& gamma, Tensor& dx, Tensor& dgamma, Tensor& dbeta) {
  const double m = static_cast<double>(static_cast<std::int64_t>(d.n) * d.h * d.w);
  for (int c = 0; c < d.c; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          const double g = at4(dy, d, n, c, yy, xx);
          sum_dy += g;
          sum_dy_xhat += g * at4(xhat, d, n, c, yy, xx);
        }
    dgamma.data[c] += sum_dy_xhat;
    dbeta.data[c] += sum_dy;
    const double scale = gamma.data[c] * invstd.data[c] / m;
    for (int n = 0; n < d.n; ++n)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          at4(dx, d, n, c, yy, xx) = scale * (m * at4(dy, d, n, c, yy, xx) - sum_dy -
                                              at4(xhat, d, n, c, yy, xx) * sum_dy_xhat);
        }
  }
}

void relu_forward(const Tensor& x, Tensor& y) {
  for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
}

void relu_backward(const Tensor& dy, const Tensor& out, Tensor& dx) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) dx.data[i] = out.data[i] > 0.0 ? dy.data[i] : 0.0;
}

// 2x2/stride-2 max pooling; odd trailing rows/columns are dropped. The
// argmax records the flat spatial index inside the input plane; ties keep
// the first element in scan order.
void maxpool2_forward(const Tensor& x, const Dims& xd, Tensor& y, const Dims& yd,
                      std::vector<std::int32_t>& arg) {
  for (int n = 0; n < xd.n; ++n) {
    for (int c = 0; c < xd.c; ++c) {
      for (int oy = 0; oy < yd.h; ++oy) {
        for (int ox = 0; ox < yd.w; ++ox) {
          double best = -1e300;
          int best_idx = 0;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int iy = 2 * oy + dy, ix = 2 * ox + dx;
              const double v = at4(x, xd, n, c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = iy * xd.w + ix;
              }
            }
          }
          at4(y, yd, n, c, oy, ox) = best;
          arg[((static_cast<std::int64_t>(n) * yd.c + c) * yd.h + oy) * yd.w + ox] = best_idx;
        }
      }
    }
  }
}

void maxpool2_backward(const Tensor& dy, const Dims& yd, const std::vector<std::int32_t>& arg,
                       Tensor& dx, const Dims& xd) {
  for (int n = 0; n < yd.n; ++n) {
    for (int c = 0; c < yd.c; ++c) {
      for (int oy = 0; oy < yd.h; ++oy) {
        for (int ox = 0; ox < yd.w; ++ox) {
          const std::int64_t oi = ((static_cast<std::int64_t>(n) * yd.c + c) * yd.h + oy) * yd.w + ox;
          const std::int32_t spatial = arg[oi];
          dx.data[(static_cast<std::int64_t>(n) * xd.c + c) * xd.plane() + spatial] += dy.data[oi];
        }
      }
    }
  }
}

void fc_forward(const Tensor& x, int n, int in, const Tensor& w, const Tensor& b, int out,
                Tensor& y) {
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out; ++o) {
      double acc = b.data[o];
      const double* wp = &w.data[static_cast<std::int64_t>(o) * in];
      const double* xp = &x.data[static_cast<std::int64_t>(i) * in];
      for (int k = 0; k < in; ++k) acc += wp[k] * xp[k];
      y.data[static_cast<std::int64_t>(i) * out + o] = acc;
    }
  }
}

void fc_backward(const Tensor& dy, int n, int out, const Tensor& x, int in, const Tensor& w,
                 Tensor& dx, Tensor& dw, Tensor& db) {
  for (int i = 0; i < n; ++i) {
    const double* xp = &x.data[static_cast<std::int64_t>(i) * in];
    double* dxp = &dx.data[static_cast<std::int64_t>(i) * in];
    for (int o = 0; o < out; ++o) {
      const double g = dy.data[static_cast<std::int64_t>(i) * out + o];
      if (g == 0.0) continue;
      db.data[o] += g;
      double* dwp = &dw.data[static_cast<std::int64_t>(o) * in];
      const double* wp = &w.data[static_cast<std::int64_t>(o) * in];
      for (int k = 0; k < in; ++k) {
        dwp[k] += g * xp[k];
        dxp[k] += g * wp[k];
      }
    }
  }
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// A(F) = sigmoid(conv7x7([avg_c(F); max_c(F)])), output F * A broadcast over
// channels. Channel-max ties keep the lowest channel.
void attention_forward(const Tensor& f, const Dims& d, const Tensor& w, const Tensor& b,
                       Tensor& cat, Tensor& a, std::vector<std::int32_t>& argc, Tensor& out) {
  const Dims cat_d{d.n, 2, d.h, d.w};
  const Dims a_d{d.n, 1, d.h, d.w};
  for (int n = 0; n < d.n; ++n) {
    for (int yy = 0; yy < d.h; ++yy) {
      for (int xx = 0; xx < d.w; ++xx) {
        double sum = 0.0, best = -1e300;
        int best_c = 0;
        for (int c = 0; c < d.c; ++c) {
          const double v = at4(f, d, n, c, yy, xx);
          sum += v;
          if (v > best) {
            best = v;
            best_c = c;
          }
        }
        at4(cat, cat_d, n, 0, yy, xx) = sum / d.c;
        at4(cat, cat_d, n, 1, yy, xx) = best;
        argc[(static_cast<std::int64_t>(n) * d.h + yy) * d.w + xx] = best_c;
      }
    }
  }
  Tensor z = Tensor::zeros({d.n, 1, d.h, d.w});
  conv2d_forward(cat, cat_d, w, b, 7, z, a_d);
  for (std::size_t i = 0; i < z.data.size(); ++i) a.data[i] = sigmoid(z.data[i]);
  for (int n = 0; n < d.n; ++n)
    for (int c = 0; c < d.c; ++c)
      for (int yy = 0; yy < d.h; ++yy)
        for (int xx = 0; xx < d.w; ++xx) {
          at4(out, d, n, c, yy, xx) = at4(f, d, n, c, yy, xx) * at4(a, a_d, n, 0, yy, xx);
        }
}

void attention_backward(const Tensor& dout, const Dims& d, const Tensor& f, const Tensor& cat,
                        const Tensor& a, const std::vector<std::int32_t>& argc, const Tensor& w,
                        Tensor& df, Tensor& dw, Tensor& db) {
  const Dims cat_d{d.n, 2, d.h, d.w};
  const Dims a_d{d.n, 1, d.h, d.w};
  Tensor dz = Tensor::zeros({d.n, 1, d.h, d.w});
  for (int n = 0; n < d.n; ++n) {
    for (int yy = 0; yy < d.h; ++yy) {
      for (int xx = 0; xx < d.w; ++xx) {
        const double av = at4(a, a_d, n, 0, yy, xx);
        double da = 0.0;
        for (int c = 0; c < d.c; ++c) {
          const double g = at4(dout, d, n, c, yy, xx);
          at4(df, d, n, c, yy, xx) += g * av;  // product rule, F side
          da += g * at4(f, d, n, c, yy, xx);
        }
        at4(dz, a_d, n, 0, yy, xx) = da * av * (1.0 - av);
      }
    }
  }
  Tensor dcat = Tensor::zeros({d.n, 2, d.h, d.w});
  conv2d_backward(dz, a_d, cat, cat_d, w, 7, dcat, dw, db);
  for (int n = 0; n < d.n; ++n) {
    for (int yy = 0; yy < d.h; ++yy) {
      for (int xx = 0; xx < d.w; ++xx) {
        const double g_avg = at4(dcat, cat_d, n, 0, yy, xx) / d.c;
        for (int c = 0; c < d.c; ++c) at4(df, d, n, c, yy, xx) += g_avg;
        const int bc = argc[(static_cast<std::int64_t>(n) * d.h + yy) * d.w + xx];
        at4(df, d, n, bc, yy, xx) += at4(dcat, cat_d, n, 1, yy, xx);
      }
    }
  }
}

void softmax2(const Tensor& logits, int n, Tensor& probs) {
  for (int i = 0; i < n; ++i) {
    const double a = logits.data[2 * i], b = logits.data[2 * i + 1];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    probs.data[2 * i] = ea / (ea + eb);
    probs.data[2 * i + 1] = eb / (ea + eb);
  }
}

void validate_batch(const Tensor& batch) {
  if (batch.shape.size() != 4 || batch.shape[1] != 1 || batch.shape[2] != kPatchSize ||
      batch.shape[3] != kPatchSize) {
    throw DataError("forward: batch must be [N,1,10,10]");
  }
  if (batch.shape[0] < 1) throw DataError("forward: empty batch");
  if (!batch.all_finite()) throw DataError("forward: non-finite input");
}

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

ConvBlockParams init_conv_block(int in_c, int out_c, int k, Rng& rng) {
  ConvBlockParams p;
  p.w = kaiming_uniform({out_c, in_c, k, k}, in_c * k * k, rng);
  p.b = Tensor::zeros({out_c});
  p.bn_gamma = Tensor::full({out_c}, 1.0);
  p.bn_beta = Tensor::zeros({out_c});
  p.bn_run_mean = Tensor::zeros({out_c});
  p.bn_run_var = Tensor::full({out_c}, 1.0);
  return p;
}

}  // namespace

NetworkParams NetworkParams::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5a17c0deULL));
  NetworkParams p;
  p.conv1 = init_conv_block(1, kC1, 3, rng);
  p.conv2 = init_conv_block(kC1, kC2, 3, rng);
  p.attn_w = kaiming_uniform({1, 2, 7, 7}, 2 * 7 * 7, rng);
  p.attn_b = Tensor::zeros({1});
  p.conv3 = init_conv_block(kC2, kC3, 3, rng);
  p.fc1_w = kaiming_uniform({kFc1, kC3}, kC3, rng);
  p.fc1_b = Tensor::zeros({kFc1});
  p.fc2_w = kaiming_uniform({2, kFc1}, kFc1, rng);
  p.fc2_b = Tensor::zeros({2});
  return p;
}

std::vector<std::pair<std::string, Tensor*>> trainable_tensors(NetworkParams& p) {
  return {
      {"conv1.weight", &p.conv1.w},       {"conv1.bias", &p.conv1.b},
      {"conv1.bn.gamma", &p.conv1.bn_gamma}, {"conv1.bn.beta", &p.conv1.bn_beta},
      {"conv2.weight", &p.conv2.w},       {"conv2.bias", &p.conv2.b},
      {"conv2.bn.gamma", &p.conv2.bn_gamma}, {"conv2.bn.beta", &p.conv2.bn_beta},
      {"attn.weight", &p.attn_w},         {"attn.bias", &p.attn_b},
      {"conv3.weight", &p.conv3.w},       {"conv3.bias", &p.conv3.b},
      {"conv3.bn.gamma", &p.conv3.bn_gamma}, {"conv3.bn.beta", &p.conv3.bn_beta},
      {"fc1.weight", &p.fc1_w},           {"fc1.bias", &p.fc1_b},
      {"fc2.weight", &p.fc2_w},           {"fc2.bias", &p.fc2_b},
  };
}

std::vector<std::pair<std::string, Tensor*>> all_tensors(NetworkParams& p) {
  auto v = trainable_tensors(p);
  v.insert(v.end(), {
      {"conv1.bn.running_mean", &p.conv1.bn_run_mean}, {"conv1.bn.running_var", &p.conv1.bn_run_var},
      {"conv2.bn.running_mean", &p.conv2.bn_run_mean}, {"conv2.bn.running_var", &p.conv2.bn_run_var},
      {"conv3.bn.running_mean", &p.conv3.bn_run_mean}, {"conv3.bn.running_var", &p.conv3.bn_run_var},
  });
  return v;
}

Gradients Gradients::zeros_like(const NetworkParams& p) {
  Gradients g;
  const auto zero_block = [](const ConvBlockParams& src) {
    ConvBlockParams b;
    b.w = Tensor::zeros(src.w.shape);
    b.b = Tensor::zeros(src.b.shape);
    b.bn_gamma = Tensor::zeros(src.bn_gamma.shape);
    b.bn_beta = Tensor::zeros(src.bn_beta.shape);
    return b;
  };
  g.conv1 = zero_block(p.conv1);
  g.conv2 = zero_block(p.conv2);
  g.conv3 = zero_block(p.conv3);
  g.attn_w = Tensor::zeros(p.attn_w.shape);
  g.attn_b = Tensor::zeros(p.attn_b.shape);
  g.fc1_w = Tensor::zeros(p.fc1_w.shape);
  g.fc1_b = Tensor::zeros(p.fc1_b.shape);
  g.fc2_w = Tensor::zeros(p.fc2_w.shape);
  g.fc2_b = Tensor::zeros(p.fc2_b.shape);
  return g;
}

std::vector<std::pair<std::string, Tensor*>> trainable_tensors(Gradients& g) {
  return {
      {"conv1.weight", &g.conv1.w},       {"conv1.bias", &g.conv1.b},
      {"conv1.bn.gamma", &g.conv1.bn_gamma}, {"conv1.bn.beta", &g.conv1.bn_beta},
      {"conv2.weight", &g.conv2.w},       {"conv2.bias", &g.conv2.b},
      {"conv2.bn.gamma", &g.conv2.bn_gamma}, {"conv2.bn.beta", &g.conv2.bn_beta},
      {"attn.weight", &g.attn_w},         {"attn.bias", &g.attn_b},
      {"conv3.weight", &g.conv3.w},       {"conv3.bias", &g.conv3.b},
      {"conv3.bn.gamma", &g.conv3.bn_gamma}, {"conv3.bn.beta", &g.conv3.bn_beta},
      {"fc1.weight", &g.fc1_w},           {"fc1.bias", &g.fc1_b},
      {"fc2.weight", &g.fc2_w},           {"fc2.bias", &g.fc2_b},
  };
}

namespace {

// Shared by the train and eval paths; `block_bn` applies the mode's batch
// norm for one conv block.
template <typename BnFn>
void run_stack(const Tensor& x0, const NetworkParams& params, BnFn&& block_bn, ForwardCache& c) {
  const int n = x0.shape[0];
  const Dims d0{n, 1, kH0, kH0};
  const Dims d1{n, kC1, kH0, kH0};
  const Dims d1p{n, kC1, kH1, kH1};
  const Dims d2{n, kC2, kH1, kH1};
  const Dims d2p{n, kC2, kH2, kH2};
  const Dims d3{n, kC3, kH2, kH2};
  const Dims d3p{n, kC3, kH3, kH3};

  Tensor a1 = Tensor::zeros({n, kC1, kH0, kH0});
  conv2d_forward(x0, d0, params.conv1.w, params.conv1.b, 3, a1, d1);
  Tensor b1 = Tensor::zeros(a1.shape);
  block_bn(0, a1, d1, b1);
  c.relu1_out = Tensor::zeros(a1.shape);
  relu_forward(b1, c.relu1_out);
  c.p1 = Tensor::zeros({n, kC1, kH1, kH1});
  c.pool1_arg.assign(c.p1.data.size(), 0);
  maxpool2_forward(c.relu1_out, d1, c.p1, d1p, c.pool1_arg);

  Tensor a2 = Tensor::zeros({n, kC2, kH1, kH1});
  conv2d_forward(c.p1, d1p, params.conv2.w, params.conv2.b, 3, a2, d2);
  Tensor b2 = Tensor::zeros(a2.shape);
  block_bn(1, a2, d2, b2);
  c.relu2_out = Tensor::zeros(a2.shape);
  relu_forward(b2, c.relu2_out);
  c.p2 = Tensor::zeros({n, kC2, kH2, kH2});
  c.pool2_arg.assign(c.p2.data.size(), 0);
  maxpool2_forward(c.relu2_out, d2, c.p2, d2p, c.pool2_arg);

  c.attn_cat = Tensor::zeros({n, 2, kH2, kH2});
  c.attn_a = Tensor::zeros({n, 1, kH2, kH2});
  c.attn_argc.assign(static_cast<std::size_t>(n) * kH2 * kH2, 0);
  c.f3 = Tensor::zeros(c.p2.shape);
  attention_forward(c.p2, d2p, params.attn_w, params.attn_b, c.attn_cat, c.attn_a, c.attn_argc,
                    c.f3);

  Tensor a3 = Tensor::zeros({n, kC3, kH2, kH2});
  conv2d_forward(c.f3, d2p, params.conv3.w, params.conv3.b, 3, a3, d3);
  Tensor b3 = Tensor::zeros(a3.shape);
  block_bn(2, a3, d3, b3);
  c.relu3_out = Tensor::zeros(a3.shape);
  relu_forward(b3, c.relu3_out);
  c.p3 = Tensor::zeros({n, kC3, kH3, kH3});
  c.pool3_arg.assign(c.p3.data.size(), 0);
  maxpool2_forward(c.relu3_out, d3, c.p3, d3p, c.pool3_arg);

  c.flat = Tensor{{n, kC3}, c.p3.data};  //1x1 spatial, flatten is a copy
}

void run_head(const NetworkParams& params, ForwardCache& c, double dropout_rate, Rng* rng,
              bool train_mode) {
  const int n = c.flat.shape[0];
  Tensor h1 = Tensor::zeros({n, kFc1});
  fc_forward(c.flat, n, kC3, params.fc1_w, params.fc1_b, kFc1, h1);
  c.fc1_relu_out = Tensor::zeros(h1.shape);
  relu_forward(h1, c.fc1_relu_out);

  c.dropout_out = c.fc1_relu_out;
  c.dropout_mask.assign(c.fc1_relu_out.data.size(), 1);
  if (train_mode && dropout_rate > 0.0) {
    if (!rng) throw DataError("forward_train: dropout needs an RNG");
    const double keep = 1.0 - dropout_rate;
    for (std::size_t i = 0; i < c.dropout_out.data.size(); ++i) {
      if (rng->uniform() < keep) {
        c.dropout_out.data[i] /= keep;  // inverted scaling
      } else {
        c.dropout_out.data[i] = 0.0;
        c.dropout_mask[i] = 0;
      }
    }
  }

  Tensor logits = Tensor::zeros({n, 2});
  fc_forward(c.dropout_out, n, kFc1, params.fc2_w, params.fc2_b, 2, logits);
  c.probs = Tensor::zeros({n, 2});
  softmax2(logits, n, c.probs);
}

}  // namespace

ForwardCache forward_train(NetworkParams& params, const Tensor& batch, double dropout_rate,
                           Rng* rng) {
  validate_batch(batch);
  ForwardCache c;
  c.train_mode = true;
  c.dropout_rate = dropout_rate;
  c.x0 = batch;
  const int n = batch.shape[0];
  c.bn1_xhat = Tensor::zeros({n, kC1, kH0, kH0});
  c.bn1_invstd = Tensor::zeros({kC1});
  c.bn2_xhat = Tensor::zeros({n, kC2, kH1, kH1});
  c.bn2_invstd = Tensor::zeros({kC2});
  c.bn3_xhat = Tensor::zeros({n, kC3, kH2, kH2});
  c.bn3_invstd = Tensor::zeros({kC3});
  ConvBlockParams* blocks[3] = {&params.conv1, &params.conv2, &params.conv3};
  Tensor* xhats[3] = {&c.bn1_xhat, &c.bn2_xhat, &c.bn3_xhat};
  Tensor* invstds[3] = {&c.bn1_invstd, &c.bn2_invstd, &c.bn3_invstd};
  run_stack(batch, params,
            [&](int idx, const Tensor& x, const Dims& d, Tensor& y) {
              bn_forward_train(x, d, *blocks[idx], y, *xhats[idx], *invstds[idx]);
            },
            c);
  run_head(params, c, dropout_rate, rng, true);
  return c;
}

Tensor forward_eval(const NetworkParams& params, const Tensor& batch) {
  validate_batch(batch);
  ForwardCache c;
  c.train_mode = false;
  c.x0 = batch;
  const ConvBlockParams* blocks[3] = {&params.conv1, &params.conv2, &params.conv3};
  run_stack(batch, params,
            [&](int idx, const Tensor& x, const Dims& d, Tensor& y) {
              bn_forward_eval(x, d, *blocks[idx], y);
            },
            c);
  run_head(params, c, 0.0, nullptr, false);
  return c.probs;
}

Tensor spatial_attention(const Tensor& f, const Tensor& attn_w, const Tensor& attn_b) {
  if (f.shape.size() != 3 || f.shape[0] < 1) throw DataError("spatial_attention: need [C,H,W]");
  if (attn_w.shape != std::vector<int>{1, 2, 7, 7} || attn_b.shape != std::vector<int>{1}) {
    throw DataError("spatial_attention: attention conv must be [1,2,7,7] with [1] bias");
  }
  const Dims d{1, f.shape[0], f.shape[1], f.shape[2]};
  Tensor batched{{1, f.shape[0], f.shape[1], f.shape[2]}, f.data};
  Tensor cat = Tensor::zeros({1, 2, d.h, d.w});
  Tensor a = Tensor::zeros({1, 1, d.h, d.w});
  std::vector<std::int32_t> argc(static_cast<std::size_t>(d.h) * d.w, 0);
  Tensor out = Tensor::zeros(batched.shape);
  attention_forward(batched, d, attn_w, attn_b, cat, a, argc, out);
  return Tensor{f.shape, std::move(out.data)};
}

double cross_entropy(const Tensor& probabilities, const std::vector<int>& labels) {
  const int n = probabilities.shape[0];
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw DataError("cross_entropy: label count mismatch");
  }
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = std::max(probabilities.data[2 * i + labels[i]], 1e-12);
    sum -= std::log(p);
  }
  return sum / n;
}

Gradients backward(const NetworkParams& params, const ForwardCache& c,
                   const std::vector<int>& labels) {
  if (!c.train_mode) throw DataError("backward: cache must come from a train-mode forward");
  const int n = c.probs.shape[0];
  if (static_cast<std::size_t>(n) != labels.size()) throw DataError("backward: label count mismatch");
  Gradients g = Gradients::zeros_like(params);

  // Softmax + cross-entropy composite: dL/dlogits = (p - y) / N.
  Tensor dlogits = Tensor::zeros({n, 2});
  for (int i = 0; i < n; ++i) {
    dlogits.data[2 * i] = (c.probs.data[2 * i] - (labels[i] == 0 ? 1.0 : 0.0)) / n;
    dlogits.data[2 * i + 1] = (c.probs.data[2 * i + 1] - (labels[i] == 1 ? 1.0 : 0.0)) / n;
  }

  Tensor d_dropout = Tensor::zeros({n, kFc1});
  fc_backward(dlogits, n, 2, c.dropout_out, kFc1, params.fc2_w, d_dropout, g.fc2_w, g.fc2_b);

  Tensor d_fc1relu = Tensor::zeros({n, kFc1});
  {
    const double keep = 1.0 - c.dropout_rate;
    for (std::size_t i = 0; i < d_dropout.data.size(); ++i) {
      d_fc1relu.data[i] = c.dropout_mask[i] ? (c.dropout_rate > 0.0 ? d_dropout.data[i] / keep
                                                                    : d_dropout.data[i])
                                            : 0.0;
    }
  }
  Tensor d_h1 = Tensor::zeros({n, kFc1});
  relu_backward(d_fc1relu, c.fc1_relu_out, d_h1);

  Tensor d_flat = Tensor::zeros({n, kC3});
  fc_backward(d_h1, n, kFc1, c.flat, kC3, params.fc1_w, d_flat, g.fc1_w, g.fc1_b);

  const Dims d3p{n, kC3, kH3, kH3};
  const Dims d3{n, kC3, kH2, kH2};
  Tensor d_relu3 = Tensor::zeros({n, kC3, kH2, kH2});
  maxpool2_backward(Tensor{{n, kC3, kH3, kH3}, d_flat.data}, d3p, c.pool3_arg, d_relu3, d3);
  Tensor d_b3 = Tensor::zeros(d_relu3.shape);
  relu_backward(d_relu3, c.relu3_out, d_b3);
  Tensor d_a3 = Tensor::zeros(d_relu3.shape);
  bn_backward(d_b3, d3, c.bn3_xhat, c.bn3_invstd, params.conv3.bn_gamma, d_a3, g.conv3.bn_gamma,
              g.conv3.bn_beta);
  const Dims d2p{n, kC2, kH2, kH2};
  Tensor d_f3 = Tensor::zeros(c.f3.shape);
  conv2d_backward(d_a3, d3, c.f3, d2p, params.conv3.w, 3, d_f3, g.conv3.w, g.conv3.b);

  Tensor d_p2 = Tensor::zeros(c.p2.shape);
  attention_backward(d_f3, d2p, c.p2, c.attn_cat, c.attn_a, c.attn_argc, params.attn_w, d_p2,
                     g.attn_w, g.attn_b);

  const Dims d2{n, kC2, kH1, kH1};
  Tensor d_relu2 = Tensor::zeros({n, kC2, kH1, kH1});
  maxpool2_backward(d_p2, d2p, c.pool2_arg, d_relu2, d2);
  Tensor d_b2 = Tensor::zeros(d_relu2.shape);
  relu_backward(d_relu2, c.relu2_out, d_b2);
  Tensor d_a2 = Tensor::zeros(d_relu2.shape);
  bn_backward(d_b2, d2, c.bn2_xhat, c.bn2_invstd, params.conv2.bn_gamma, d_a2, g.conv2.bn_gamma,
              g.conv2.bn_beta);
  const Dims d1p{n, kC1, kH1, kH1};
  Tensor d_p1 = Tensor::zeros(c.p1.shape);
  conv2d_backward(d_a2, d2, c.p1, d1p, params.conv2.w, 3, d_p1, g.conv2.w, g.conv2.b);

  const Dims d1{n, kC1, kH0, kH0};
  Tensor d_relu1 = Tensor::zeros({n, kC1, kH0, kH0});
  maxpool2_backward(d_p1, d1p, c.pool1_arg, d_relu1, d1);
  Tensor d_b1 = Tensor::zeros(d_relu1.shape);
  relu_backward(d_relu1, c.relu1_out, d_b1);
  Tensor d_a1 = Tensor::zeros(d_relu1.shape);
  bn_backward(d_b1, d1, c.bn1_xhat, c.bn1_invstd, params.conv1.bn_gamma, d_a1, g.conv1.bn_gamma,
              g.conv1.bn_beta);
  const Dims d0{n, 1, kH0, kH0};
  Tensor d_x0 = Tensor::zeros(c.x0.shape);
  conv2d_backward(d_a1, d1, c.x0, d0, params.conv1.w, 3, d_x0, g.conv1.w, g.conv1.b);

  return g;
}

}  // namespace mcd
