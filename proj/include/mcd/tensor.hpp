#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace mcd {

// Dense row-major real array. Small enough nets that double throughout is the
// right call; checkpoints store f32.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static Tensor zeros(std::vector<int> shape) {
    std::int64_t n = 1;
    for (int e : shape) n *= e;
    return Tensor{std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0)};
  }
  static Tensor full(std::vector<int> shape, double value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.data) v = value;
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace mcd
