#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "treegraph/error.hpp"

namespace tg {

// Row-major N x 3 coordinate matrix.
struct PointMatrix {
  std::vector<float> data;  // x0 y0 z0 x1 y1 z1 ...

  PointMatrix() = default;
  explicit PointMatrix(std::size_t n) : data(n * 3, 0.f) {}

  std::size_t count() const { return data.size() / 3; }
  float* row(std::size_t i) { return data.data() + i * 3; }
  const float* row(std::size_t i) const { return data.data() + i * 3; }
  float& at(std::size_t i, int c) { return data[i * 3 + static_cast<std::size_t>(c)]; }
  float at(std::size_t i, int c) const { return data[i * 3 + static_cast<std::size_t>(c)]; }

  bool finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

// One tree / object: coordinates plus a class label.
struct PointCloudSample {
  PointMatrix points;
  int label = -1;
  std::string source_path;
};

inline double sq_dist(const float* a, const float* b) {
  const double dx = static_cast<double>(a[0]) - b[0];
  const double dy = static_cast<double>(a[1]) - b[1];
  const double dz = static_cast<double>(a[2]) - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace tg
