#pragma once

#include <cstddef>
#include <vector>

namespace nestseg {

// Real-valued 2-D map, row-major. Used both for grayscale images (values in
// [0,1]; PGM I/O enforces that range) and for activation maps (values in
// (0, m)).
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double at(int y, int x) const {
    return values[static_cast<std::size_t>(y) * width + x];
  }
  double& at(int y, int x) {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

}  // namespace nestseg
