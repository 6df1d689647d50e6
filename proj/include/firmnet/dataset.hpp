#pragma once

#include <algorithm>
#include <vector>

#include "firmnet/rng.hpp"
#include "firmnet/tensor.hpp"

namespace firmnet {

// Procedural grayscale corpus: random piecewise-constant rectangles plus
// smooth Gaussian bumps on a mid-gray background, values clipped to [0,1].
// Seed-reproducible; optional horizontal/vertical flip augmentation.
inline Tensor make_cartoon(std::size_t height, std::size_t width, Rng& rng) {
  Tensor img = Tensor::full({1, height, width}, 0.25 + 0.5 * rng.uniform());
  const std::size_t rects = 2 + rng.below(4);
  for (std::size_t r = 0; r < rects; ++r) {
    const std::size_t y0 = rng.below(height), x0 = rng.below(width);
    const std::size_t rh = 2 + rng.below(height / 2), rw = 2 + rng.below(width / 2);
    const double level = rng.uniform();
    for (std::size_t y = y0; y < std::min(height, y0 + rh); ++y)
      for (std::size_t x = x0; x < std::min(width, x0 + rw); ++x) img.at(0, y, x) = level;
  }
  const std::size_t bumps = 1 + rng.below(3);
  for (std::size_t b = 0; b < bumps; ++b) {
    const double cy = rng.uniform(0.0, double(height));
    const double cx = rng.uniform(0.0, double(width));
    const double amp = rng.uniform(-0.5, 0.5);
    const double rad = rng.uniform(2.0, double(std::min(height, width)) / 3.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = double(y) - cy, dx = double(x) - cx;
        img.at(0, y, x) += amp * std::exp(-(dx * dx + dy * dy) / (2.0 * rad * rad));
      }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline std::vector<Tensor> make_cartoon_corpus(std::size_t count, std::size_t height,
                                               std::size_t width, std::uint64_t seed,
                                               bool with_flips = true) {
  std::vector<Tensor> corpus;
  corpus.reserve(with_flips ? 3 * count : count);
  Rng rng = Rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    Rng item = rng.split(i);
    Tensor img = make_cartoon(height, width, item);
    if (with_flips) {
      corpus.push_back(flip_horizontal(img));
      corpus.push_back(flip_vertical(img));
    }
    corpus.push_back(std::move(img));
  }
  return corpus;
}

}  // namespace firmnet
