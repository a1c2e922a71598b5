#pragma once

// Synthetic datasets for tests and the acceptance suite.

#include <cmath>
#include <cstdint>
#include <vector>

#include "omcl/dataset.hpp"
#include "omcl/rng.hpp"

namespace omcl::synth {

// 2-D Gaussian mixture rendered as 1x1x2 uint8 "images": class k sits on a
// circle of the given radius around mid-gray, cluster spread sigma.
inline ImageDataset gaussian_mixture(int classes, int per_class, uint64_t seed,
                                     const char* tag, double radius = 90.0,
                                     double sigma = 14.0) {
  ImageDataset ds;
  ds.h = 1;
  ds.w = 1;
  ds.ch = 2;
  ds.tag = tag;
  ds.num_classes = classes;
  Rng rng(seed, tag);
  const double pi = 3.14159265358979323846;
  for (int c = 0; c < classes; ++c) {
    const double cx = 128.0 + radius * std::cos(2.0 * pi * c / classes);
    const double cy = 128.0 + radius * std::sin(2.0 * pi * c / classes);
    for (int i = 0; i < per_class; ++i) {
      const double x = cx + sigma * rng.normal();
      const double y = cy + sigma * rng.normal();
      auto clamp_u8 = [](double v) {
        return static_cast<uint8_t>(std::min(255.0, std::max(0.0, std::round(v))));
      };
      ds.pixels.push_back(clamp_u8(x));
      ds.pixels.push_back(clamp_u8(y));
      ds.labels.push_back(c);
      ++ds.count;
    }
  }
  return ds;
}

// Cell-like 28x28 RGB imagery: per class a characteristic ellipse (size,
// eccentricity, orientation, color) over a noisy background, with jitter in
// position, size, and intensity so the task needs actual learning.
inline ImageDataset cell_images(int classes, int per_class, uint64_t seed,
                                const char* tag) {
  const int h = 28, w = 28, ch = 3;
  ImageDataset ds;
  ds.h = h;
  ds.w = w;
  ds.ch = ch;
  ds.tag = tag;
  ds.num_classes = classes;
  Rng rng(seed, tag);
  const double pi = 3.14159265358979323846;
  for (int c = 0; c < classes; ++c) {
    const double base_a = 4.0 + 1.1 * (c % 4);         // semi-axes
    const double base_b = 3.0 + 0.9 * ((c + 2) % 4);
    const double angle = pi * c / classes;
    const double col[3] = {120.0 + 15.0 * ((c * 5) % 8), 90.0 + 13.0 * ((c * 3) % 8),
                           100.0 + 11.0 * ((c * 7) % 8)};
    for (int i = 0; i < per_class; ++i) {
      const double jx = 14.0 + rng.uniform(-3.0, 3.0);
      const double jy = 14.0 + rng.uniform(-3.0, 3.0);
      const double a = base_a * rng.uniform(0.85, 1.15);
      const double b = base_b * rng.uniform(0.85, 1.15);
      const double bright = rng.uniform(0.85, 1.15);
      const double ca = std::cos(angle), sa = std::sin(angle);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double dx = x - jx, dy = y - jy;
          const double u = (ca * dx + sa * dy) / a;
          const double v = (-sa * dx + ca * dy) / b;
          const double r2 = u * u + v * v;
          const double body = r2 < 1.0 ? 1.0 - 0.5 * r2 : 0.0;
          for (int k = 0; k < ch; ++k) {
            double val = 38.0 + 8.0 * rng.normal();  // background noise
            val += body * col[k] * bright;
            ds.pixels.push_back(static_cast<uint8_t>(
                std::min(255.0, std::max(0.0, std::round(val)))));
          }
        }
      ds.labels.push_back(c);
      ++ds.count;
    }
  }
  return ds;
}

}  // namespace omcl::synth
