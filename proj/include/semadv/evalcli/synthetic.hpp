#pragma once

// Procedural 10-class image set used as the desk-scale stand-in for the
// natural-image slice. Each class pairs a texture pattern with a palette, and
// every image jitters phase, frequency, colours and noise.

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "semadv/evalcli/dataset.hpp"

namespace semadv::evalcli::synthetic {

inline constexpr std::size_t kClasses = 10;

inline const std::array<std::string, kClasses>& class_names() {
  static const std::array<std::string, kClasses> names{
      "hstripes", "vstripes", "diagonal", "checker", "rings", "blobs", "sunset", "dots", "grain", "frame"};
  return names;
}

namespace detail {
using Rgb = std::array<double, 3>;

inline const std::array<std::array<Rgb, 2>, kClasses>& palettes() {
  static const std::array<std::array<Rgb, 2>, kClasses> p{{
      {{{0.85, 0.20, 0.15}, {0.95, 0.85, 0.70}}},  // red on cream
      {{{0.15, 0.35, 0.80}, {0.85, 0.90, 0.95}}},  // blue on pale
      {{{0.20, 0.60, 0.25}, {0.90, 0.85, 0.30}}},  // green on yellow
      {{{0.10, 0.10, 0.10}, {0.90, 0.90, 0.90}}},  // black and white
      {{{0.60, 0.20, 0.60}, {0.95, 0.75, 0.85}}},  // purple on pink
      {{{0.95, 0.55, 0.10}, {0.25, 0.20, 0.35}}},  // orange on dusk
      {{{0.95, 0.45, 0.20}, {0.30, 0.30, 0.70}}},  // warm over cool
      {{{0.95, 0.95, 0.20}, {0.15, 0.45, 0.45}}},  // yellow on teal
      {{{0.55, 0.40, 0.25}, {0.75, 0.65, 0.50}}},  // browns
      {{{0.10, 0.55, 0.75}, {0.95, 0.95, 0.95}}},  // cyan frame on white
  }};
  return p;
}
}  // namespace detail

/// One image of class `label` (0..9), deterministic in `rng`.
inline RgbImage make_image(std::size_t label, std::size_t size, std::mt19937_64& rng) {
  if (label >= kClasses) throw Error("synthetic: label " + std::to_string(label) + " out of range");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  auto pal = detail::palettes()[label];
  for (auto& c : pal)
    for (auto& v : c) v = std::clamp(v + (u(rng) - 0.5) * 0.16, 0.0, 1.0);
  const double n = double(size), pi = std::numbers::pi;
  const double phase = u(rng) * 2.0 * pi, freq = 3.0 + u(rng) * 2.0;
  const double cx = n * (0.35 + 0.3 * u(rng)), cy = n * (0.35 + 0.3 * u(rng));
  std::vector<std::array<double, 3>> bumps;
  for (int b = 0; b < 5; ++b) bumps.push_back({u(rng) * n, u(rng) * n, n * (0.08 + 0.08 * u(rng))});

  RgbImage img(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double fx = double(x) / n, fy = double(y) / n;
      double t = 0.0;  // blend weight of the foreground colour
      switch (label) {
        case 0: t = 0.5 + 0.5 * std::sin(2 * pi * freq * fy + phase); break;
        case 1: t = 0.5 + 0.5 * std::sin(2 * pi * freq * fx + phase); break;
        case 2: t = 0.5 + 0.5 * std::sin(2 * pi * freq * (fx + fy) / std::numbers::sqrt2 + phase); break;
        case 3: {
          const int k = int(std::floor(fx * freq + phase)) + int(std::floor(fy * freq + phase));
          t = (k % 2 == 0) ? 1.0 : 0.0;
          break;
        }
        case 4: t = 0.5 + 0.5 * std::sin(2 * pi * freq * std::hypot(double(x) - cx, double(y) - cy) / n + phase); break;
        case 5:
          for (const auto& [bx, by, r] : bumps)
            t = std::max(t, std::exp(-((double(x) - bx) * (double(x) - bx) + (double(y) - by) * (double(y) - by)) / (2 * r * r)));
          break;
        case 6: t = std::clamp(1.2 - 1.4 * fy + 0.1 * std::sin(2 * pi * fx + phase), 0.0, 1.0); break;
        case 7: {
          const double gx = std::fmod(fx * freq * 1.5 + phase, 1.0) - 0.5, gy = std::fmod(fy * freq * 1.5 + phase, 1.0) - 0.5;
          t = std::hypot(gx, gy) < 0.25 ? 1.0 : 0.0;
          break;
        }
        case 8: t = u(rng); break;
        case 9: {
          const double d = std::min({fx, fy, 1.0 - fx, 1.0 - fy});
          t = d < 0.18 ? 1.0 : 0.0;
          break;
        }
      }
      for (std::size_t c = 0; c < 3; ++c)
        img.at(y, x, c) = std::clamp(t * pal[0][c] + (1.0 - t) * pal[1][c] + noise(rng), 0.0, 1.0);
    }
  return io::quantize8(img);
}

/// `per_class` images of every class as PNGs plus index.txt and classes.txt.
inline Dataset write_dataset(const std::filesystem::path& dir, std::size_t per_class, std::size_t size,
                             std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  std::vector<Dataset::Entry> entries;
  std::ofstream index(dir / "index.txt");
  std::ofstream names(dir / "classes.txt");
  for (std::size_t c = 0; c < kClasses; ++c) {
    names << c << " " << class_names()[c] << "\n";
    std::mt19937_64 rng(seed * 7919ULL + c);
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::string file = class_names()[c] + "_" + std::to_string(i) + ".png";
      io::save_png(dir / file, make_image(c, size, rng));
      index << file << " " << c << "\n";
      entries.push_back({file, c});
    }
  }
  if (!index) throw Error("synthetic: cannot write " + (dir / "index.txt").string());
  return Dataset(dir, std::move(entries));
}

/// In-memory variant for training and tests.
inline std::vector<LabelledImage> make_images(std::size_t per_class, std::size_t size, std::uint64_t seed) {
  std::vector<LabelledImage> out;
  for (std::size_t c = 0; c < kClasses; ++c) {
    std::mt19937_64 rng(seed * 7919ULL + c);
    for (std::size_t i = 0; i < per_class; ++i)
      out.push_back({class_names()[c] + "_" + std::to_string(i) + ".png", make_image(c, size, rng), c});
  }
  return out;
}

}  // namespace semadv::evalcli::synthetic
