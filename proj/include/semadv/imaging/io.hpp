#pragma once

// PNG/JPEG I/O through OpenCV's codecs. Images are written losslessly as 8-bit
// PNG; any adversarial output must go through save_png.

#include <filesystem>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "semadv/imaging/image.hpp"

namespace semadv::io {

inline cv::Mat to_bgr8(const RgbImage& img) {
  const int H = int(img.height()), W = int(img.width());
  cv::Mat m(H, W, CV_8UC3);
  for (int y = 0; y < H; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = std::lround(img.at(std::size_t(y), std::size_t(x), std::size_t(c)) * 255.0);
        row[x][2 - c] = cv::saturate_cast<uchar>(v);
      }
  }
  return m;
}

inline RgbImage from_bgr8(const cv::Mat& m) {
  if (m.empty() || m.type() != CV_8UC3) throw Error("from_bgr8: expected a non-empty 8-bit BGR image");
  RgbImage img(std::size_t(m.rows), std::size_t(m.cols));
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(std::size_t(y), std::size_t(x), std::size_t(c)) = row[x][2 - c] / 255.0;
  }
  return img;
}

/// Rounds every value to the nearest 8-bit level, as a PNG round trip would.
inline RgbImage quantize8(const RgbImage& img) {
  RgbImage out = img;
  for (double& v : out.tensor().data()) v = std::lround(v * 255.0) / 255.0;
  return out;
}

inline RgbImage load_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw Error("load_image: cannot read " + path.string());
  return from_bgr8(m);
}

inline void save_png(const std::filesystem::path& path, const RgbImage& img) {
  if (path.extension() != ".png") throw Error("save_png: refusing lossy extension for " + path.string());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), to_bgr8(img), {cv::IMWRITE_PNG_COMPRESSION, 6}))
    throw Error("save_png: cannot write " + path.string());
}

/// Baseline JPEG encode (4:2:0, standard tables scaled by quality) and decode.
inline RgbImage jpeg_roundtrip(const RgbImage& img, int quality) {
  if (quality < 1 || quality > 100) throw Error("jpeg quality must be in [1,100]");
  std::vector<uchar> buf;
  const std::vector<int> params{cv::IMWRITE_JPEG_QUALITY, quality, cv::IMWRITE_JPEG_OPTIMIZE, 0,
                                cv::IMWRITE_JPEG_PROGRESSIVE, 0};
  if (!cv::imencode(".jpg", to_bgr8(img), buf, params)) throw Error("jpeg encode failed");
  return from_bgr8(cv::imdecode(buf, cv::IMREAD_COLOR));
}

/// Area/bilinear resize used when adapting dataset images to a model's input.
inline RgbImage resize(const RgbImage& img, std::size_t height, std::size_t width) {
  if (img.height() == height && img.width() == width) return img;
  cv::Mat src(int(img.height()), int(img.width()), CV_64FC3);
  for (int y = 0; y < src.rows; ++y)
    for (int x = 0; x < src.cols; ++x)
      for (int c = 0; c < 3; ++c)
        src.at<cv::Vec3d>(y, x)[c] = img.at(std::size_t(y), std::size_t(x), std::size_t(c));
  cv::Mat dst;
  const bool shrink = height < img.height();
  cv::resize(src, dst, cv::Size(int(width), int(height)), 0, 0,
             shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  RgbImage out(height, width);
  for (int y = 0; y < dst.rows; ++y)
    for (int x = 0; x < dst.cols; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(std::size_t(y), std::size_t(x), std::size_t(c)) =
            std::min(1.0, std::max(0.0, dst.at<cv::Vec3d>(y, x)[c]));
  return out;
}

}  // namespace semadv::io
