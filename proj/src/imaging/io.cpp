#include "filmpipe/imaging/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

namespace filmpipe::imaging {

namespace {

std::string lower_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

bool is_image_file(const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageTensor read_image(const std::filesystem::path& path) {
  cv::Mat raw;
  try {
    raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception& e) {
    throw IoError("cannot decode " + path.string() + ": " + e.what());
  }
  if (raw.empty()) {
    throw IoError("cannot read image " + path.string());
  }
  if (raw.depth() != CV_16U && raw.depth() != CV_8U) {
    throw IoError("unsupported pixel depth in " + path.string());
  }
  cv::Mat rgb;
  switch (raw.channels()) {
    case 1:
      cv::cvtColor(raw, rgb, cv::COLOR_GRAY2RGB);
      break;
    case 3:
      cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(raw, rgb, cv::COLOR_BGRA2RGB);
      break;
    default:
      throw IoError("unsupported channel count in " + path.string());
  }
  ImageTensor out(3, rgb.rows, rgb.cols);
  auto unpack = [&]<typename P>(float denom) {
    for (int y = 0; y < rgb.rows; ++y) {
      const auto* row = rgb.ptr<cv::Vec<P, 3>>(y);
      for (int x = 0; x < rgb.cols; ++x) {
        for (int c = 0; c < 3; ++c) {
          out(c, y, x) = static_cast<float>(row[x][c]) / denom;
        }
      }
    }
  };
  if (rgb.depth() == CV_16U) {
    unpack.operator()<std::uint16_t>(65535.0f);
  } else {
    unpack.operator()<std::uint8_t>(255.0f);
  }
  return out;
}

void write_image(const std::filesystem::path& path, const ImageTensor& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidInputError("write_image: expected 1 or 3 channels, got " +
                            std::to_string(img.channels()));
  }
  if (!is_image_file(path)) {
    throw IoError("write_image: unsupported extension " + path.string());
  }
  auto to_u8 = [](float v) {
    const float c = std::isfinite(v) ? std::clamp(v, 0.0f, 1.0f) : 0.0f;
    return static_cast<std::uint8_t>(std::lround(c * 255.0f));
  };
  cv::Mat mat(img.height(), img.width(), img.channels() == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      if (img.channels() == 3) {
        // OpenCV stores BGR.
        row[3 * x + 0] = to_u8(img(2, y, x));
        row[3 * x + 1] = to_u8(img(1, y, x));
        row[3 * x + 2] = to_u8(img(0, y, x));
      } else {
        row[x] = to_u8(img(0, y, x));
      }
    }
  }
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::vector<int> params;
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  } else {
    params = {cv::IMWRITE_JPEG_QUALITY, 95};
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat, params);
  } catch (const cv::Exception& e) {
    throw IoError("cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) {
    throw IoError("cannot write " + path.string());
  }
}

std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir,
                                                const std::string& stem) {
  for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
    auto p = dir / (stem + ext);
    if (std::filesystem::is_regular_file(p)) {
      return p;
    }
  }
  return std::nullopt;
}

}  // namespace filmpipe::imaging
