#include "dashkin/frame_source.hpp"

#include "dashkin/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <string>

#ifdef DASHKIN_WITH_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>
#endif

namespace dashkin::data {

namespace {

#ifdef DASHKIN_WITH_OPENCV
RgbImage from_bgr(const cv::Mat& bgr) {
  RgbImage img;
  img.height = bgr.rows;
  img.width = bgr.cols;
  img.pixels.resize(static_cast<std::size_t>(bgr.rows) * bgr.cols * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      auto* px = &img.pixels[(static_cast<std::size_t>(y) * bgr.cols + x) * 3];
      px[0] = row[x * 3 + 2];
      px[1] = row[x * 3 + 1];
      px[2] = row[x * 3 + 0];
    }
  }
  return img;
}

cv::Mat to_bgr(const RgbImage& img) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      const auto* px = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
      row[x * 3 + 0] = px[2];
      row[x * 3 + 1] = px[1];
      row[x * 3 + 2] = px[0];
    }
  }
  return bgr;
}

// Sequential decoder; seeking backwards reopens the file so frame order never
// depends on container seek accuracy.
class VideoFileSource : public FrameSource {
 public:
  VideoFileSource(std::filesystem::path path, double start_time, double fps)
      : path_(std::move(path)), start_(start_time), fps_(fps) {
    reopen();
    std::size_t n = 0;
    while (capture_.grab()) {
      ++n;
    }
    count_ = n;
    reopen();
  }
  [[nodiscard]] double start_time() const override { return start_; }
  [[nodiscard]] double fps() const override { return fps_; }
  [[nodiscard]] std::size_t frame_count() const override { return count_; }

  RgbImage frame(std::size_t index) override {
    if (index >= count_) {
      throw IoError("frame " + std::to_string(index) + " is past the end of " + path_.string());
    }
    if (index < next_) {
      reopen();
    }
    while (next_ < index) {
      capture_.grab();
      ++next_;
    }
    cv::Mat bgr;
    if (!capture_.read(bgr) || bgr.empty()) {
      throw IoError("cannot decode frame " + std::to_string(index) + " of " + path_.string());
    }
    ++next_;
    return from_bgr(bgr);
  }

 private:
  void reopen() {
    capture_.release();
    if (!capture_.open(path_.string())) {
      throw IoError("cannot open video " + path_.string());
    }
    next_ = 0;
  }

  std::filesystem::path path_;
  double start_;
  double fps_;
  std::size_t count_ = 0;
  std::size_t next_ = 0;
  cv::VideoCapture capture_;
};
#endif

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".ppm") {
    return true;
  }
  return have_video_support() && (ext == ".png" || ext == ".jpg" || ext == ".jpeg");
}

RgbImage read_image(const std::filesystem::path& path) {
  if (path.extension() == ".ppm") {
    return read_ppm(path);
  }
#ifdef DASHKIN_WITH_OPENCV
  const cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IoError("cannot decode image " + path.string());
  }
  return from_bgr(bgr);
#else
  throw IoError("cannot decode " + path.string() + ": built without OpenCV");
#endif
}

class ImageDirectorySource : public FrameSource {
 public:
  ImageDirectorySource(const std::filesystem::path& dir, double start_time, double fps)
      : start_(start_time), fps_(fps) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) {
        files_.push_back(entry.path());
      }
    }
    std::sort(files_.begin(), files_.end());
  }
  [[nodiscard]] double start_time() const override { return start_; }
  [[nodiscard]] double fps() const override { return fps_; }
  [[nodiscard]] std::size_t frame_count() const override { return files_.size(); }
  RgbImage frame(std::size_t index) override { return read_image(files_.at(index)); }

 private:
  double start_;
  double fps_;
  std::vector<std::filesystem::path> files_;
};

// Skips whitespace and '#' comments between PPM header tokens.
int read_header_int(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

}  // namespace

bool have_video_support() {
#ifdef DASHKIN_WITH_OPENCV
  return true;
#else
  return false;
#endif
}

std::unique_ptr<FrameSource> open_frame_source(const std::filesystem::path& path,
                                               double start_time, double fps) {
  if (!(fps > 0.0)) {
    throw ConfigError("video fps must be positive for " + path.string());
  }
  if (std::filesystem::is_directory(path)) {
    return std::make_unique<ImageDirectorySource>(path, start_time, fps);
  }
  if (!std::filesystem::exists(path)) {
    throw IoError("video not found: " + path.string());
  }
#ifdef DASHKIN_WITH_OPENCV
  return std::make_unique<VideoFileSource>(path, start_time, fps);
#else
  throw IoError("cannot read video " + path.string() + ": built without OpenCV");
#endif
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P6") {
    throw FormatError(path.string() + " is not a binary PPM");
  }
  RgbImage img;
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  const int maxval = read_header_int(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255) {
    throw FormatError(path.string() + " has an unsupported PPM header");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw FormatError(path.string() + " is truncated");
  }
  return img;
}

void write_ppm(const RgbImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

void write_video(const std::filesystem::path& path, const std::vector<RgbImage>& frames,
                 double fps) {
#ifdef DASHKIN_WITH_OPENCV
  if (frames.empty()) {
    throw IoError("refusing to write an empty video " + path.string());
  }
  cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), fps,
                         cv::Size(frames.front().width, frames.front().height));
  if (!writer.isOpened()) {
    throw IoError("cannot open video writer for " + path.string());
  }
  for (const auto& f : frames) {
    writer.write(to_bgr(f));
  }
#else
  (void)frames;
  (void)fps;
  throw IoError("cannot write video " + path.string() + ": built without OpenCV");
#endif
}

}  // namespace dashkin::data
