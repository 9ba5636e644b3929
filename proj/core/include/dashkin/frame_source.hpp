#pragma once

// Frame providers backed by files: video containers (when built with OpenCV)
// and directories of numbered images.

#include "dashkin/datastore.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace dashkin::data {

/// True when video containers and compressed images can be read and written.
bool have_video_support();

/// Opens `path` with the sidecar timing from the manifest. A directory is read
/// as an image sequence in lexicographic file order; anything else as a video.
/// Throws IoError when the path cannot be opened.
std::unique_ptr<FrameSource> open_frame_source(const std::filesystem::path& path,
                                               double start_time, double fps);

/// Binary PPM (P6), 8-bit.
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

/// Motion-JPEG AVI. Throws IoError without video support.
void write_video(const std::filesystem::path& path, const std::vector<RgbImage>& frames,
                 double fps);

}  // namespace dashkin::data
