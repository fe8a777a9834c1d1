#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semo/sprite.hpp"
#include "semo/tensor.hpp"

namespace semo {

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_png(const std::filesystem::path& path, const Frame& frame);

// Grayscale PNG from a [h, w] matrix normalized to its own min/max.
void write_png_gray(const std::filesystem::path& path, const Tensor<float>& map);

// Animated GIF (216-color cube), delay in hundredths of a second.
void write_gif(const std::filesystem::path& path, const std::vector<Frame>& frames,
               int delay_cs = 12);

void write_text_file(const std::filesystem::path& path, const std::string& text);

// Single-tensor float32 blob with the checkpoint record layout.
void write_motion_bin(const std::filesystem::path& path, const Tensor<float>& t);

// Clamp a decoded frame into [0, 1].
Frame clamp01(Frame f);

}  // namespace semo
