#pragma once

#include <filesystem>
#include <optional>

#include "filmpipe/core/tensor.hpp"

namespace filmpipe::imaging {

/// Reads an 8-bit (or 16-bit) PNG/JPEG as RGB in [0,1]. Alpha is dropped and
/// grayscale is expanded to three channels. Throws IoError on failure.
ImageTensor read_image(const std::filesystem::path& path);

/// Writes a 1- or 3-channel image; values are clipped to [0,1] and rounded
/// to 8 bits. The encoder is chosen from the extension (.png, .jpg, .jpeg).
void write_image(const std::filesystem::path& path, const ImageTensor& img);

/// Finds <dir>/<stem>.{png,jpg,jpeg} (first match in that order).
std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir,
                                                const std::string& stem);

bool is_image_file(const std::filesystem::path& path);

}  // namespace filmpipe::imaging
