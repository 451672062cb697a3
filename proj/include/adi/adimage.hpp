#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "adi/matrix.hpp"

namespace adi::image {

enum class ImageKind { action, start, end, combined };

const char* to_string(ImageKind kind);

/// A column range of an AD image whose per-row slice is one distribution.
struct Block {
  std::size_t offset = 0;
  std::size_t width = 0;
  bool operator==(const Block&) const = default;
};

/// N x W matrix whose rows are concatenations of discrete distributions.
///
/// Column 0 of the action block is the background class. Start/end images
/// are two-column: [boundary, not-boundary].
struct AdImage {
  num::Matrix data;
  std::vector<Block> blocks;
  ImageKind kind = ImageKind::action;

  std::size_t rows() const { return data.rows(); }
  std::size_t width() const { return data.cols(); }
  bool operator==(const AdImage&) const = default;
};

/// Block layout of an image kind. `classes` counts the background column.
std::vector<Block> layout(ImageKind kind, std::size_t classes);
std::vector<std::size_t> block_widths(const std::vector<Block>& blocks);

/// One labelled action, frames inclusive on both ends.
struct Instance {
  std::size_t start = 0;
  std::size_t end = 0;
  int class_id = 1;
  bool operator==(const Instance&) const = default;
};

struct Annotation {
  std::string video_id;
  std::size_t num_frames = 0;
  std::vector<Instance> instances;
  bool operator==(const Annotation&) const = default;
};

/// The action-class, start and end images of one video.
struct ImageTriple {
  AdImage action;
  AdImage start;
  AdImage end;
};

/// One-hot ground-truth images. Overlapping instances resolve to the one
/// with the latest start. Throws ValidationError on out-of-range frames or
/// classes, or classes < 2.
ImageTriple encode_ground_truth(const Annotation& ann, std::size_t classes);

/// Horizontal concatenation into a width C+4 combined image.
AdImage stitch(const AdImage& action, const AdImage& start, const AdImage& end);
AdImage stitch(const ImageTriple& parts);

/// Inverse of stitch. Throws ValidationError unless kind is combined and width >= 6.
ImageTriple unstitch(const AdImage& combined);

/// Every row of every block set to 1/width.
AdImage uniform_image(std::size_t rows, ImageKind kind, std::vector<Block> blocks);

struct Violation {
  std::size_t row = 0;
  std::size_t block = 0;
  double sum = 0.0;
  std::string reason;
};

/// Reports each (row, block) whose sum is off by more than tol or which has
/// an entry outside [-tol, 1 + tol]. Also flags blocks that do not tile the width.
std::vector<Violation> validate(const AdImage& img, double tol);

/// Binary PGM (P5), pixel = round(255 * clamp(value, 0, 1)).
std::string to_pgm(const AdImage& img);
void write_pgm(const std::filesystem::path& path, const AdImage& img);

}  // namespace adi::image
