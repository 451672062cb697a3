#include "adi/adimage.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "adi/errors.hpp"

namespace adi::image {

const char* to_string(ImageKind kind) {
  switch (kind) {
    case ImageKind::action:
      return "action";
    case ImageKind::start:
      return "start";
    case ImageKind::end:
      return "end";
    case ImageKind::combined:
      return "combined";
  }
  return "unknown";
}

std::vector<Block> layout(ImageKind kind, std::size_t classes) {
  switch (kind) {
    case ImageKind::action:
      return {{0, classes}};
    case ImageKind::start:
    case ImageKind::end:
      return {{0, 2}};
    case ImageKind::combined:
      return {{0, classes}, {classes, 2}, {classes + 2, 2}};
  }
  return {};
}

std::vector<std::size_t> block_widths(const std::vector<Block>& blocks) {
  std::vector<std::size_t> w;
  w.reserve(blocks.size());
  for (const auto& b : blocks) w.push_back(b.width);
  return w;
}

ImageTriple encode_ground_truth(const Annotation& ann, std::size_t classes) {
  if (classes < 2) throw ValidationError("encode_ground_truth: need at least 2 classes (background + 1)");
  const std::size_t n = ann.num_frames;
  for (const auto& inst : ann.instances) {
    if (inst.start > inst.end || inst.end >= n) {
      throw ValidationError("encode_ground_truth: instance [" + std::to_string(inst.start) + ", " +
                            std::to_string(inst.end) + "] outside [0, " + std::to_string(n) + ") in " +
                            ann.video_id);
    }
    if (inst.class_id < 1 || static_cast<std::size_t>(inst.class_id) >= classes) {
      throw ValidationError("encode_ground_truth: class " + std::to_string(inst.class_id) + " outside [1, " +
                            std::to_string(classes - 1) + "] in " + ann.video_id);
    }
  }

  std::vector<Instance> ordered = ann.instances;
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Instance& a, const Instance& b) { return a.start < b.start; });

  std::vector<int> frame_class(n, 0);
  for (const auto& inst : ordered) {
    for (std::size_t f = inst.start; f <= inst.end; ++f) frame_class[f] = inst.class_id;
  }

  ImageTriple out;
  out.action = AdImage{num::Matrix(n, classes), layout(ImageKind::action, classes), ImageKind::action};
  out.start = AdImage{num::Matrix(n, 2), layout(ImageKind::start, classes), ImageKind::start};
  out.end = AdImage{num::Matrix(n, 2), layout(ImageKind::end, classes), ImageKind::end};
  for (std::size_t f = 0; f < n; ++f) {
    out.action.data(f, static_cast<std::size_t>(frame_class[f])) = 1.0;
    out.start.data(f, 1) = 1.0;
    out.end.data(f, 1) = 1.0;
  }
  for (const auto& inst : ordered) {
    out.start.data(inst.start, 0) = 1.0;
    out.start.data(inst.start, 1) = 0.0;
    out.end.data(inst.end, 0) = 1.0;
    out.end.data(inst.end, 1) = 0.0;
  }
  return out;
}

AdImage stitch(const AdImage& action, const AdImage& start, const AdImage& end) {
  const std::size_t n = action.rows();
  if (start.rows() != n || end.rows() != n) throw ShapeError("stitch: images have different row counts");
  if (start.width() != 2 || end.width() != 2) throw ShapeError("stitch: start/end images must be 2 columns wide");
  const std::size_t c = action.width();
  AdImage out{num::Matrix(n, c + 4), layout(ImageKind::combined, c), ImageKind::combined};
  for (std::size_t r = 0; r < n; ++r) {
    auto dst = out.data.row(r);
    std::copy_n(action.data.row(r).begin(), c, dst.begin());
    std::copy_n(start.data.row(r).begin(), 2, dst.begin() + static_cast<std::ptrdiff_t>(c));
    std::copy_n(end.data.row(r).begin(), 2, dst.begin() + static_cast<std::ptrdiff_t>(c + 2));
  }
  return out;
}

AdImage stitch(const ImageTriple& parts) { return stitch(parts.action, parts.start, parts.end); }

ImageTriple unstitch(const AdImage& combined) {
  if (combined.kind != ImageKind::combined) {
    throw ValidationError(std::string("unstitch: expected a combined image, got ") + to_string(combined.kind));
  }
  if (combined.width() < 6) throw ValidationError("unstitch: combined image must be at least 6 columns wide");
  const std::size_t n = combined.rows();
  const std::size_t c = combined.width() - 4;
  ImageTriple out;
  out.action = AdImage{num::Matrix(n, c), layout(ImageKind::action, c), ImageKind::action};
  out.start = AdImage{num::Matrix(n, 2), layout(ImageKind::start, c), ImageKind::start};
  out.end = AdImage{num::Matrix(n, 2), layout(ImageKind::end, c), ImageKind::end};
  for (std::size_t r = 0; r < n; ++r) {
    auto src = combined.data.row(r);
    std::copy_n(src.begin(), c, out.action.data.row(r).begin());
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(c), 2, out.start.data.row(r).begin());
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(c + 2), 2, out.end.data.row(r).begin());
  }
  return out;
}

AdImage uniform_image(std::size_t rows, ImageKind kind, std::vector<Block> blocks) {
  std::size_t width = 0;
  for (const auto& b : blocks) width = std::max(width, b.offset + b.width);
  AdImage img{num::Matrix(rows, width), std::move(blocks), kind};
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = img.data.row(r);
    for (const auto& b : img.blocks) {
      for (std::size_t c = 0; c < b.width; ++c) row[b.offset + c] = 1.0 / static_cast<double>(b.width);
    }
  }
  return img;
}

std::vector<Violation> validate(const AdImage& img, double tol) {
  std::vector<Violation> out;
  std::size_t expected_offset = 0;
  for (std::size_t b = 0; b < img.blocks.size(); ++b) {
    if (img.blocks[b].offset != expected_offset || img.blocks[b].width == 0) {
      out.push_back({0, b, 0.0, "blocks do not tile the image width"});
    }
    expected_offset = img.blocks[b].offset + img.blocks[b].width;
  }
  if (expected_offset != img.width()) out.push_back({0, img.blocks.size(), 0.0, "block widths do not sum to width"});
  if (!out.empty()) return out;

  for (std::size_t r = 0; r < img.rows(); ++r) {
    auto row = img.data.row(r);
    for (std::size_t b = 0; b < img.blocks.size(); ++b) {
      const Block& blk = img.blocks[b];
      double sum = 0.0;
      bool range_ok = true;
      for (std::size_t c = 0; c < blk.width; ++c) {
        const double v = row[blk.offset + c];
        sum += v;
        if (!(v >= -tol && v <= 1.0 + tol)) range_ok = false;
      }
      if (!range_ok) {
        out.push_back({r, b, sum, "entry outside [0, 1]"});
      } else if (!(std::abs(sum - 1.0) <= tol)) {
        out.push_back({r, b, sum, "row sum differs from 1"});
      }
    }
  }
  return out;
}

std::string to_pgm(const AdImage& img) {
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.rows()) + "\n255\n";
  out.reserve(out.size() + img.data.size());
  for (double v : img.data.data()) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped))));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const AdImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const std::string bytes = to_pgm(img);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace adi::image
