#include "sparsenet/tasks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sparsenet/errors.hpp"
#include "sparsenet/io.hpp"

namespace sparsenet {

TransformParams derive_transform_params(const TransformTask& task,
                                        std::uint64_t seed) {
  TransformParams params;
  params.angles_deg.resize(task.classes);
  params.shears.resize(task.classes);
  Rng rng = Rng(seed).split(1);  // stream 1: class shear coefficients
  for (int c = 0; c < task.classes; ++c) {
    params.angles_deg[c] = task.rotation_step_deg * c;
    params.shears[c] = rng.uniform(task.shear_min, task.shear_max);
  }
  return params;
}

std::vector<double> render_blob_image(int side, int cls, int classes, Rng& rng) {
  struct Gaussian {
    double cx, cy, sigma_major, sigma_minor, angle, amp;
  };
  std::vector<Gaussian> blobs;

  // Anchor blob: class-specific position on a ring, so the class (and with it
  // the transform) is recoverable from the input image alone.
  const double center = (side - 1) / 2.0;
  const double ring = 0.22 * side;
  const double phi = 2.0 * 3.14159265358979323846 * cls / classes;
  blobs.push_back({center + ring * std::cos(phi), center + ring * std::sin(phi),
                   0.12 * side, 0.12 * side, 0.0, 1.0});

  // 1..3 anisotropic distractors; their orientations give the source family
  // enough intrinsic dimension that the transform is not trivially low-rank.
  const int extra = 1 + static_cast<int>(rng.uniform_index(3));
  for (int g = 0; g < extra; ++g) {
    Gaussian b;
    b.cx = rng.uniform(0.2, 0.8) * (side - 1);
    b.cy = rng.uniform(0.2, 0.8) * (side - 1);
    b.sigma_major = rng.uniform(0.12, 0.28) * side;
    b.sigma_minor = rng.uniform(0.04, 0.09) * side;
    b.angle = rng.uniform(0.0, 3.14159265358979323846);
    b.amp = rng.uniform(0.4, 0.8);
    blobs.push_back(b);
  }

  std::vector<double> image(static_cast<std::size_t>(side) * side, 0.0);
  double peak = 0.0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double v = 0.0;
      for (const Gaussian& b : blobs) {
        const double dx = x - b.cx;
        const double dy = y - b.cy;
        const double u = std::cos(b.angle) * dx + std::sin(b.angle) * dy;
        const double w = -std::sin(b.angle) * dx + std::cos(b.angle) * dy;
        v += b.amp * std::exp(-(u * u / (b.sigma_major * b.sigma_major) +
                                w * w / (b.sigma_minor * b.sigma_minor)) /
                              2.0);
      }
      image[static_cast<std::size_t>(y) * side + x] = v;
      peak = std::max(peak, v);
    }
  }
  for (double& v : image) v /= peak;
  return image;
}

std::vector<double> rotate_shear(const std::vector<double>& image, int side,
                                 double angle_deg, double shear) {
  if (image.size() != static_cast<std::size_t>(side) * side)
    throw std::invalid_argument("rotate_shear: image size does not match side");

  const double center = (side - 1) / 2.0;
  const double phi = angle_deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(phi), s = std::sin(phi);

  std::vector<double> out(image.size(), 0.0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      // Inverse map: undo the shear, then the rotation, then sample the
      // source bilinearly with zero padding outside the frame.
      const double u = x - center;
      const double v = y - center;
      const double u1 = u - shear * v;
      const double v1 = v;
      const double xs = c * u1 + s * v1 + center;
      const double ys = -s * u1 + c * v1 + center;

      const double fx = std::floor(xs), fy = std::floor(ys);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double wx = xs - fx, wy = ys - fy;
      auto at = [&](int px, int py) -> double {
        if (px < 0 || px >= side || py < 0 || py >= side) return 0.0;
        return image[static_cast<std::size_t>(py) * side + px];
      };
      out[static_cast<std::size_t>(y) * side + x] =
          (1 - wx) * (1 - wy) * at(x0, y0) + wx * (1 - wy) * at(x0 + 1, y0) +
          (1 - wx) * wy * at(x0, y0 + 1) + wx * wy * at(x0 + 1, y0 + 1);
    }
  }
  return out;
}

std::pair<Dataset, Dataset> generate_transform_task(const TransformTask& task,
                                                    std::uint64_t seed) {
  if (task.image_side < 4)
    throw std::invalid_argument("generate_transform_task: image_side must be >= 4");
  if (task.classes < 1)
    throw std::invalid_argument("generate_transform_task: classes must be >= 1");

  const TransformParams params = derive_transform_params(task, seed);
  const int dim = task.image_side * task.image_side;

  auto make_split = [&](int per_class, std::uint64_t split_tag) {
    Dataset data;
    data.input_dim = dim;
    data.target_dim = dim;
    data.inputs.reserve(static_cast<std::size_t>(per_class) * task.classes * dim);
    data.targets.reserve(data.inputs.capacity());
    const Rng split_root = Rng(seed).split(split_tag);
    for (int cls = 0; cls < task.classes; ++cls) {
      const Rng class_root = split_root.split(static_cast<std::uint64_t>(cls));
      for (int e = 0; e < per_class; ++e) {
        Rng rng = class_root.split(static_cast<std::uint64_t>(e));
        const std::vector<double> src =
            render_blob_image(task.image_side, cls, task.classes, rng);
        const std::vector<double> dst =
            rotate_shear(src, task.image_side, params.angles_deg[cls], params.shears[cls]);
        data.inputs.insert(data.inputs.end(), src.begin(), src.end());
        data.targets.insert(data.targets.end(), dst.begin(), dst.end());
      }
    }
    return data;
  };

  // Streams 2/3: train and test example pools.
  return {make_split(task.train_per_class, 2), make_split(task.test_per_class, 3)};
}

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 4 > bytes.size())
    throw FormatError("IDX file truncated at offset " + std::to_string(offset) + ": " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

}  // namespace

std::vector<std::vector<double>> load_idx_images(const std::string& path) {
  const std::string bytes = read_file(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != 0x00000803u)
    throw FormatError("bad IDX image magic at offset 0 (expected 0x00000803): " + path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  const std::uint32_t rows = read_be32(bytes, 8, path);
  const std::uint32_t cols = read_be32(bytes, 12, path);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  const std::size_t need = 16 + static_cast<std::size_t>(count) * pixels;
  if (bytes.size() < need)
    throw FormatError("IDX image file truncated (need " + std::to_string(need) +
                      " bytes, have " + std::to_string(bytes.size()) + "): " + path);

  std::vector<std::vector<double>> images(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    images[i].resize(pixels);
    const auto* p =
        reinterpret_cast<const unsigned char*>(bytes.data() + 16 + i * pixels);
    for (std::size_t j = 0; j < pixels; ++j)
      images[i][j] = static_cast<double>(p[j]) / 255.0;
  }
  return images;
}

std::vector<int> load_idx_labels(const std::string& path) {
  const std::string bytes = read_file(path);
  const std::uint32_t magic = read_be32(bytes, 0, path);
  if (magic != 0x00000801u)
    throw FormatError("bad IDX label magic at offset 0 (expected 0x00000801): " + path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + count)
    throw FormatError("IDX label file truncated: " + path);
  std::vector<int> labels(count);
  for (std::uint32_t i = 0; i < count; ++i)
    labels[i] = static_cast<unsigned char>(bytes[8 + i]);
  return labels;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = load_idx_images(images_path);
  const auto labels = load_idx_labels(labels_path);
  if (images.size() != labels.size())
    throw FormatError("IDX image/label count mismatch: " + std::to_string(images.size()) +
                      " images vs " + std::to_string(labels.size()) + " labels");
  if (images.empty()) throw FormatError("IDX files contain no examples");

  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  Dataset data;
  data.input_dim = static_cast<int>(images[0].size());
  data.target_dim = classes;
  data.inputs.reserve(images.size() * images[0].size());
  data.targets.assign(images.size() * static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    data.inputs.insert(data.inputs.end(), images[i].begin(), images[i].end());
    data.targets[i * classes + labels[i]] = 1.0;
  }
  return data;
}

namespace {

void append_le64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t read_le64(const std::string& bytes, std::size_t offset,
                        const std::string& path) {
  if (offset + 8 > bytes.size())
    throw FormatError("dataset container truncated at offset " + std::to_string(offset) +
                      ": " + path);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i)
    v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

}  // namespace

void save_dataset_binary(const Dataset& data, const std::string& path) {
  data.validate();
  std::string out;
  out.reserve(24 + 8 * (data.inputs.size() + data.targets.size()));
  append_le64(out, static_cast<std::uint64_t>(data.count()));
  append_le64(out, static_cast<std::uint64_t>(data.input_dim));
  append_le64(out, static_cast<std::uint64_t>(data.target_dim));
  auto append_doubles = [&](const std::vector<double>& values) {
    for (double v : values) append_le64(out, std::bit_cast<std::uint64_t>(v));
  };
  append_doubles(data.inputs);
  append_doubles(data.targets);
  write_file_atomic(path, out);
}

Dataset load_dataset_binary(const std::string& path) {
  const std::string bytes = read_file(path);
  Dataset data;
  const std::uint64_t count = read_le64(bytes, 0, path);
  data.input_dim = static_cast<int>(read_le64(bytes, 8, path));
  data.target_dim = static_cast<int>(read_le64(bytes, 16, path));
  const std::size_t need =
      24 + 8 * count * (static_cast<std::size_t>(data.input_dim) + data.target_dim);
  if (bytes.size() != need)
    throw FormatError("dataset container has wrong size (expected " +
                      std::to_string(need) + " bytes): " + path);
  std::size_t offset = 24;
  auto read_doubles = [&](std::vector<double>& values, std::size_t n) {
    values.resize(n);
    for (std::size_t i = 0; i < n; ++i, offset += 8)
      values[i] = std::bit_cast<double>(read_le64(bytes, offset, path));
  };
  read_doubles(data.inputs, count * static_cast<std::size_t>(data.input_dim));
  read_doubles(data.targets, count * static_cast<std::size_t>(data.target_dim));
  data.validate();
  return data;
}

std::string dataset_csv(const Dataset& data, std::int64_t max_rows) {
  std::ostringstream out;
  out << "row";
  for (int i = 0; i < data.input_dim; ++i) out << ",in" << i;
  for (int i = 0; i < data.target_dim; ++i) out << ",out" << i;
  out << '\n';
  const std::int64_t rows =
      max_rows < 0 ? data.count() : std::min<std::int64_t>(max_rows, data.count());
  for (std::int64_t r = 0; r < rows; ++r) {
    out << r;
    for (int i = 0; i < data.input_dim; ++i)
      out << ',' << format_double(data.input_row(r)[i]);
    for (int i = 0; i < data.target_dim; ++i)
      out << ',' << format_double(data.target_row(r)[i]);
    out << '\n';
  }
  return out.str();
}

}  // namespace sparsenet
