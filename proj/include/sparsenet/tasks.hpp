#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sparsenet/rng.hpp"

namespace sparsenet {

// Row-major example matrix pair. For the transform task targets are the
// transformed images; for IDX classification data they are one-hot labels.
struct Dataset {
  int input_dim = 0;
  int target_dim = 0;
  std::vector<double> inputs;   // count x input_dim
  std::vector<double> targets;  // count x target_dim

  std::int64_t count() const {
    return input_dim == 0 ? 0 : static_cast<std::int64_t>(inputs.size()) / input_dim;
  }
  const double* input_row(std::int64_t i) const { return inputs.data() + i * input_dim; }
  const double* target_row(std::int64_t i) const { return targets.data() + i * target_dim; }
  void validate() const;  // throws std::invalid_argument
};

// Class-conditional rotation/shear regression task. Inputs are synthetic
// smooth blob images whose anchor component encodes the class, so the target
// transform is recoverable from the input alone; targets are the inputs
// rotated by the class angle (multiples of rotation_step_deg) and then
// sheared by the class coefficient (drawn once per class from
// [shear_min, shear_max] at task creation).
struct TransformTask {
  int image_side = 12;
  int classes = 10;
  int train_per_class = 100;
  int test_per_class = 20;
  double rotation_step_deg = 30.0;
  double shear_min = -0.6;
  double shear_max = 0.6;
};

struct TransformParams {
  std::vector<double> angles_deg;
  std::vector<double> shears;
};

// Class transform parameters; a pure function of (task, seed).
TransformParams derive_transform_params(const TransformTask& task,
                                        std::uint64_t seed);

// One source image: an anchor Gaussian at a class-specific position plus 1-3
// random Gaussians, normalized to peak 1.
std::vector<double> render_blob_image(int side, int cls, int classes, Rng& rng);

// Rotate about the image center, then shear horizontally; bilinear
// resampling with zero padding, output cropped to the input frame.
std::vector<double> rotate_shear(const std::vector<double>& image, int side,
                                 double angle_deg, double shear);

std::pair<Dataset, Dataset> generate_transform_task(const TransformTask& task,
                                                    std::uint64_t seed);

// IDX (big-endian) readers; pixel values scaled to [0, 1]. Errors name the
// failing byte offset.
std::vector<std::vector<double>> load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Paired image/label load with one-hot targets; image and label files must
// agree on the example count.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Binary container: little-endian u64 header (count, input_dim, target_dim)
// followed by inputs then targets as little-endian 64-bit floats, row-major.
void save_dataset_binary(const Dataset& data, const std::string& path);
Dataset load_dataset_binary(const std::string& path);

// CSV rendering for inspection; max_rows < 0 means all rows.
std::string dataset_csv(const Dataset& data, std::int64_t max_rows = -1);

}  // namespace sparsenet
