#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "sparsenet/errors.hpp"
#include "sparsenet/tasks.hpp"

using namespace sparsenet;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("sparsenet_test_" + name)).string();
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

double mass(const std::vector<double>& image) {
  return std::accumulate(image.begin(), image.end(), 0.0);
}

}  // namespace

TEST_CASE("identity transform is pixel exact") {
  Rng rng(1);
  const std::vector<double> image = render_blob_image(12, 3, 10, rng);
  const std::vector<double> out = rotate_shear(image, 12, 0.0, 0.0);
  CHECK(out == image);
}

TEST_CASE("a full turn reproduces the image within bilinear tolerance") {
  Rng rng(2);
  const std::vector<double> image = render_blob_image(12, 5, 10, rng);
  const std::vector<double> out = rotate_shear(image, 12, 360.0, 0.0);
  for (std::size_t i = 0; i < image.size(); ++i)
    CHECK(std::abs(out[i] - image[i]) < 1e-6);
}

TEST_CASE("a 90 degree turn moves pixels to the rotated coordinates") {
  const int side = 12;
  std::vector<double> image(144, 0.0);
  // Asymmetric two-pixel pattern around the center at (col, row).
  image[3 * side + 8] = 1.0;  // (x=8, y=3): offset (+2.5, -2.5)
  image[5 * side + 6] = 0.5;  // (x=6, y=5): offset (+0.5, -0.5)
  const std::vector<double> out = rotate_shear(image, side, 90.0, 0.0);
  // (u, v) -> (-v, u) about center 5.5: (8,3) -> (8,8); (6,5) -> (6,6).
  CHECK(out[8 * side + 8] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(out[6 * side + 6] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mass(out) == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("class parameters are deterministic and in range") {
  TransformTask task;
  const TransformParams a = derive_transform_params(task, 7);
  const TransformParams b = derive_transform_params(task, 7);
  CHECK(a.angles_deg == b.angles_deg);
  CHECK(a.shears == b.shears);
  for (int c = 0; c < task.classes; ++c) {
    CHECK(a.angles_deg[c] == 30.0 * c);
    CHECK(a.shears[c] >= -0.6);
    CHECK(a.shears[c] <= 0.6);
  }
  const TransformParams other = derive_transform_params(task, 8);
  CHECK(a.shears != other.shears);
}

TEST_CASE("generate_transform_task is pure and class deterministic") {
  TransformTask task;
  task.image_side = 8;
  task.classes = 4;
  task.train_per_class = 5;
  task.test_per_class = 2;
  const auto [train_a, test_a] = generate_transform_task(task, 11);
  const auto [train_b, test_b] = generate_transform_task(task, 11);
  CHECK(train_a.inputs == train_b.inputs);
  CHECK(train_a.targets == train_b.targets);
  CHECK(test_a.inputs == test_b.inputs);
  CHECK(test_a.targets == test_b.targets);
  CHECK(train_a.count() == 20);
  CHECK(test_a.count() == 8);
  CHECK(train_a.input_dim == 64);
  CHECK(train_a.target_dim == 64);

  // Same class => same transform: targets recomputed from inputs agree.
  const TransformParams params = derive_transform_params(task, 11);
  for (int cls = 0; cls < task.classes; ++cls) {
    for (int e = 0; e < task.train_per_class; ++e) {
      const std::int64_t row = cls * task.train_per_class + e;
      const std::vector<double> src(train_a.input_row(row),
                                    train_a.input_row(row) + 64);
      const std::vector<double> expect =
          rotate_shear(src, 8, params.angles_deg[cls], params.shears[cls]);
      const std::vector<double> got(train_a.target_row(row),
                                    train_a.target_row(row) + 64);
      CHECK(got == expect);
    }
  }
}

TEST_CASE("transform keeps the image mass within band") {
  TransformTask task;
  const auto [train_data, test_data] = generate_transform_task(task, 19);
  for (std::int64_t r = 0; r < train_data.count(); ++r) {
    const double in_mass = std::accumulate(
        train_data.input_row(r), train_data.input_row(r) + train_data.input_dim, 0.0);
    const double out_mass = std::accumulate(
        train_data.target_row(r), train_data.target_row(r) + train_data.target_dim,
        0.0);
    const double ratio = out_mass / in_mass;
    CHECK(ratio > 0.5);
    CHECK(ratio < 1.5);
  }
}

TEST_CASE("idx loader round trips an authored fixture") {
  // Two 2x3 images with known bytes plus matching labels.
  const std::string images = temp_path("images.idx");
  const std::string labels = temp_path("labels.idx");
  write_bytes(images, {0x00, 0x00, 0x08, 0x03,  // magic
                       0x00, 0x00, 0x00, 0x02,  // 2 images
                       0x00, 0x00, 0x00, 0x02,  // 2 rows
                       0x00, 0x00, 0x00, 0x03,  // 3 cols
                       0, 51, 102, 153, 204, 255, 255, 204, 153, 102, 51, 0});
  write_bytes(labels, {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 1});

  const auto pixels = load_idx_images(images);
  REQUIRE(pixels.size() == 2);
  CHECK(pixels[0][0] == 0.0);
  CHECK(pixels[0][1] == doctest::Approx(51.0 / 255).epsilon(1e-12));
  CHECK(pixels[0][5] == 1.0);
  CHECK(pixels[1][0] == 1.0);
  CHECK(pixels[1][5] == 0.0);

  const auto lab = load_idx_labels(labels);
  CHECK(lab == std::vector<int>{7, 1});

  const Dataset data = load_idx(images, labels);
  CHECK(data.count() == 2);
  CHECK(data.input_dim == 6);
  CHECK(data.target_dim == 8);  // one-hot up to max label 7
  CHECK(data.targets[7] == 1.0);
  CHECK(data.targets[8 + 1] == 1.0);

  std::filesystem::remove(images);
  std::filesystem::remove(labels);
}

TEST_CASE("idx loader reports malformed files") {
  const std::string bad_magic = temp_path("bad_magic.idx");
  write_bytes(bad_magic, {0x00, 0x00, 0x08, 0x77, 0x00, 0x00, 0x00, 0x00,
                          0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00});
  CHECK_THROWS_WITH_AS(load_idx_images(bad_magic), doctest::Contains("offset 0"),
                       FormatError);

  const std::string empty = temp_path("empty.idx");
  write_bytes(empty, {});
  CHECK_THROWS_WITH_AS(load_idx_images(empty), doctest::Contains("truncated"),
                       FormatError);

  const std::string truncated = temp_path("truncated.idx");
  write_bytes(truncated, {0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02,
                          0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x03, 1, 2});
  CHECK_THROWS_AS(load_idx_images(truncated), FormatError);

  // Count mismatch between images and labels.
  const std::string images = temp_path("mm_images.idx");
  const std::string labels = temp_path("mm_labels.idx");
  write_bytes(images, {0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x01,
                       0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 9, 9});
  write_bytes(labels, {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 1, 2});
  CHECK_THROWS_WITH_AS(load_idx(images, labels), doctest::Contains("mismatch"),
                       FormatError);

  for (const auto& p : {bad_magic, empty, truncated, images, labels})
    std::filesystem::remove(p);
}

TEST_CASE("dataset binary container round trips") {
  TransformTask task;
  task.image_side = 6;
  task.classes = 3;
  task.train_per_class = 4;
  task.test_per_class = 1;
  const auto [train_data, test_data] = generate_transform_task(task, 5);
  const std::string path = temp_path("dataset.bin");
  save_dataset_binary(train_data, path);
  const Dataset back = load_dataset_binary(path);
  CHECK(back.input_dim == train_data.input_dim);
  CHECK(back.target_dim == train_data.target_dim);
  CHECK(back.inputs == train_data.inputs);
  CHECK(back.targets == train_data.targets);
  std::filesystem::remove(path);

  const std::string csv = dataset_csv(train_data, 2);
  CHECK(csv.find("row,in0") == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows
}

TEST_CASE("image_side below the minimum is rejected") {
  TransformTask task;
  task.image_side = 3;
  CHECK_THROWS_AS(generate_transform_task(task, 1), std::invalid_argument);
}
