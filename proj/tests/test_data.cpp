#include <algorithm>
#include <fstream>
#include <set>

#include "doctest.h"
#include "support.hpp"

using namespace stormcnn;

namespace {

Tensor ramp(std::size_t h, std::size_t w, std::size_t c) {
  Tensor t(Shape({std::int64_t(h), std::int64_t(w), std::int64_t(c)}));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = float(i);
  return t;
}

Dataset indexed_dataset(std::size_t n) {
  Dataset ds;
  for (std::size_t i = 0; i < n; ++i) ds.samples.push_back({Tensor({1, 1, 1}, float(i)), i % 2, std::to_string(i)});
  return ds;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("pixel scaling") {
    RawImage img{3, 1, {255, 0, 128, 255, 0, 128, 255, 0, 128}};
    const Tensor t = image_to_tensor(img);
    CHECK(t.shape() == Shape{1, 3, 3});
    CHECK(t[0] == 1.0f);
    CHECK(t[1] == 0.0f);
    CHECK(t[2] == doctest::Approx(128.0 / 255.0));
    CHECK(std::abs(t[2] - 0.50196f) < 1e-5f);
  }

  TEST_CASE("loading a class-folder layout") {
    testing::TempDir dir("load");
    testing::write_solid_fixture(dir.path(), 3, 4, 255, 0);
    { std::ofstream(dir.path() / "damage" / "notes.txt") << "not an image"; }
    { std::ofstream(dir.path() / "no_damage" / "broken.png") << "garbage"; }
    const Dataset ds = load_dataset(dir.path(), {4, 4, false});
    CHECK(ds.class_counts() == std::vector<std::size_t>{3, 3});
    CHECK(ds.skipped == 2);
    CHECK(ds.warnings.size() == 2);
    CHECK(ds.samples.front().label == 0);
    CHECK(ds.samples.front().image[0] == 1.0f);
    CHECK(ds.samples.back().label == 1);
    CHECK(ds.samples.back().image[0] == 0.0f);
    CHECK(std::is_sorted(ds.samples.begin(), ds.samples.begin() + 3,
                         [](const Sample& a, const Sample& b) { return a.path < b.path; }));
  }

  TEST_CASE("png and ppm decode to the same pixels") {
    testing::TempDir dir("codec");
    RawImage img{2, 2, {0, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 255}};
    write_png(dir.path() / "a.png", img);
    write_ppm(dir.path() / "a.ppm", img);
    CHECK(decode_image(dir.path() / "a.png").rgb == img.rgb);
    CHECK(decode_image(dir.path() / "a.ppm").rgb == img.rgb);
  }

  TEST_CASE("jpeg and grayscale png fixtures decode to RGB") {
    const std::filesystem::path fixtures = STORMCNN_FIXTURES;
    const RawImage jpg = decode_image(fixtures / "sample.jpg");
    CHECK(jpg.width == 4);
    CHECK(jpg.height == 3);
    REQUIRE(jpg.rgb.size() == 36);
    // Lossy codec: allow a few levels of error on the pure red first pixel.
    CHECK(jpg.rgb[0] >= 245);
    CHECK(jpg.rgb[1] <= 10);
    CHECK(jpg.rgb[2] <= 10);
    const RawImage gray = decode_image(fixtures / "gray.png");
    CHECK(gray.rgb == std::vector<std::uint8_t>(12, 200));
    CHECK_THROWS_AS(decode_image(fixtures / "bad_key.cfg"), InputError);
  }

  TEST_CASE("loader edge cases") {
    testing::TempDir dir("edge");
    CHECK_THROWS_AS(load_dataset(dir.path()), LayoutError);
    std::filesystem::create_directories(dir.path() / "damage");
    testing::write_solid_fixture(dir.path() / "tmp", 2, 4, 0, 0);
    std::filesystem::rename(dir.path() / "tmp" / "no_damage", dir.path() / "no_damage");
    const Dataset ds = load_dataset(dir.path(), {4, 4, false});
    CHECK(ds.class_counts() == std::vector<std::size_t>{0, 2});
    CHECK_FALSE(ds.warnings.empty());
    CHECK_THROWS_AS(load_dataset(dir.path(), {8, 8, false}), InputError);
    const Dataset resized = load_dataset(dir.path(), {8, 8, true});
    CHECK(resized.samples.front().image.shape() == Shape{8, 8, 3});
  }

  TEST_CASE("bilinear resize keeps constant images constant") {
    const Tensor flat({3, 5, 2}, 0.25f);
    const Tensor r = resize_bilinear(flat, 7, 4);
    CHECK(r.shape() == Shape{7, 4, 2});
    for (float v : r.values()) CHECK(v == doctest::Approx(0.25f));
  }

  TEST_CASE("flips and rotations") {
    Tensor halves({2, 4, 1}, {1, 1, 0, 0, 1, 1, 0, 0});
    CHECK(flip_horizontal(halves) == Tensor({2, 4, 1}, {0, 0, 1, 1, 0, 0, 1, 1}));
    const Tensor t = ramp(4, 4, 3);
    CHECK(flip_horizontal(flip_horizontal(t)) == t);
    CHECK(flip_vertical(flip_vertical(t)) == t);
    Tensor r = t;
    for (int i = 0; i < 4; ++i) r = rotate_quarter(r, 1);
    CHECK(r == t);
    CHECK(rotate_quarter(t, 2) == flip_vertical(flip_horizontal(t)));
    // Counter-clockwise: the top-right pixel moves to the top-left.
    const Tensor small({2, 2, 1}, {1, 2, 3, 4});
    CHECK(rotate_quarter(small, 1) == Tensor({2, 2, 1}, {2, 4, 1, 3}));
    CHECK_THROWS_AS(rotate_quarter(ramp(2, 3, 1), 1), ShapeError);
  }

  TEST_CASE("translation fills with zeros") {
    const Tensor t({2, 2, 1}, {1, 2, 3, 4});
    CHECK(translate(t, 0, 1) == Tensor({2, 2, 1}, {0, 1, 0, 3}));
    CHECK(translate(t, -1, 0) == Tensor({2, 2, 1}, {3, 4, 0, 0}));
    CHECK(translate(t, 0, 0) == t);
  }

  TEST_CASE("augmentation with zero probabilities is the identity") {
    AugmentConfig cfg;
    cfg.horizontal_flip_prob = cfg.vertical_flip_prob = cfg.rotate_prob = cfg.translate_prob = 0.0;
    Sample s{ramp(6, 6, 3), 1, "x"};
    Rng rng(1);
    for (int i = 0; i < 20; ++i) CHECK(augment(s, cfg, rng).image == s.image);
    CHECK(augment(s, AugmentConfig::disabled(), rng).image == s.image);
    AugmentConfig bad;
    bad.rotate_prob = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("augmentation is seeded and keeps labels") {
    Sample s{ramp(6, 6, 3), 1, "x"};
    AugmentConfig cfg;
    Rng a(5), b(5);
    bool changed = false;
    for (int i = 0; i < 20; ++i) {
      const Sample x = augment(s, cfg, a), y = augment(s, cfg, b);
      CHECK(x.image == y.image);
      CHECK(x.label == 1);
      changed = changed || !(x.image == s.image);
    }
    CHECK(changed);
  }

  TEST_CASE("batching") {
    Rng rng(2);
    const auto plan = batch_indices(10000, 64, true, rng);
    CHECK(plan.size() == 157);
    CHECK(plan.back().size() == 16);
    for (std::size_t i = 0; i + 1 < plan.size(); ++i) CHECK(plan[i].size() == 64);
    std::set<std::size_t> seen;
    for (const auto& b : plan) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10000);

    const auto ordered = batch_indices(10, 4, false, rng);
    CHECK(ordered == std::vector<std::vector<std::size_t>>{{0, 1, 2, 3}, {4, 5, 6, 7}, {8, 9}});

    Rng x(3), y(3);
    CHECK(batch_indices(100, 8, true, x) == batch_indices(100, 8, true, y));
    CHECK_THROWS_AS(batch_indices(10, 0, false, rng), ConfigError);
  }

  TEST_CASE("assembled batches stack images and one-hot labels") {
    const Dataset ds = indexed_dataset(5);
    Rng rng(4);
    const auto batches = make_batches(ds, 2, false, rng);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].images.shape() == Shape{2, 1, 1, 1});
    CHECK(batches[0].images[1] == 1.0f);
    CHECK(batches[0].labels == Tensor({2, 2}, {1, 0, 0, 1}));
    CHECK(batches[2].indices == std::vector<std::size_t>{4});
  }

  TEST_CASE("k-fold partitions") {
    Rng rng(5);
    const auto ten = kfold_split(indexed_dataset(10), 5, rng);
    REQUIRE(ten.size() == 5);
    std::multiset<std::size_t> all;
    for (const auto& f : ten) {
      CHECK(f.validation.size() == 2);
      CHECK(f.train.size() == 8);
      all.insert(f.validation.begin(), f.validation.end());
      std::set<std::size_t> both(f.train.begin(), f.train.end());
      for (auto v : f.validation) CHECK(both.count(v) == 0);
    }
    CHECK(all.size() == 10);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 10);

    std::vector<std::size_t> labels(12000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i < 6000 ? 0 : 1;
    for (const auto& f : kfold_split(labels, 5, rng)) CHECK(f.validation.size() == 2400);

    CHECK_THROWS_AS(kfold_split(indexed_dataset(3), 5, rng), ConfigError);
    CHECK_THROWS_AS(kfold_split(indexed_dataset(3), 1, rng), ConfigError);
  }

  TEST_CASE("subset and concat") {
    const Dataset ds = indexed_dataset(6);
    const std::vector<std::size_t> pick{4, 1};
    const Dataset s = subset(ds, pick);
    CHECK(s.size() == 2);
    CHECK(s.samples[0].path == "4");
    CHECK(concat(ds, s).size() == 8);
  }
}
