#include <doctest.h>

#include <cmath>
#include <set>

#include "depthkit/data.hpp"
#include "depthkit/png_io.hpp"
#include "test_support.hpp"

using namespace depthkit;
using depthkit::testing::TempDir;
namespace fs = std::filesystem;

TEST_CASE("dataset presets") {
  const auto nyu = DatasetProfile::nyu();
  CHECK(nyu.d_min == 0.4);
  CHECK(nyu.d_max == 10.0);
  CHECK(nyu.max_depth_m == 10.0);
  CHECK(nyu.depth_scale == 0.001);
  CHECK_FALSE(nyu.sparse);
  CHECK_NOTHROW(nyu.validate());

  const auto kitti = DatasetProfile::kitti();
  CHECK(kitti.max_depth_m == 80.0);
  CHECK(kitti.sparse);
  REQUIRE(kitti.train_resize);
  CHECK(*kitti.train_resize == Size2{384, 1280});
  CHECK_NOTHROW(kitti.validate());
}

TEST_CASE("profile validation") {
  auto p = DatasetProfile::nyu();
  p.max_depth_m = 12.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = DatasetProfile::nyu();
  p.train_resize = Size2{375, 1242};
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("divisible by 32"), std::invalid_argument);
  p = DatasetProfile::nyu();
  p.d_min = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("profile file round trip") {
  TempDir dir;
  auto p = DatasetProfile::kitti();
  p.eval_crop = CropRect{153, 44, 218, 1152};
  p.save(dir / "profile.cfg");
  const auto q = DatasetProfile::load(dir.path());
  CHECK(q.root == dir.path());
  CHECK(q.name == "kitti");
  CHECK(q.depth_scale == p.depth_scale);
  CHECK(q.d_min == p.d_min);
  CHECK(q.d_max == p.d_max);
  CHECK(q.sparse);
  CHECK(*q.train_resize == *p.train_resize);
  CHECK(*q.eval_crop == *p.eval_crop);

  depthkit::testing::write_text(dir / "bad.cfg", "name = x\nd_mni = 1\n");
  CHECK_THROWS_WITH_AS(DatasetProfile::load(dir / "bad.cfg"), doctest::Contains(":2: unknown key 'd_mni'"),
                       ConfigError);
}

TEST_CASE("shipped NYU profile carries the evaluation crop") {
  const auto p = DatasetProfile::load(fs::path(DEPTHKIT_SOURCE_DIR) / "configs" / "nyu.profile.cfg");
  REQUIRE(p.eval_crop);
  CHECK(*p.eval_crop == CropRect{45, 41, 426, 560});
  CHECK(p.eval_crop->fits(480, 640));
}

TEST_CASE("size and crop parsing") {
  CHECK(parse_size("64x96") == Size2{64, 96});
  CHECK(parse_size("384X1280") == Size2{384, 1280});
  CHECK_THROWS_AS(parse_size("64"), std::invalid_argument);
  CHECK_THROWS_AS(parse_size("64x"), std::invalid_argument);
  CHECK_THROWS_AS(parse_size("-4x4"), std::invalid_argument);
  CHECK(parse_crop("45,41,426,560") == CropRect{45, 41, 426, 560});
  CHECK_THROWS_AS(parse_crop("1,2,3"), std::invalid_argument);
}

TEST_CASE("inpainting fills holes and keeps measurements") {
  DepthMap d(5, 6, 0.0);
  d.valid = Mask(5, 6, 0);
  d.values(0, 0) = 2.0;
  d.valid(0, 0) = 1;
  d.values(4, 5) = 4.0;
  d.valid(4, 5) = 1;
  d.values(2, 2) = 3.0;
  d.valid(2, 2) = 1;
  const DepthMap f = inpaint_depth(d);
  CHECK(f.valid_count() == 30);
  CHECK(f.values(0, 0) == 2.0);
  CHECK(f.values(4, 5) == 4.0);
  CHECK(f.values(2, 2) == 3.0);
  for (double v : f.values.values()) {
    CHECK(v >= 2.0);
    CHECK(v <= 4.0);
  }
  CHECK(inpaint_depth(f) == f);

  DepthMap none(2, 2, 0.0);
  none.valid = Mask(2, 2, 0);
  CHECK_THROWS_AS(inpaint_depth(none), std::invalid_argument);
}

TEST_CASE("inpainting a single hole takes the neighbour mean") {
  DepthMap d(3, 3, 1.0);
  d.values(0, 1) = 2.0;
  d.values(1, 0) = 3.0;
  d.values(1, 2) = 5.0;
  d.values(2, 1) = 6.0;
  d.values(1, 1) = 0.0;
  d.valid(1, 1) = 0;
  CHECK(inpaint_depth(d).values(1, 1) == doctest::Approx(4.0));
}

namespace {

Sample synthetic_sample(int h, int w, bool with_holes) {
  Rng rng(8);
  Sample s;
  s.id = "s";
  s.image = depthkit::testing::random_image(rng, h, w);
  s.depth = depthkit::testing::random_depth(rng, h, w, 0.1, 14.0);
  if (with_holes)
    for (int r = 0; r < h; r += 3)
      for (int c = 1; c < w; c += 4) {
        s.depth.values(r, c) = 0.0;
        s.depth.valid(r, c) = 0;
      }
  return s;
}

}  // namespace

TEST_CASE("training pairs: dense targets in range at half resolution") {
  const auto profile = DatasetProfile::nyu();
  const Sample s = synthetic_sample(32, 48, true);
  Rng rng(1);
  const TrainingPair p = prepare_training_pair(s, profile, nullptr, rng);
  CHECK(p.image == s.image);
  CHECK(p.target.height() == 16);
  CHECK(p.target.width() == 24);
  CHECK(p.target.max_depth_m == 10.0);
  for (std::size_t i = 0; i < p.target.values.size(); ++i) {
    CHECK(p.target.valid.values()[i] == 1);
    CHECK(p.target.values.values()[i] >= 1.0 - 1e-12);
    CHECK(p.target.values.values()[i] <= 25.0 + 1e-12);
  }
}

TEST_CASE("training pairs: sparse masks propagate unfilled") {
  auto profile = DatasetProfile::kitti();
  profile.train_resize = Size2{32, 64};
  Sample s = synthetic_sample(32, 64, true);
  Rng rng(1);
  const TrainingPair p = prepare_training_pair(s, profile, nullptr, rng);
  CHECK(p.target.height() == 16);
  CHECK(p.target.width() == 32);
  const DepthMap expected_mask_source = resize_nearest(s.depth, 16, 32);
  CHECK(p.target.valid == expected_mask_source.valid);
  CHECK(std::count(p.target.valid.values().begin(), p.target.valid.values().end(), 0) > 0);
  for (std::size_t i = 0; i < p.target.values.size(); ++i)
    if (p.target.valid.values()[i]) {
      CHECK(p.target.values.values()[i] >= 1.0 - 1e-12);
      CHECK(p.target.values.values()[i] <= 80.0 + 1e-12);
    }
}

TEST_CASE("training pairs: input resized before targets when requested") {
  auto profile = DatasetProfile::nyu();
  profile.train_resize = Size2{32, 32};
  const Sample s = synthetic_sample(48, 40, false);
  Rng rng(1);
  const TrainingPair p = prepare_training_pair(s, profile, nullptr, rng);
  CHECK(p.image.height() == 32);
  CHECK(p.target.height() == 16);
  CHECK(p.target.width() == 16);
}

TEST_CASE("training pairs: augmentation flips target with image") {
  const auto profile = DatasetProfile::nyu();
  const Sample s = synthetic_sample(16, 16, false);
  Rng a(3), b(3);
  const AugmentPolicy always{1.0, 0.0, 0};
  const TrainingPair plain = prepare_training_pair(s, profile, nullptr, a);
  const TrainingPair flipped = prepare_training_pair(s, profile, &always, b);
  CHECK(flipped.image == horizontal_flip(plain.image));
  CHECK(flipped.target == horizontal_flip(plain.target));
}

TEST_CASE("samples load from disk and check alignment") {
  TempDir dir;
  auto profile = DatasetProfile::toy();
  profile.root = dir.path();
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  Rng rng(1);
  write_rgb_png(profile.rgb_path("a"), depthkit::testing::random_image(rng, 8, 8));
  write_depth_png(profile.depth_path("a"), depthkit::testing::random_depth(rng, 4, 4, 1, 2), 0.001);
  write_rgb_png(profile.rgb_path("b"), depthkit::testing::random_image(rng, 8, 8));
  write_depth_png(profile.depth_path("b"), depthkit::testing::random_depth(rng, 5, 8, 1, 2), 0.001);
  CHECK(load_sample(profile, "a").depth.height() == 4);
  CHECK_THROWS_WITH_AS(load_sample(profile, "b"), doctest::Contains("not aligned"), std::runtime_error);
  CHECK_THROWS_WITH_AS(load_sample(profile, "c"), doctest::Contains("missing image"), std::runtime_error);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  write_manifest(dir / "m.txt", {"00001", "b", "c d"});
  depthkit::testing::write_text(dir / "crlf.txt", "x\r\n\ny\r\n");
  CHECK(read_manifest(dir / "m.txt") == std::vector<std::string>{"00001", "b", "c d"});
  CHECK(read_manifest(dir / "crlf.txt") == std::vector<std::string>{"x", "y"});
  CHECK_THROWS_AS(read_manifest(dir / "missing.txt"), std::runtime_error);
}

TEST_CASE("toy dataset contents") {
  TempDir dir;
  ToyDatasetOptions opts;
  opts.count = 8;
  opts.test_count = 2;
  make_toy_dataset(opts, dir.path());
  const auto profile = DatasetProfile::load(dir.path());
  const auto train = read_manifest(dir / "train.txt");
  const auto test = read_manifest(dir / "test.txt");
  CHECK(train.size() == 8);
  CHECK(test.size() == 2);
  CHECK(train.front() == "00000");
  for (const auto& id : train) {
    const Sample s = load_sample(profile, id);
    CHECK(s.image.height() == 64);
    CHECK(s.image.width() == 64);
    CHECK(s.depth.valid_count() == 64u * 64u);
    std::set<double> levels;
    for (double v : s.depth.values.values()) {
      CHECK(v >= profile.d_min);
      CHECK(v <= profile.d_max);
      levels.insert(v);
    }
    CHECK(levels.size() >= 2);
    CHECK_NOTHROW(s.image.check_range());
  }
}

TEST_CASE("toy dataset is byte-identical under a fixed seed") {
  TempDir a, b, c;
  ToyDatasetOptions opts;
  opts.count = 3;
  opts.seed = 17;
  make_toy_dataset(opts, a.path());
  make_toy_dataset(opts, b.path());
  opts.seed = 18;
  make_toy_dataset(opts, c.path());
  for (const char* rel : {"rgb/00000.png", "depth/00002.png", "profile.cfg", "train.txt"})
    CHECK(depthkit::testing::file_bytes(a / rel) == depthkit::testing::file_bytes(b / rel));
  CHECK(depthkit::testing::file_bytes(a / "depth/00000.png") != depthkit::testing::file_bytes(c / "depth/00000.png"));
}

TEST_CASE("toy dataset size precondition") {
  TempDir dir;
  ToyDatasetOptions opts;
  opts.height = 63;
  opts.width = 63;
  CHECK_THROWS_WITH_AS(make_toy_dataset(opts, dir.path()), doctest::Contains("divisible by 32"),
                       std::invalid_argument);
}

TEST_CASE("epoch order is a seeded permutation") {
  const auto a = epoch_order(50, 3, 0);
  CHECK(a == epoch_order(50, 3, 0));
  CHECK(a != epoch_order(50, 3, 1));
  CHECK(a != epoch_order(50, 4, 0));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("epoch order shuffles uniformly") {
  // Position counts of each element over many epochs; chi-square with
  // (n-1)^2 degrees of freedom.
  constexpr std::size_t n = 6;
  constexpr int epochs = 6000;
  std::array<std::array<int, n>, n> counts{};
  for (int e = 0; e < epochs; ++e) {
    const auto order = epoch_order(n, 99, static_cast<std::uint64_t>(e));
    for (std::size_t pos = 0; pos < n; ++pos) ++counts[order[pos]][pos];
  }
  const double expected = static_cast<double>(epochs) / n;
  double chi2 = 0.0;
  for (const auto& row : counts)
    for (int c : row) chi2 += (c - expected) * (c - expected) / expected;
  // 25 degrees of freedom: the 0.999 quantile is about 52.6.
  CHECK(chi2 < 52.6);
}

TEST_CASE("validation split") {
  std::vector<std::string> ids;
  for (int i = 0; i < 200; ++i) ids.push_back("id" + std::to_string(i));
  const auto [train, val] = split_validation(ids, 1, 0.05);
  CHECK(train.size() + val.size() == ids.size());
  CHECK(val.size() > 0);
  CHECK(val.size() < 25);
  std::set<std::string> all(train.begin(), train.end());
  for (const auto& v : val) CHECK(all.insert(v).second);
  CHECK(split_validation(ids, 1, 0.05) == std::pair{train, val});

  const auto [t2, v2] = split_validation({"a", "b"}, 1, 0.05);
  CHECK(v2.size() == 1);
  CHECK(t2.size() == 1);
  CHECK(split_validation({"a"}, 1, 0.05).second.empty());
}
