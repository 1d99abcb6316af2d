#include <doctest.h>

#include <cmath>
#include <set>

#include "depthkit/augment.hpp"
#include "test_support.hpp"

using namespace depthkit;

namespace {

TargetMap ramp_target(int h, int w) {
  TargetMap t;
  t.values = Grid<double>(h, w);
  t.valid = Mask(h, w, 1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) t.values(r, c) = 1.0 + r * w + c;
  return t;
}

}  // namespace

TEST_CASE("rng is deterministic and serialisable") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  const std::string state = a.serialize();
  const double x = a.uniform();
  Rng c;
  c.deserialize(state);
  CHECK(c.uniform() == x);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) < 7);
  }
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("policy validation") {
  AugmentPolicy p;
  CHECK(p.flip_probability == 0.5);
  CHECK(p.channel_permutation_probability == 0.25);
  CHECK_NOTHROW(p.validate());
  p.flip_probability = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p.flip_probability = 0.5;
  p.channel_permutation_probability = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("the five non-identity channel orders") {
  const auto& perms = non_identity_permutations();
  std::set<ChannelOrder> seen(perms.begin(), perms.end());
  CHECK(seen.size() == 5);
  CHECK(seen.count(ChannelOrder{0, 1, 2}) == 0);
  for (const auto& p : perms) {
    std::set<int> s(p.begin(), p.end());
    CHECK(s == std::set<int>{0, 1, 2});
  }
}

TEST_CASE("permute_channels moves whole planes") {
  Rng rng(1);
  const RgbImage img = depthkit::testing::random_image(rng, 3, 4);
  const RgbImage p = permute_channels(img, {2, 0, 1});
  CHECK(p.plane(0) == img.plane(2));
  CHECK(p.plane(1) == img.plane(0));
  CHECK(p.plane(2) == img.plane(1));
}

TEST_CASE("zero and one probabilities") {
  Rng data(2);
  const RgbImage img = depthkit::testing::random_image(data, 4, 6);
  const TargetMap t = ramp_target(4, 6);

  AugmentPolicy off{0.0, 0.0, 0};
  Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    const Augmented a = apply_policy(img, t, off, rng);
    CHECK_FALSE(a.flipped);
    CHECK(a.image == img);
    CHECK(a.target == t);
  }
  AugmentPolicy on{1.0, 1.0, 0};
  for (int i = 0; i < 50; ++i) {
    const Augmented a = apply_policy(img, t, on, rng);
    CHECK(a.flipped);
    CHECK(a.order != ChannelOrder{0, 1, 2});
    CHECK(a.target == horizontal_flip(t));
    CHECK(a.image == permute_channels(horizontal_flip(img), a.order));
  }
}

TEST_CASE("each call consumes exactly three draws") {
  Rng data(3);
  const RgbImage img = depthkit::testing::random_image(data, 2, 2);
  const TargetMap t = ramp_target(2, 2);
  for (double p : {0.0, 0.3, 1.0}) {
    Rng a(77), b(77);
    apply_policy(img, t, AugmentPolicy{p, p, 0}, a);
    b.next();
    b.next();
    b.next();
    CHECK(a == b);
  }
}

TEST_CASE("augmentation is reproducible under a seed") {
  Rng data(4);
  const RgbImage img = depthkit::testing::random_image(data, 4, 4);
  const TargetMap t = ramp_target(4, 4);
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) {
    const Augmented x = apply_policy(img, t, AugmentPolicy{}, a);
    const Augmented y = apply_policy(img, t, AugmentPolicy{}, b);
    CHECK(x.flipped == y.flipped);
    CHECK(x.order == y.order);
  }
}
