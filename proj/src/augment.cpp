#include "depthkit/augment.hpp"

#include <limits>
#include <sstream>
#include <stdexcept>

namespace depthkit {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::string Rng::serialize() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_;
  if (!in) throw std::runtime_error("Rng: malformed state");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over a combination of both inputs
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void AugmentPolicy::validate() const {
  auto ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!ok(flip_probability) || !ok(channel_permutation_probability))
    throw std::invalid_argument("AugmentPolicy: probabilities must lie in [0,1]");
}

const std::array<ChannelOrder, 5>& non_identity_permutations() {
  static const std::array<ChannelOrder, 5> perms{{
      {0, 2, 1},
      {1, 0, 2},
      {1, 2, 0},
      {2, 0, 1},
      {2, 1, 0},
  }};
  return perms;
}

RgbImage permute_channels(const RgbImage& img, const ChannelOrder& order) {
  RgbImage out(img.height(), img.width());
  for (int k = 0; k < 3; ++k) out.plane(k) = img.plane(order[static_cast<std::size_t>(k)]);
  return out;
}

Augmented apply_policy(const RgbImage& img, const TargetMap& target, const AugmentPolicy& policy,
                       Rng& rng) {
  policy.validate();
  const bool flip = rng.bernoulli(policy.flip_probability);
  const bool permute = rng.bernoulli(policy.channel_permutation_probability);
  const auto pick = rng.below(non_identity_permutations().size());

  Augmented out;
  out.flipped = flip;
  out.image = flip ? horizontal_flip(img) : img;
  out.target = flip ? horizontal_flip(target) : target;
  if (permute) {
    out.order = non_identity_permutations()[pick];
    out.image = permute_channels(out.image, out.order);
  }
  return out;
}

}  // namespace depthkit
