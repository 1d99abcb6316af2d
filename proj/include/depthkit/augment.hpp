#pragma once

#include <array>

#include "depthkit/core.hpp"
#include "depthkit/random.hpp"

namespace depthkit {

struct AugmentPolicy {
  double flip_probability = 0.5;
  double channel_permutation_probability = 0.25;
  std::uint64_t rng_seed = 0;

  /// Throws std::invalid_argument unless both probabilities are in [0, 1].
  void validate() const;
};

using ChannelOrder = std::array<int, 3>;

/// The five orderings of {R,G,B} other than the identity.
const std::array<ChannelOrder, 5>& non_identity_permutations();

/// output channel k takes input channel order[k].
RgbImage permute_channels(const RgbImage& img, const ChannelOrder& order);

struct Augmented {
  RgbImage image;
  TargetMap target;
  bool flipped = false;
  ChannelOrder order{0, 1, 2};
};

// Joint mirror of image and target with flip_probability, then (independently)
// a channel permutation of the image alone with
// channel_permutation_probability. Always consumes exactly three draws from
// rng.
Augmented apply_policy(const RgbImage& img, const TargetMap& target, const AugmentPolicy& policy,
                       Rng& rng);

}  // namespace depthkit
