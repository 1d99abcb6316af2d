#pragma once

// Torch's logging header defines glog-style CHECK macros; include it first so
// doctest's assertions take their place.

#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE

#include <doctest.h>
