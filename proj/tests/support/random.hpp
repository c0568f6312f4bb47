#pragma once

#include <cstdint>

#include "icefuse/common/rng.hpp"
#include "icefuse/numkernel/tensor.hpp"

namespace icefuse::testing {

inline nk::Tensor random_tensor(nk::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nk::Tensor t(std::move(shape));
  Stream s(seed);
  for (double& v : t.data()) v = s.uniform(lo, hi);
  return t;
}

inline nk::Tensor random_normal(nk::Shape shape, std::uint64_t seed, double sd = 1.0) {
  nk::Tensor t(std::move(shape));
  Stream s(seed);
  for (double& v : t.data()) v = sd * s.normal();
  return t;
}

}  // namespace icefuse::testing
