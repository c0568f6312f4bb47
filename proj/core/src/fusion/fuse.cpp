#include "icefuse/fusion/fuse.hpp"

#include "icefuse/common/error.hpp"

namespace icefuse::fusion {

const std::vector<std::string>& default_order() {
  static const std::vector<std::string> order{"amsr2", "rcm", "sentinel1"};
  return order;
}

std::vector<bool> availability(const grid::Grid& g) {
  std::vector<bool> mask(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) mask[i] = g.valid(i);
  return mask;
}

Fused fuse(const FusionStack& stack) {
  if (stack.empty()) throw ContractError("fuse: no sources");
  const auto& base = stack.front().sic;
  for (const auto& s : stack) {
    if (!s.sic.same_extent(base) || !s.sigma.same_extent(base))
      throw DimensionError("fuse: source '" + s.id + "' is " + std::to_string(s.sic.height()) + "x" +
                           std::to_string(s.sic.width()) + ", expected " + std::to_string(base.height()) + "x" +
                           std::to_string(base.width()));
    for (std::size_t i = 0; i < s.sic.size(); ++i)
      if (s.sic.valid(i) != s.sigma.valid(i))
        throw ContractError("fuse: source '" + s.id + "' has different sic and sigma nodata masks");
  }

  Fused out{stack.front().sic, stack.front().sigma};
  for (std::size_t k = 1; k < stack.size(); ++k) {
    const auto& s = stack[k];
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (!s.sic.valid(i)) continue;
      out.sic.set(i, s.sic[i]);
      out.sigma.set(i, s.sigma[i]);
    }
  }
  return out;
}

}  // namespace icefuse::fusion
