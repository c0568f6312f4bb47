#include "icefuse/model/config.hpp"

#include <string>

#include "icefuse/common/error.hpp"

namespace icefuse::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (channels == 0 || chip == 0 || patch == 0 || window == 0 || hidden == 0 || heads == 0 || stages == 0 ||
      mlp_ratio == 0)
    fail("all extents must be positive");
  if (chip % (patch * window) != 0)
    fail("chip (" + std::to_string(chip) + ") must be divisible by patch*window (" + std::to_string(patch * window) +
         ")");
  if (hidden % heads != 0) fail("hidden (" + std::to_string(hidden) + ") must be divisible by heads");
  if (token_dim() % heads != 0) fail("token dim must be divisible by heads");
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) fail("dropout_keep must lie in (0, 1]");
}

}  // namespace icefuse::model
