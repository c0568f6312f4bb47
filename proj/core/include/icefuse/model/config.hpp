#pragma once

#include <cstddef>

namespace icefuse::model {

/// Shape hyperparameters of the high-resolution transformer. A chip of
/// chip x chip pixels is cut into patch x patch patches; window x window
/// patches form one token.
struct ModelConfig {
  std::size_t channels = 3;
  std::size_t chip = 64;
  std::size_t patch = 4;
  std::size_t window = 4;
  std::size_t hidden = 32;
  std::size_t heads = 4;
  std::size_t stages = 4;
  std::size_t mlp_ratio = 4;
  /// Keep probability of each dropout site; only used for dropout training
  /// and MC-dropout inference.
  double dropout_keep = 0.9;

  /// Throws ConfigError when the divisibility invariants fail.
  void validate() const;

  std::size_t patches_per_side() const noexcept { return chip / patch; }
  std::size_t tokens_per_side() const noexcept { return chip / (patch * window); }
  std::size_t tokens() const noexcept { return tokens_per_side() * tokens_per_side(); }
  std::size_t patches_per_token() const noexcept { return window * window; }
  std::size_t token_dim() const noexcept { return hidden * patches_per_token(); }
  std::size_t patch_features() const noexcept { return channels * patch * patch; }
  std::size_t global_key_dim() const noexcept { return token_dim() / heads; }
  std::size_t local_key_dim() const noexcept { return hidden / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace icefuse::model
