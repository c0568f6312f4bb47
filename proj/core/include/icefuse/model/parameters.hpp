#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "icefuse/model/config.hpp"
#include "icefuse/numkernel/tensor.hpp"

namespace icefuse::model {

/// Named weights, iterated in name order. Variational tensors are stored as
/// "<name>.mu" / "<name>.rho" pairs.
using ParameterSet = std::map<std::string, nk::Tensor, std::less<>>;

enum class ParamKind { Attention, Dense, Bias, NormGain, NormBias };

struct ParamSpec {
  std::string name;
  nk::Shape shape;
  ParamKind kind;
};

/// Every deterministic parameter the forward pass reads, in a fixed order.
std::vector<ParamSpec> parameter_specs(const ModelConfig& cfg);

/// Attention projections are the only probabilistic weights.
bool is_variational(const ParamSpec& spec) noexcept;

inline constexpr double kInitStd = 0.02;
inline constexpr double kInitRho = -5.0;

/// N(0, 0.02^2) for projections, zeros for biases, ones for norm gains.
ParameterSet init_deterministic(const ModelConfig& cfg, std::uint64_t seed);
/// Like init_deterministic, but attention projections become mu/rho pairs
/// with mu ~ N(0, 0.02^2) and rho = -5.
ParameterSet init_variational(const ModelConfig& cfg, std::uint64_t seed);

enum class Variant { Deterministic, Variational };

/// Throws ConfigError if a tensor is missing or mis-shaped for cfg.
void check_complete(const ParameterSet& params, const ModelConfig& cfg, Variant variant);
Variant detect_variant(const ParameterSet& params);

/// Posterior-mean view of a variational set (mu under the plain name); a
/// deterministic set is returned unchanged.
ParameterSet mean_weights(const ParameterSet& params);

// SICW checkpoint layout, little-endian:
//   "SICW" | u16 version (1) | u16 reserved (0) | u32 tensor count
//   per tensor: u32 name length | UTF-8 name | u32 rank | u64 extent[rank]
//               | f64 payload (row-major)
inline constexpr std::uint16_t kSicwVersion = 1;

void write_checkpoint(const ParameterSet& params, std::ostream& out);
void write_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet read_checkpoint(std::istream& in);
ParameterSet read_checkpoint(const std::filesystem::path& path);

bool bitwise_equal(const ParameterSet& a, const ParameterSet& b);

}  // namespace icefuse::model
